#pragma once

#include "tgrag/ingest.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>

namespace tgrag {

inline constexpr int kSnapshotVersion = 1;
inline constexpr std::string_view kSnapshotFormat = "tgrag-snapshot";

struct SnapshotCounts {
    std::size_t entities = 0;
    std::size_t edges = 0;
    std::size_t chunks = 0;
    std::size_t documents = 0;
    std::size_t reports = 0;
    std::size_t edge_vectors = 0;
    std::size_t entity_vectors = 0;
    // Indexed by Granularity.
    std::array<std::size_t, 4> time_nodes{};

    std::size_t total_time_nodes() const {
        return time_nodes[0] + time_nodes[1] + time_nodes[2] + time_nodes[3];
    }
    bool operator==(const SnapshotCounts&) const = default;
};

SnapshotCounts snapshot_counts(const IndexState& state);
nlohmann::json to_json(const SnapshotCounts& c);

struct SnapshotManifest {
    int version = kSnapshotVersion;
    std::string created; // UTC, ISO 8601
    std::string config_hash;
    IndexConfig config;
    SnapshotCounts counts;
    std::uint64_t report_version = 0;
    // Directory holding the snapshot files.
    std::filesystem::path location;
};

nlohmann::json to_json(const IndexConfig& cfg);
IndexConfig index_config_from_json(const nlohmann::json& j);
std::string config_hash(const IndexConfig& cfg);

struct SaveOptions {
    // Called after each file of the new snapshot is complete, including
    // the pointer file before it is committed. Throwing aborts the save.
    std::function<void(const std::string& file)> after_file_written;
    // Older snapshot directories are removed after a successful commit
    // unless this is set.
    bool keep_previous = false;
};

// Writes state into a fresh snapshot directory under index_dir and then
// atomically repoints index_dir/CURRENT at it. A failure at any point
// leaves the previously committed snapshot as the one load() returns.
SnapshotManifest save_snapshot(const IndexState& state, const std::filesystem::path& index_dir,
                               const SaveOptions& opts = {});

// dir is either an index directory with a CURRENT pointer or a snapshot
// directory holding manifest.json. Integrity is re-checked. Throws
// Error(kCorruptSnapshot) naming the file (and line) at fault, or
// Error(kVersion) for an unsupported format version.
IndexState load_snapshot(const std::filesystem::path& dir);

SnapshotManifest read_manifest(const std::filesystem::path& dir);

// Resolves an index or snapshot directory to the snapshot directory.
std::filesystem::path snapshot_directory(const std::filesystem::path& dir);

} // namespace tgrag
