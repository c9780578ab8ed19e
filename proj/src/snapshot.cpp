#include "tgrag/snapshot.hpp"

#include "tgrag/error.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <regex>
#include <sstream>

#include <unistd.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tgrag {

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kEntities = "entities.jsonl";
constexpr const char* kEdges = "edges.jsonl";
constexpr const char* kTimeNodes = "time_nodes.jsonl";
constexpr const char* kChunks = "chunks.jsonl";
constexpr const char* kDocuments = "documents.jsonl";
constexpr const char* kReports = "reports.jsonl";
constexpr const char* kEdgeVectors = "edge_vectors";
constexpr const char* kEntityVectors = "entity_vectors";
constexpr const char* kCurrent = "CURRENT";

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::kCorruptSnapshot, what); }

// Writes bytes to path and flushes them to disk.
void write_file(const fs::path& path, const std::string& bytes) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw Error(ErrorCode::kIo, "cannot create " + path.string());
    const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size() && std::fflush(f) == 0 &&
                    ::fsync(fileno(f)) == 0;
    if (std::fclose(f) != 0 || !ok) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

void sync_dir(const fs::path& dir) {
    if (std::FILE* f = std::fopen(dir.c_str(), "r")) {
        ::fsync(fileno(f));
        std::fclose(f);
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string created_stamp() {
    std::time_t t = 0;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
        t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    } else {
        t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json stamps(const std::set<Timestamp>& ts) {
    auto a = json::array();
    for (const auto& t : ts) a.push_back(t.to_string());
    return a;
}

template <typename Id>
json ids(const std::set<Id>& s) {
    auto a = json::array();
    for (auto id : s) a.push_back(static_cast<std::uint64_t>(id));
    return a;
}

std::string jsonl_entities(const BiLevelGraph& g) {
    std::string out;
    for (const auto& [id, e] : g.entities()) {
        out += json{{"id", raw(id)}, {"name", e.name}, {"description", e.description},
                    {"source_chunks", e.source_chunks}}
                   .dump() +
               "\n";
    }
    return out;
}

std::string jsonl_edges(const BiLevelGraph& g) {
    std::string out;
    for (const auto& [id, e] : g.edges()) {
        out += json{{"id", raw(id)},
                    {"head", raw(e.head)},
                    {"tail", raw(e.tail)},
                    {"relation", e.relation},
                    {"timestamp", e.timestamp.to_string()},
                    {"source_chunk", e.source_chunk}}
                   .dump() +
               "\n";
    }
    return out;
}

std::string jsonl_time_nodes(const BiLevelGraph& g) {
    std::string out;
    for (const auto& [t, n] : g.time_nodes()) {
        out += json{{"id", t.to_string()},
                    {"granularity", std::string(granularity_name(t.granularity))},
                    {"parent", n.parent ? json(n.parent->to_string()) : json(nullptr)},
                    {"children", stamps(n.children)},
                    {"edges", ids(n.attached_edges)}}
                   .dump() +
               "\n";
    }
    return out;
}

std::string jsonl_chunks(const ChunkStore& chunks) {
    std::string out;
    for (const auto& [id, c] : chunks) {
        out += json{{"id", id},
                    {"doc_id", c.doc_id},
                    {"token_begin", c.token_begin},
                    {"token_end", c.token_end},
                    {"text", c.text},
                    {"extracted_edges", ids(c.extracted_edges)}}
                   .dump() +
               "\n";
    }
    return out;
}

std::string jsonl_documents(const std::map<std::string, DocumentRecord>& docs) {
    std::string out;
    for (const auto& [id, d] : docs) {
        out += json{{"id", id}, {"metadata", d.metadata}, {"chunks", d.chunks}}.dump() + "\n";
    }
    return out;
}

std::string jsonl_reports(const ReportStore& store) {
    std::string out;
    for (const auto& [t, r] : store.reports) {
        out += json{{"time_id", t.to_string()},
                    {"text", r.text},
                    {"token_count", r.token_count},
                    {"input_fingerprint", r.input_fingerprint},
                    {"generated_at", r.generated_at}}
                   .dump() +
               "\n";
    }
    return out;
}

} // namespace

json to_json(const SnapshotCounts& c) {
    return {{"entities", c.entities},
            {"edges", c.edges},
            {"chunks", c.chunks},
            {"documents", c.documents},
            {"reports", c.reports},
            {"edge_vectors", c.edge_vectors},
            {"entity_vectors", c.entity_vectors},
            {"time_nodes",
             {{"year", c.time_nodes[0]}, {"quarter", c.time_nodes[1]}, {"month", c.time_nodes[2]}, {"day", c.time_nodes[3]}}}};
}

namespace {

SnapshotCounts counts_from_json(const json& j) {
    SnapshotCounts c;
    c.entities = j.at("entities").get<std::size_t>();
    c.edges = j.at("edges").get<std::size_t>();
    c.chunks = j.at("chunks").get<std::size_t>();
    c.documents = j.at("documents").get<std::size_t>();
    c.reports = j.at("reports").get<std::size_t>();
    c.edge_vectors = j.at("edge_vectors").get<std::size_t>();
    c.entity_vectors = j.at("entity_vectors").get<std::size_t>();
    const auto& t = j.at("time_nodes");
    c.time_nodes = {t.at("year").get<std::size_t>(), t.at("quarter").get<std::size_t>(),
                    t.at("month").get<std::size_t>(), t.at("day").get<std::size_t>()};
    return c;
}

// Calls fn(record, "<file>:<line>") for every non-blank line.
template <typename Fn>
void for_each_record(const fs::path& dir, const char* name, Fn&& fn) {
    const auto path = dir / name;
    std::ifstream in(path, std::ios::binary);
    if (!in) corrupt(std::string(name) + ": missing");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = std::string(name) + ":" + std::to_string(lineno);
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) corrupt(where + ": not a JSON object");
        try {
            fn(j, where);
        } catch (const json::exception& e) {
            corrupt(where + ": " + e.what());
        } catch (const Error& e) {
            if (e.code() == ErrorCode::kCorruptSnapshot) throw;
            corrupt(where + ": " + e.what());
        }
    }
}

template <typename Id>
std::set<Id> id_set(const json& a) {
    std::set<Id> out;
    for (const auto& v : a) out.insert(Id{v.get<std::uint64_t>()});
    return out;
}

std::set<Timestamp> stamp_set(const json& a) {
    std::set<Timestamp> out;
    for (const auto& v : a) out.insert(parse_timestamp(v.get<std::string>()));
    return out;
}

int snapshot_number(const std::string& name) {
    static const std::regex re(R"(snap-(\d{6,}))");
    std::smatch m;
    if (!std::regex_match(name, m, re)) return -1;
    return std::stoi(m[1]);
}

std::string snapshot_name(int n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "snap-%06d", n);
    return buf;
}

} // namespace

SnapshotCounts snapshot_counts(const IndexState& state) {
    SnapshotCounts c;
    const auto gs = graph_stats(state.graph);
    c.entities = gs.entities;
    c.edges = gs.edges;
    c.time_nodes = gs.time_nodes;
    c.chunks = state.chunks.size();
    c.documents = state.documents.size();
    c.reports = state.reports.reports.size();
    c.edge_vectors = state.edge_vectors.size();
    c.entity_vectors = state.entity_vectors.size();
    return c;
}

json to_json(const IndexConfig& cfg) {
    return {{"chunk_size", cfg.chunk_size},
            {"overlap", cfg.overlap},
            {"extraction_max_output_tokens", cfg.extraction_max_output_tokens},
            {"extract_workers", cfg.extract_workers},
            {"reports",
             {{"input_limit_tokens", cfg.reports.input_limit_tokens},
              {"max_output_tokens", cfg.reports.max_output_tokens},
              {"workers", cfg.reports.workers}}}};
}

IndexConfig index_config_from_json(const json& j) {
    IndexConfig cfg;
    cfg.chunk_size = j.value("chunk_size", cfg.chunk_size);
    cfg.overlap = j.value("overlap", cfg.overlap);
    cfg.extraction_max_output_tokens = j.value("extraction_max_output_tokens", cfg.extraction_max_output_tokens);
    cfg.extract_workers = j.value("extract_workers", cfg.extract_workers);
    if (j.contains("reports")) {
        const auto& r = j.at("reports");
        cfg.reports.input_limit_tokens = r.value("input_limit_tokens", cfg.reports.input_limit_tokens);
        cfg.reports.max_output_tokens = r.value("max_output_tokens", cfg.reports.max_output_tokens);
        cfg.reports.workers = r.value("workers", cfg.reports.workers);
    }
    return cfg;
}

std::string config_hash(const IndexConfig& cfg) {
    // Worker counts do not affect index content.
    const json content = {{"chunk_size", cfg.chunk_size},
                          {"overlap", cfg.overlap},
                          {"extraction_max_output_tokens", cfg.extraction_max_output_tokens},
                          {"input_limit_tokens", cfg.reports.input_limit_tokens},
                          {"report_max_output_tokens", cfg.reports.max_output_tokens}};
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : content.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

fs::path snapshot_directory(const fs::path& dir) {
    const auto pointer = dir / kCurrent;
    if (fs::exists(pointer)) {
        std::string name = read_file(pointer);
        while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.pop_back();
        if (name.empty() || name.find('/') != std::string::npos) corrupt(std::string(kCurrent) + ": bad pointer");
        const auto target = dir / name;
        if (!fs::is_directory(target)) corrupt(std::string(kCurrent) + ": points at missing " + name);
        return target;
    }
    if (fs::exists(dir / kManifest)) return dir;
    corrupt(std::string(kManifest) + ": missing in " + dir.string());
}

SnapshotManifest read_manifest(const fs::path& dir) {
    const auto snap = snapshot_directory(dir);
    const auto text = read_file(snap / kManifest);
    auto j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) corrupt(std::string(kManifest) + ": not a JSON object");
    SnapshotManifest m;
    m.location = snap;
    try {
        if (j.at("format").get<std::string>() != kSnapshotFormat) corrupt(std::string(kManifest) + ": unknown format");
        m.version = j.at("version").get<int>();
        if (m.version != kSnapshotVersion) {
            throw Error(ErrorCode::kVersion, std::string(kManifest) + ": snapshot version " +
                                                 std::to_string(m.version) + ", expected " +
                                                 std::to_string(kSnapshotVersion));
        }
        m.created = j.at("created").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.config = index_config_from_json(j.at("config"));
        m.counts = counts_from_json(j.at("counts"));
        m.report_version = j.at("report_version").get<std::uint64_t>();
    } catch (const json::exception& e) {
        corrupt(std::string(kManifest) + ": " + e.what());
    }
    return m;
}

SnapshotManifest save_snapshot(const IndexState& state, const fs::path& index_dir, const SaveOptions& opts) {
    if (auto problems = state.graph.check_integrity(); !problems.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "refusing to save inconsistent graph: " + problems.front());
    }
    fs::create_directories(index_dir);
    int next = 1;
    for (const auto& entry : fs::directory_iterator(index_dir)) {
        auto name = entry.path().filename().string();
        if (name.size() > 5 && name.front() == '.' && name.substr(name.size() - 4) == ".tmp") {
            name = name.substr(1, name.size() - 5);
        }
        next = std::max(next, snapshot_number(name) + 1);
    }
    const std::string name = snapshot_name(next);
    const fs::path tmp = index_dir / ("." + name + ".tmp");
    const fs::path final_dir = index_dir / name;

    SnapshotManifest m;
    m.created = created_stamp();
    m.config = state.config;
    m.config_hash = config_hash(state.config);
    m.counts = snapshot_counts(state);
    m.report_version = state.reports.version;
    m.location = final_dir;

    auto written = [&](const std::string& file) {
        if (opts.after_file_written) opts.after_file_written(file);
    };
    try {
        fs::remove_all(tmp);
        fs::create_directories(tmp);
        const std::pair<const char*, std::string> files[] = {
            {kEntities, jsonl_entities(state.graph)}, {kEdges, jsonl_edges(state.graph)},
            {kTimeNodes, jsonl_time_nodes(state.graph)}, {kChunks, jsonl_chunks(state.chunks)},
            {kDocuments, jsonl_documents(state.documents)}, {kReports, jsonl_reports(state.reports)},
        };
        for (const auto& [file, bytes] : files) {
            write_file(tmp / file, bytes);
            written(file);
        }
        for (const auto* base : {kEdgeVectors, kEntityVectors}) {
            const auto& index = std::string(base) == kEdgeVectors ? state.edge_vectors : state.entity_vectors;
            write_vectors(index, tmp / (std::string(base) + ".bin"), tmp / (std::string(base) + ".json"));
            written(std::string(base) + ".bin");
            written(std::string(base) + ".json");
        }
        const json manifest = {{"format", std::string(kSnapshotFormat)},
                               {"version", m.version},
                               {"created", m.created},
                               {"config_hash", m.config_hash},
                               {"config", to_json(m.config)},
                               {"counts", to_json(m.counts)},
                               {"report_version", m.report_version}};
        write_file(tmp / kManifest, manifest.dump(2) + "\n");
        written(kManifest);
        sync_dir(tmp);
        fs::rename(tmp, final_dir);
        sync_dir(index_dir);

        const auto pointer_tmp = index_dir / (std::string(kCurrent) + ".tmp");
        write_file(pointer_tmp, name + "\n");
        written(std::string(kCurrent) + ".tmp");
        fs::rename(pointer_tmp, index_dir / kCurrent);
        sync_dir(index_dir);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        fs::remove_all(final_dir, ec);
        fs::remove(index_dir / (std::string(kCurrent) + ".tmp"), ec);
        throw;
    }

    if (!opts.keep_previous) {
        std::error_code ec;
        for (const auto& entry : fs::directory_iterator(index_dir)) {
            const auto n = entry.path().filename().string();
            if (n != name && (snapshot_number(n) >= 0 || (n.front() == '.' && n.size() > 4 && n.substr(n.size() - 4) == ".tmp"))) {
                fs::remove_all(entry.path(), ec);
            }
        }
    }
    return m;
}

IndexState load_snapshot(const fs::path& dir) {
    const auto m = read_manifest(dir);
    const auto& snap = m.location;

    std::vector<Entity> entities;
    for_each_record(snap, kEntities, [&](const json& j, const std::string&) {
        Entity e;
        e.id = EntityId{j.at("id").get<std::uint64_t>()};
        e.name = j.at("name").get<std::string>();
        e.description = j.at("description").get<std::string>();
        e.source_chunks = j.at("source_chunks").get<std::set<ChunkId>>();
        entities.push_back(std::move(e));
    });
    std::vector<TemporalEdge> edges;
    for_each_record(snap, kEdges, [&](const json& j, const std::string&) {
        TemporalEdge e;
        e.id = EdgeId{j.at("id").get<std::uint64_t>()};
        e.head = EntityId{j.at("head").get<std::uint64_t>()};
        e.tail = EntityId{j.at("tail").get<std::uint64_t>()};
        e.relation = j.at("relation").get<std::string>();
        e.timestamp = parse_timestamp(j.at("timestamp").get<std::string>());
        e.source_chunk = j.at("source_chunk").get<std::string>();
        edges.push_back(std::move(e));
    });
    std::vector<TimeNode> nodes;
    for_each_record(snap, kTimeNodes, [&](const json& j, const std::string&) {
        TimeNode n;
        n.id = parse_timestamp(j.at("id").get<std::string>());
        if (!j.at("parent").is_null()) n.parent = parse_timestamp(j.at("parent").get<std::string>());
        n.children = stamp_set(j.at("children"));
        n.attached_edges = id_set<EdgeId>(j.at("edges"));
        nodes.push_back(std::move(n));
    });

    IndexState state;
    state.config = m.config;
    try {
        state.graph = BiLevelGraph::restore(std::move(entities), std::move(edges), std::move(nodes));
    } catch (const Error& e) {
        corrupt(std::string("graph: ") + e.what());
    }

    for_each_record(snap, kChunks, [&](const json& j, const std::string& where) {
        Chunk c;
        c.id = j.at("id").get<std::string>();
        c.doc_id = j.at("doc_id").get<std::string>();
        c.token_begin = j.at("token_begin").get<std::size_t>();
        c.token_end = j.at("token_end").get<std::size_t>();
        c.text = j.at("text").get<std::string>();
        c.extracted_edges = id_set<EdgeId>(j.at("extracted_edges"));
        if (c.token_end < c.token_begin) corrupt(where + ": token range reversed");
        for (EdgeId e : c.extracted_edges) {
            if (!state.graph.edges().count(e)) corrupt(where + ": unknown edge " + std::to_string(raw(e)));
        }
        const ChunkId id = c.id;
        if (!state.chunks.emplace(id, std::move(c)).second) corrupt(where + ": duplicate chunk " + id);
    });
    for_each_record(snap, kDocuments, [&](const json& j, const std::string& where) {
        DocumentRecord d;
        d.id = j.at("id").get<std::string>();
        d.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
        d.chunks = j.at("chunks").get<std::vector<ChunkId>>();
        for (const auto& c : d.chunks) {
            if (!state.chunks.count(c)) corrupt(where + ": unknown chunk " + c);
        }
        const auto id = d.id;
        if (!state.documents.emplace(id, std::move(d)).second) corrupt(where + ": duplicate document " + id);
    });
    for_each_record(snap, kReports, [&](const json& j, const std::string& where) {
        TimeReport r;
        r.time_id = parse_timestamp(j.at("time_id").get<std::string>());
        r.text = j.at("text").get<std::string>();
        r.token_count = j.at("token_count").get<std::size_t>();
        r.input_fingerprint = j.at("input_fingerprint").get<std::string>();
        r.generated_at = j.at("generated_at").get<std::uint64_t>();
        if (!state.graph.find_time_node(r.time_id)) corrupt(where + ": report for unknown node " + r.time_id.to_string());
        const auto t = r.time_id;
        if (!state.reports.reports.emplace(t, std::move(r)).second) corrupt(where + ": duplicate report " + t.to_string());
    });
    state.reports.version = m.report_version;
    for (const auto& [id, e] : state.graph.edges()) {
        if (!state.chunks.count(e.source_chunk)) {
            corrupt(std::string(kEdges) + ": edge " + std::to_string(raw(id)) + " cites unknown chunk " + e.source_chunk);
        }
    }

    state.edge_vectors = read_vectors(snap / "edge_vectors.bin", snap / "edge_vectors.json");
    state.entity_vectors = read_vectors(snap / "entity_vectors.bin", snap / "entity_vectors.json");
    for (const auto& [id, v] : state.edge_vectors.entries()) {
        if (!state.graph.edges().count(EdgeId{id})) corrupt("edge_vectors.json: unknown edge " + std::to_string(id));
    }
    for (const auto& [id, v] : state.entity_vectors.entries()) {
        if (!state.graph.entities().count(EntityId{id})) {
            corrupt("entity_vectors.json: unknown entity " + std::to_string(id));
        }
    }

    const auto actual = snapshot_counts(state);
    if (!(actual == m.counts)) corrupt(std::string(kManifest) + ": counts do not match snapshot contents");
    return state;
}

} // namespace tgrag
