#include "doctest.h"

#include "fixtures.hpp"
#include "synthetic.hpp"
#include "tgrag/error.hpp"
#include "tgrag/snapshot.hpp"

#include <json.hpp>

using namespace tgrag;
namespace fs = std::filesystem;

namespace {

IndexState synthetic_state(std::size_t n, std::uint64_t seed) {
    const auto corpus = testing::make_synthetic_corpus(n, seed);
    MockLlmProvider llm;
    testing::script_mock(llm, corpus);
    MockEmbeddingProvider emb(32);
    return index_corpus(corpus.docs, IndexConfig{}, IngestContext{llm, emb});
}

ErrorCode load_error(const fs::path& dir) {
    try {
        load_snapshot(dir);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("load succeeded");
    return ErrorCode::kInvalidArgument;
}

std::string load_message(const fs::path& dir) {
    try {
        load_snapshot(dir);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("round trip on the WD fixture and synthetic corpora") {
    testing::TempDir dir("snap");
    auto llm = testing::wd_mock();
    MockEmbeddingProvider emb;
    const auto wd = index_corpus(testing::wd_corpus(), IndexConfig{}, IngestContext{*llm, emb});
    const auto m = save_snapshot(wd, dir / "wd");
    CHECK(load_snapshot(dir / "wd") == wd);
    CHECK(load_snapshot(m.location) == wd);
    CHECK(read_manifest(dir / "wd").counts == snapshot_counts(wd));
    CHECK(m.counts.edges == 10);
    CHECK(m.location.filename() == "snap-000001");
    CHECK(testing::read_file(dir / "wd" / "CURRENT") == "snap-000001\n");

    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto s = synthetic_state(15, seed);
        const auto p = dir / ("syn" + std::to_string(seed));
        save_snapshot(s, p);
        CHECK(load_snapshot(p) == s);
    }
}

TEST_CASE("update then save and load equals the in-memory state") {
    testing::TempDir dir("snap");
    const auto corpus = testing::make_synthetic_corpus(20, 12);
    MockLlmProvider llm;
    testing::script_mock(llm, corpus);
    MockEmbeddingProvider emb(32);
    const IngestContext ctx{llm, emb};
    const std::vector<Document> d1(corpus.docs.begin(), corpus.docs.begin() + 10);
    const std::vector<Document> d2(corpus.docs.begin() + 10, corpus.docs.end());
    auto state = index_corpus(d1, IndexConfig{}, ctx);
    save_snapshot(state, dir.path());
    auto loaded = load_snapshot(dir.path());
    update_corpus(state, d2, ctx);
    update_corpus(loaded, d2, ctx);
    CHECK(loaded == state);
    save_snapshot(state, dir.path());
    CHECK(load_snapshot(dir.path()) == state);
    // older snapshot pruned
    CHECK_FALSE(fs::exists(dir / "snap-000001"));
    CHECK(fs::exists(dir / "snap-000002"));
}

TEST_CASE("fault injection never corrupts the committed snapshot") {
    const auto before = synthetic_state(8, 5);
    const auto after = synthetic_state(12, 6);
    const std::vector<std::string> files = {"entities.jsonl", "edges.jsonl", "time_nodes.jsonl", "chunks.jsonl",
                                            "documents.jsonl", "reports.jsonl", "edge_vectors.bin", "edge_vectors.json",
                                            "entity_vectors.bin", "entity_vectors.json", "manifest.json", "CURRENT.tmp"};
    for (const auto& victim : files) {
        CAPTURE(victim);
        testing::TempDir dir("fault");
        save_snapshot(before, dir.path());
        SaveOptions opts;
        std::vector<std::string> seen;
        opts.after_file_written = [&](const std::string& f) {
            seen.push_back(f);
            if (f == victim) throw std::runtime_error("injected");
        };
        CHECK_THROWS(save_snapshot(after, dir.path(), opts));
        CHECK(seen.back() == victim);
        CHECK(load_snapshot(dir.path()) == before);
        std::size_t entries = 0;
        for (const auto& e : fs::directory_iterator(dir.path())) {
            (void)e;
            ++entries;
        }
        CHECK(entries == 2); // CURRENT and the committed snapshot
        save_snapshot(after, dir.path());
        CHECK(load_snapshot(dir.path()) == after);
    }
}

TEST_CASE("keep_previous retains older snapshots") {
    testing::TempDir dir("keep");
    const auto s = synthetic_state(4, 2);
    save_snapshot(s, dir.path());
    SaveOptions keep;
    keep.keep_previous = true;
    save_snapshot(s, dir.path(), keep);
    CHECK(fs::exists(dir / "snap-000001"));
    CHECK(load_snapshot(dir / "snap-000001") == s);
    CHECK(read_manifest(dir.path()).location.filename() == "snap-000002");
}

TEST_CASE("corruption is reported with file and line") {
    testing::TempDir dir("corrupt");
    const auto s = synthetic_state(6, 4);
    const auto m = save_snapshot(s, dir.path());
    const auto snap = m.location;

    const auto edges = testing::read_file(snap / "edges.jsonl");
    testing::write_file(snap / "edges.jsonl", edges + "{not json\n");
    CHECK(load_error(dir.path()) == ErrorCode::kCorruptSnapshot);
    CHECK(load_message(dir.path()).find("edges.jsonl:") != std::string::npos);

    fs::remove(snap / "edges.jsonl");
    CHECK(load_error(dir.path()) == ErrorCode::kCorruptSnapshot);
    CHECK(load_message(dir.path()).find("edges.jsonl") != std::string::npos);
    testing::write_file(snap / "edges.jsonl", edges);
    CHECK(load_snapshot(dir.path()) == s);

    // drop one edge: counts disagree with the manifest
    testing::write_file(snap / "edges.jsonl", edges.substr(edges.find('\n') + 1));
    CHECK(load_error(dir.path()) == ErrorCode::kCorruptSnapshot);
    testing::write_file(snap / "edges.jsonl", edges);

    auto manifest = nlohmann::json::parse(testing::read_file(snap / "manifest.json"));
    manifest["version"] = 99;
    testing::write_file(snap / "manifest.json", manifest.dump());
    CHECK(load_error(dir.path()) == ErrorCode::kVersion);

    testing::write_file(dir / "CURRENT", "snap-000042\n");
    CHECK(load_error(dir.path()) == ErrorCode::kCorruptSnapshot);
    CHECK(load_error(dir / "missing") == ErrorCode::kCorruptSnapshot);
}

TEST_CASE("config json and hash") {
    IndexConfig a;
    IndexConfig b;
    b.extract_workers = 8;
    b.reports.workers = 3;
    CHECK(config_hash(a) == config_hash(b));
    b.chunk_size = 600;
    CHECK(config_hash(a) != config_hash(b));
    CHECK(index_config_from_json(to_json(b)) == b);
}

TEST_CASE("created honours SOURCE_DATE_EPOCH") {
    testing::TempDir dir("epoch");
    ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
    const auto m = save_snapshot(synthetic_state(3, 1), dir.path());
    ::unsetenv("SOURCE_DATE_EPOCH");
    CHECK(m.created == "1970-01-02T00:00:00Z");
}
