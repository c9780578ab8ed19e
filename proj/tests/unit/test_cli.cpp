#include "doctest.h"

#include "fixtures.hpp"
#include "tgrag/cli.hpp"
#include "tgrag/snapshot.hpp"

#include <json.hpp>

#include <sstream>

using namespace tgrag;
using nlohmann::json;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string fixture(const std::string& rel) { return (testing::fixture_dir() / "wd" / rel).string(); }

// Index of the full WD corpus: base then update with the new documents.
struct WdIndex {
    testing::TempDir dir{"cli"};
    std::string idx = (dir / "idx").string();
    WdIndex() {
        REQUIRE(cli({"-d", idx, "--mock-fixture", fixture("mock.jsonl"), "index", fixture("base")}).code == 0);
        REQUIRE(cli({"-d", idx, "--mock-fixture", fixture("mock.jsonl"), "update", fixture("new")}).code == 0);
    }
    Run run(std::vector<std::string> args) const {
        std::vector<std::string> full = {"-d", idx, "--mock-fixture", fixture("mock.jsonl")};
        full.insert(full.end(), args.begin(), args.end());
        return cli(full);
    }
};

} // namespace

TEST_CASE("usage errors exit 2") {
    CHECK(cli({}).code == 2);
    CHECK(cli({"--no-such-flag", "stats"}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"query"}).code == 2);
    CHECK(cli({"--chunk-fraction", "1.5", "stats"}).code == 2);
    CHECK(cli({"--chunk-fraction", "0", "stats"}).code == 2);
    CHECK(cli({"--scoring-mode", "BOGUS", "stats"}).code == 2);
    CHECK(cli({"--overlap", "1200", "stats"}).code == 2);
    const auto help = cli({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("query") != std::string::npos);
}

TEST_CASE("pipeline errors exit 1") {
    testing::TempDir dir("cli");
    const auto r = cli({"-d", (dir / "nothing").string(), "stats"});
    CHECK(r.code == 1);
    CHECK(r.err.find("corrupt_snapshot") != std::string::npos);
    // extraction has no script for these chunks
    CHECK(cli({"-d", (dir / "i").string(), "index", fixture("base")}).code == 1);
}

TEST_CASE("index, stats and query") {
    WdIndex wd;
    const auto stats = wd.run({"--json", "stats"});
    REQUIRE(stats.code == 0);
    const auto j = json::parse(stats.out);
    const auto manifest = read_manifest(wd.idx);
    CHECK(j["counts"] == to_json(manifest.counts));
    CHECK(j["counts"]["edges"] == 10);
    CHECK(j["counts"]["documents"] == 7);

    const auto text = wd.run({"stats"});
    CHECK(text.out.find("edges 10") != std::string::npos);

    const auto q = wd.run({"--trace", "query", "--mode", "local", testing::kWdQuery2020Q3});
    REQUIRE(q.code == 0);
    CHECK(q.out.find("$142 million") != std::string::npos);
    CHECK(q.out.find("packed chunks: wd_2020q3#0") != std::string::npos);
    CHECK(q.out.find("\"chunk_scores\"") != std::string::npos);

    const auto qj = wd.run({"--json", "query", testing::kWdQueryRevenue2023});
    const auto rec = json::parse(qj.out);
    CHECK(rec["packed_chunks"][0] == "wd_2023q1#0");
    CHECK(rec["mode"] == "local");

    const auto g = wd.run({"--json", "query", "--mode", "global", testing::kWdQueryRevenue2023});
    REQUIRE(g.code == 0);
    CHECK(json::parse(g.out)["mode"] == "global");

    const auto bad = wd.run({"query", "an unscripted question"});
    CHECK(bad.code == 0); // time scope falls back to "*", local answer falls back to "*"
}

TEST_CASE("flags reach the trace header") {
    WdIndex wd;
    const auto q = wd.run({"--json", "--top-k", "5", "--local-budget", "40", "--scoring-mode", "no_ppr", "--chunk-fraction",
                           "0.25", "query", testing::kWdQuery2020Q3});
    REQUIRE(q.code == 0);
    const auto cfg = json::parse(q.out)["trace"]["config"];
    CHECK(cfg["top_k"] == 5);
    CHECK(cfg["local_budget"] == 40);
    CHECK(cfg["scoring_mode"] == "NO_PPR");
    CHECK(cfg["chunk_fraction"] == 0.25);
    CHECK(json::parse(q.out)["trace"]["packed"]["tokens"] <= 40);
}

TEST_CASE("config files: TOML and JSON, flags win") {
    WdIndex wd;
    testing::write_file(wd.dir / "c.toml", "top_k = 3\nlocal-budget = 500\nscoring_mode = \"STATIC\"\n");
    testing::write_file(wd.dir / "c.json", R"({"top_k": 4, "mock_fixture": [")" + fixture("mock.jsonl") + R"("]})");
    auto q = wd.run({"--json", "--config", (wd.dir / "c.toml").string(), "query", testing::kWdQuery2020Q3});
    REQUIRE(q.code == 0);
    auto cfg = json::parse(q.out)["trace"]["config"];
    CHECK(cfg["top_k"] == 3);
    CHECK(cfg["local_budget"] == 500);
    CHECK(cfg["scoring_mode"] == "STATIC");

    q = wd.run({"--json", "--config", (wd.dir / "c.toml").string(), "--top-k", "9", "query", testing::kWdQuery2020Q3});
    CHECK(json::parse(q.out)["trace"]["config"]["top_k"] == 9);

    q = cli({"-d", wd.idx, "--json", "--config", (wd.dir / "c.json").string(), "query", testing::kWdQuery2020Q3});
    REQUIRE(q.code == 0);
    CHECK(json::parse(q.out)["trace"]["config"]["top_k"] == 4);

    testing::write_file(wd.dir / "bad.json", "{\"top_k\": ");
    CHECK(wd.run({"--config", (wd.dir / "bad.json").string(), "stats"}).code == 2);
    testing::write_file(wd.dir / "extra.toml", "no_such_option = 1\n");
    CHECK(wd.run({"--config", (wd.dir / "extra.toml").string(), "stats"}).code == 2);
}

TEST_CASE("eval and export") {
    WdIndex wd;
    const auto e = cli({"--json", "eval", "--protocol", fixture("protocol.json"), "--judge"});
    REQUIRE(e.code == 0);
    const auto j = json::parse(e.out);
    REQUIRE(j["scenarios"].size() == 3);
    CHECK(j["scenarios"][2]["judge"]["correct"] == 1.0);

    const auto ex = wd.run({"export"});
    REQUIRE(ex.code == 0);
    const auto doc = json::parse(ex.out);
    CHECK(doc["edges"].size() == 10);
    CHECK(doc["time_nodes"].size() == doc["counts"]["time_nodes"]["year"].get<int>() +
                                           doc["counts"]["time_nodes"]["quarter"].get<int>());
    const auto file = (wd.dir / "out.json").string();
    CHECK(wd.run({"export", "--out", file}).code == 0);
    CHECK(json::parse(testing::read_file(file)) == doc);
}

TEST_CASE("commands are byte-identical across runs") {
    WdIndex a;
    WdIndex b;
    for (const auto& args : std::vector<std::vector<std::string>>{
             {"stats"},
             {"--json", "query", testing::kWdQuery2020Q3},
             {"--trace", "query", "--mode", "global", testing::kWdQueryRevenue2023},
             {"export"}}) {
        const auto x = a.run(args);
        const auto y = b.run(args);
        CHECK(x.code == y.code);
        if (args[0] == "stats") {
            // snapshot creation time is the only difference
            CHECK(x.out.substr(x.out.find('\n')) == y.out.substr(y.out.find('\n')));
        } else {
            CHECK(x.out == y.out);
        }
    }
}
