#include "doctest.h"

#include "fixtures.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"
#include "tgrag/error.hpp"
#include "tgrag/retrieval.hpp"

#include <cmath>
#include <numeric>

using namespace tgrag;

namespace {

Timestamp ts(const std::string& s) { return parse_timestamp(s); }

TimeScope scope_of(TemporalLogic logic, std::vector<Timestamp> anchors, const BiLevelGraph& g) {
    TimeScope s;
    s.logic = logic;
    s.anchors = std::move(anchors);
    s.resolved = expand_scope(s, g);
    return s;
}

BiLevelGraph years_graph(int from, int to) {
    BiLevelGraph g;
    for (int y = from; y <= to; ++y) g.insert_edge({"A", "B", "r" + std::to_string(y), Timestamp::of_year(y)}, "c");
    return g;
}

// Index built in memory from the WD fixture.
struct Wd {
    std::unique_ptr<MockLlmProvider> llm = testing::wd_mock();
    MockEmbeddingProvider emb;
    IndexState state = index_corpus(testing::wd_corpus(), IndexConfig{}, IngestContext{*llm, emb});
    QueryContext ctx() { return QueryContext{*llm, emb}; }
};

} // namespace

TEST_CASE("parse_time_scope grammar") {
    auto s = parse_time_scope("(\"entity\"<|>\"at\"<|>\"2022-01-01\"<|>\"date\")<|COMPLETE|>");
    CHECK(s.logic == TemporalLogic::kAt);
    CHECK(s.anchors == std::vector{Timestamp::of_day(2022, 1, 1)});

    s = parse_time_scope("(\"entity\"<|>\"between\"<|>\"2022-Q2\"<|>\"2022-Q4\"<|>\"quarter\")<|COMPLETE|>");
    CHECK(s.logic == TemporalLogic::kBetween);
    CHECK(s.anchors == std::vector{ts("2022-Q2"), ts("2022-Q4")});

    s = parse_time_scope("(\"entity\"<|>\"after\"<|>\"2022\"<|>\"year\")\n<|COMPLETE|>");
    CHECK(s.logic == TemporalLogic::kAfter);
    CHECK(s.anchors == std::vector{ts("2022")});

    CHECK(parse_time_scope("I am not sure").is_none());
    CHECK(parse_time_scope("<|COMPLETE|>").is_none());
    CHECK(parse_time_scope("(\"entity\"<|>\"during\"<|>\"2022\"<|>\"year\")").is_none());
    CHECK(parse_time_scope("(\"entity\"<|>\"at\"<|>\"2022-02-31\"<|>\"date\")").is_none());
    // reversed BETWEEN anchors are reordered
    s = parse_time_scope("(\"entity\"<|>\"between\"<|>\"2022-Q4\"<|>\"2022-Q2\"<|>\"quarter\")");
    CHECK(s.anchors == std::vector{ts("2022-Q2"), ts("2022-Q4")});
    // mixed granularity between is lifted to the coarser one
    s = parse_time_scope("(\"entity\"<|>\"between\"<|>\"2022-03\"<|>\"2022-Q3\"<|>\"quarter\")");
    CHECK(s.anchors == std::vector{ts("2022-Q1"), ts("2022-Q3")});
}

TEST_CASE("parse_time_scope keeps further clauses") {
    const auto s = parse_time_scope(
        "(\"entity\"<|>\"at\"<|>\"2020-Q3\"<|>\"quarter\")##(\"entity\"<|>\"at\"<|>\"2023-Q1\"<|>\"quarter\")<|COMPLETE|>");
    CHECK(s.logic == TemporalLogic::kAt);
    REQUIRE(s.extra_clauses.size() == 1);
    BiLevelGraph g;
    CHECK(expand_scope(s, g) == std::set{ts("2020-Q3"), ts("2023-Q1")});
}

TEST_CASE("expand_scope") {
    BiLevelGraph g;
    CHECK(scope_of(TemporalLogic::kBetween, {ts("2022-Q2"), ts("2022-Q4")}, g).resolved ==
          std::set{ts("2022-Q2"), ts("2022-Q3"), ts("2022-Q4")});
    CHECK(scope_of(TemporalLogic::kAt, {ts("2020-Q3")}, g).resolved == std::set{ts("2020-Q3")});
    const auto years = years_graph(2020, 2024);
    CHECK(scope_of(TemporalLogic::kAfter, {ts("2022")}, years).resolved == std::set{ts("2023"), ts("2024")});
    CHECK(scope_of(TemporalLogic::kBefore, {ts("2022")}, years).resolved == std::set{ts("2020"), ts("2021")});
    CHECK(scope_of(TemporalLogic::kAfter, {ts("2024")}, years).resolved.empty());
    CHECK(scope_of(TemporalLogic::kNone, {}, years).resolved.empty());
    CHECK(scope_of(TemporalLogic::kBetween, {ts("2021-12-30"), ts("2022-01-02")}, g).resolved.size() == 4);
}

TEST_CASE("identify_time_scope sends the query and degrades to NONE") {
    MockLlmProvider llm;
    llm.add("time_scope", "q1", "(\"entity\"<|>\"between\"<|>\"2022-Q2\"<|>\"2022-Q4\"<|>\"quarter\")<|COMPLETE|>");
    llm.add("time_scope", "q2", "nonsense");
    BiLevelGraph g;
    const auto s = identify_time_scope("q1", llm, g);
    CHECK(s.resolved.size() == 3);
    CHECK(llm.calls().at(0).variables.at("input_text") == "q1");
    CHECK(llm.calls().at(0).rendered_prompt.find("q1") != std::string::npos);
    CHECK(identify_time_scope("q2", llm, g).is_none());
    CHECK_THROWS_AS(identify_time_scope("q3", llm, g), ProviderError);
}

TEST_CASE("in_scope is interval overlap") {
    BiLevelGraph g;
    const auto s = scope_of(TemporalLogic::kAt, {ts("2023-Q1")}, g);
    CHECK_FALSE(in_scope(ts("2020-Q3"), s));
    CHECK(in_scope(ts("2023"), s));
    CHECK(in_scope(ts("2023-02-14"), s));
    CHECK(in_scope(ts("1999"), TimeScope{}));
}

TEST_CASE("position_subgraph seeds and fallback") {
    BiLevelGraph g;
    VectorIndex idx(2);
    const auto e1 = g.insert_edge({"A", "B", "r1", ts("2020-Q3")}, "c1").edge;
    const auto e2 = g.insert_edge({"B", "C", "r2", ts("2021")}, "c2").edge;
    const auto e3 = g.insert_edge({"C", "D", "r3", ts("2022")}, "c3").edge;
    idx.upsert(raw(e1), {1, 0});
    idx.upsert(raw(e2), {1, 1});
    idx.upsert(raw(e3), {0, 1});
    const auto scope = scope_of(TemporalLogic::kAt, {ts("2020")}, g);

    const auto sg = position_subgraph({1, 0}, idx, g, scope, 20);
    REQUIRE(sg.edges.size() == 3);
    CHECK(sg.edges[0].id == e1);
    CHECK(sg.edges[0].gamma == doctest::Approx(1.0));
    CHECK(sg.entities.size() == 4);
    CHECK(sg.seeds == std::set{g.find_entity("A")->id, g.find_entity("B")->id});
    CHECK_FALSE(sg.seed_fallback);

    const auto top1 = position_subgraph({0, 1}, idx, g, scope, 1);
    CHECK(top1.edges.size() == 1);
    CHECK(top1.seed_fallback);
    CHECK(top1.seeds == top1.entities);

    const auto none = position_subgraph({1, 0}, idx, g, TimeScope{}, 2);
    CHECK(none.seed_fallback);
    CHECK(none.seeds == none.entities);

    CHECK_THROWS_AS(position_subgraph({1, 0}, VectorIndex(2), g, scope, 5), Error);
    CHECK_THROWS_AS(position_subgraph({1, 0}, idx, g, scope, 0), Error);
}

TEST_CASE("ppr small cases") {
    CHECK(personalized_pagerank(1, {}, {1.0}) == std::vector{1.0});
    const auto two = personalized_pagerank(2, {{0, 1}}, {1.0, 1.0});
    CHECK(two[0] == doctest::Approx(0.5));
    CHECK(two[1] == doctest::Approx(0.5));
    const std::vector<std::pair<std::size_t, std::size_t>> path = {{0, 1}, {1, 2}};
    const auto got = personalized_pagerank(3, path, {1.0, 0.0, 0.0});
    const auto want = testing::ppr_power_oracle(3, path, {1.0, 0.0, 0.0});
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(got[i] - want[i]) < 1e-6);
    CHECK(got[0] > got[2]);
    CHECK(got[1] > got[2]);
    CHECK(personalized_pagerank(0, {}, {}).empty());
    CHECK_THROWS_AS(personalized_pagerank(2, {{0, 5}}, {1, 1}), Error);
}

TEST_CASE("property: ppr matches both oracles on random connected graphs") {
    testing::Rng rng(101);
    for (int round = 0; round < 60; ++round) {
        const std::size_t n = 1 + rng.below(50);
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t v = 1; v < n; ++v) edges.emplace_back(rng.below(v), v);
        const std::size_t extra = rng.below(2 * n + 1);
        for (std::size_t i = 0; i < extra; ++i) {
            const auto a = rng.below(n);
            const auto b = rng.below(n);
            if (a != b) edges.emplace_back(a, b);
        }
        std::vector<double> p(n, 0.0);
        for (std::size_t i = 0; i <= rng.below(n); ++i) p[rng.below(n)] = 1.0;
        const auto got = personalized_pagerank(n, edges, p);
        const auto power = testing::ppr_power_oracle(n, edges, p);
        double sum = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            CHECK(std::fabs(got[v] - power[v]) < 1e-6);
            sum += got[v];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
        if (n > 1) {
            const auto lin = testing::ppr_linear_oracle(n, edges, p);
            for (std::size_t v = 0; v < n; ++v) CHECK(std::fabs(got[v] - lin[v]) < 1e-6);
        }
    }
}

TEST_CASE("ppr over a subgraph") {
    BiLevelGraph g;
    VectorIndex idx(2);
    const auto e = g.insert_edge({"A", "B", "r", ts("2020")}, "c").edge;
    idx.upsert(raw(e), {1, 0});
    const auto sg = position_subgraph({1, 0}, idx, g, TimeScope{}, 5);
    const auto s = ppr(sg, g);
    CHECK(s.at(g.find_entity("A")->id) == doctest::Approx(0.5));
    CHECK_THROWS_AS(ppr(QuerySubgraph{}, g), Error);
}

TEST_CASE("score_edges per mode") {
    BiLevelGraph g;
    const auto out = g.insert_edge({"A", "B", "r", ts("2020-Q3")}, "c1").edge;
    const auto in = g.insert_edge({"A", "C", "r", ts("2023-Q1")}, "c2").edge;
    const auto a = g.find_entity("A")->id;
    const auto b = g.find_entity("B")->id;
    const auto c = g.find_entity("C")->id;
    QuerySubgraph sg;
    sg.edges = {{in, 0.8}, {out, 0.6}};
    const std::map<EntityId, double> ent = {{a, 0.3}, {b, 0.1}, {c, 0.2}};
    const auto scope = scope_of(TemporalLogic::kAt, {ts("2023-Q1")}, g);

    auto s = score_edges(sg, g, ent, scope, ScoringMode::kFull);
    CHECK(s.at(out) == 0.0);
    CHECK(s.at(in) == doctest::Approx(0.5));
    s = score_edges(sg, g, ent, scope, ScoringMode::kNoPpr);
    CHECK(s.at(in) == doctest::Approx(0.8));
    CHECK(s.at(out) == 0.0);
    s = score_edges(sg, g, ent, scope, ScoringMode::kNoTemporal);
    CHECK(s.at(out) == doctest::Approx(0.4));
    s = score_edges(sg, g, ent, scope, ScoringMode::kNoTemporalNoPpr);
    CHECK(s.at(out) == doctest::Approx(0.6));
}

TEST_CASE("static mode takes the best gamma per entity pair") {
    BiLevelGraph g;
    const auto e1 = g.insert_edge({"A", "B", "r1", ts("2020")}, "c1").edge;
    const auto e2 = g.insert_edge({"B", "A", "r2", ts("2021")}, "c2").edge;
    const auto e3 = g.insert_edge({"A", "C", "r3", ts("2021")}, "c2").edge;
    QuerySubgraph sg;
    sg.edges = {{e1, 0.9}, {e3, 0.4}, {e2, 0.2}};
    const auto s = score_edges(sg, g, {}, TimeScope{}, ScoringMode::kStatic);
    CHECK(s.at(e1) == doctest::Approx(0.9));
    CHECK(s.at(e2) == doctest::Approx(0.9));
    CHECK(s.at(e3) == doctest::Approx(0.4));
}

TEST_CASE("score_chunks") {
    BiLevelGraph g;
    const auto e1 = g.insert_edge({"A", "B", "r1", ts("2020")}, "c1").edge;
    const auto e2 = g.insert_edge({"A", "B", "r2", ts("2021")}, "c2").edge;
    const auto e3 = g.insert_edge({"A", "B", "r3", ts("2022")}, "c2").edge;
    ChunkStore chunks;
    for (const auto* id : {"c1", "c2", "c3"}) chunks[id] = Chunk{id, "d", 0, 10, "text", {}};
    QuerySubgraph sg;
    sg.edges = {{e1, 0.5}};
    auto scored = score_chunks(chunks, sg, g, {{e1, 0.4}});
    REQUIRE(scored.size() == 3);
    CHECK(scored[0].chunk_id == "c1");
    CHECK(scored[0].score == doctest::Approx(0.6));
    CHECK(scored[1].score == 0.0);
    CHECK(scored[1].chunk_id == "c2");
    CHECK(scored[2].chunk_id == "c3");

    sg.edges = {{e2, 0.5}, {e3, 0.2}, {e1, 0.1}};
    scored = score_chunks(chunks, sg, g, {{e2, 0.0}, {e3, 0.0}, {e1, 0.3}});
    CHECK(scored[0].chunk_id == "c1");
    CHECK(scored[1].chunk_id == "c2");
    CHECK(scored[1].score == 0.0);

    // literal reading sums every retrieved edge
    scored = score_chunks(chunks, sg, g, {{e2, 0.1}, {e3, 0.1}, {e1, 0.3}}, ChunkSumScope::kAllRetrieved);
    CHECK(scored[0].chunk_id == "c2");
    CHECK(scored[0].score == doctest::Approx(1.5 * 1.2 * 0.5));
    CHECK(scored[1].score == doctest::Approx(1.1 * 0.5));
}

TEST_CASE("pack_context") {
    const std::vector<ScoredChunk> c = {{"a", 3, 5000}, {"b", 2, 5000}, {"c", 1, 5000}};
    const auto two = pack_context(c, 12000);
    REQUIRE(two.size() == 2);
    CHECK(two[1].chunk_id == "b");
    CHECK(pack_context({{"big", 1, 13000}, {"s", 0.5, 10}}, 12000).empty());
    CHECK(pack_context(c, 0).empty());
    CHECK(pack_context({}, 100).empty());
    CHECK(greedy_prefix({3, 4, 5}, 7) == 2);
    CHECK(greedy_prefix({3, 4, 5}, 12) == 3);
}

TEST_CASE("property: ranking invariant under rescaled entity scores") {
    const auto corpus = testing::make_synthetic_corpus(20, 8);
    MockLlmProvider llm;
    testing::script_mock(llm, corpus);
    MockEmbeddingProvider emb;
    const auto state = build_index(corpus.docs, IndexConfig{}, IngestContext{llm, emb});
    testing::Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const auto q = emb.embed_one("Contoso Ltd revenue " + std::to_string(i));
        TimeScope scope;
        scope.logic = TemporalLogic::kAt;
        scope.anchors = {Timestamp::of_year(2019 + static_cast<int>(rng.below(4)))};
        scope.resolved = expand_scope(scope, state.graph);
        const auto sg = position_subgraph(q, state.edge_vectors, state.graph, scope, 1 + rng.below(30));
        auto ent = ppr(sg, state.graph);
        const auto base = score_chunks(state.chunks, sg, state.graph, score_edges(sg, state.graph, ent, scope, ScoringMode::kFull));
        const double k = 0.01 + 100.0 * rng.unit();
        for (auto& [id, v] : ent) v *= k;
        const auto scaled = score_chunks(state.chunks, sg, state.graph, score_edges(sg, state.graph, ent, scope, ScoringMode::kFull));
        REQUIRE(base.size() == scaled.size());
        for (std::size_t j = 0; j < base.size(); ++j) CHECK(base[j].chunk_id == scaled[j].chunk_id);
    }
}

TEST_CASE("FULL and NO_TEMPORAL: equal on a covered symmetric setup, differ when the subgraph is partial") {
    BiLevelGraph g;
    VectorIndex idx(2);
    ChunkStore chunks;
    const std::vector<std::pair<std::string, std::string>> pairs = {{"A", "B"}, {"B", "C"}, {"C", "D"}, {"D", "E"}, {"B", "F"}, {"F", "G"}};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::string cid = "c" + std::to_string(i);
        const auto e = g.insert_edge({pairs[i].first, pairs[i].second, "r", Timestamp::of_year(2020)}, cid).edge;
        idx.upsert(raw(e), {1.0f, static_cast<float>(i)});
        chunks[cid] = Chunk{cid, "d", 0, 5, "t", {}};
    }
    const auto scope = scope_of(TemporalLogic::kAt, {Timestamp::of_year(2020)}, g);
    auto ranking = [&](ScoringMode mode, std::size_t k) {
        const auto sg = position_subgraph({1, 0}, idx, g, scope, k);
        const auto ent = entity_scores_for(mode, sg, g);
        return std::make_pair(score_chunks(chunks, sg, g, score_edges(sg, g, ent, scope, mode)), ent);
    };
    const auto [full_all, full_ent] = ranking(ScoringMode::kFull, 100);
    const auto [nt_all, nt_ent] = ranking(ScoringMode::kNoTemporal, 100);
    for (std::size_t i = 0; i < full_all.size(); ++i) {
        CHECK(full_all[i].chunk_id == nt_all[i].chunk_id);
        CHECK(full_all[i].score == doctest::Approx(nt_all[i].score).epsilon(1e-9));
    }
    const auto [full_part, fe] = ranking(ScoringMode::kFull, 2);
    const auto [nt_part, ne] = ranking(ScoringMode::kNoTemporal, 2);
    bool differ = false;
    for (std::size_t i = 0; i < full_part.size(); ++i) {
        differ = differ || std::fabs(full_part[i].score - nt_part[i].score) > 1e-9;
    }
    CHECK(differ);
}

TEST_CASE("WD case study traces") {
    Wd wd;
    auto rec = answer_local(testing::kWdQuery2020Q3, wd.state, wd.ctx());
    REQUIRE(rec.ok());
    REQUIRE_FALSE(rec.packed_chunks.empty());
    CHECK(rec.packed_chunks[0] == "wd_2020q3#0");
    CHECK(rec.scope.resolved == std::set{ts("2020-Q3")});
    CHECK(rec.answer.find("$142 million") != std::string::npos);
    CHECK(rec.trace["chunk_scores"][0]["chunk"] == "wd_2020q3#0");

    rec = answer_local(testing::kWdQueryRevenue2023, wd.state, wd.ctx());
    REQUIRE(rec.ok());
    REQUIRE(rec.packed_chunks.size() >= 3);
    CHECK(std::set<ChunkId>(rec.packed_chunks.begin(), rec.packed_chunks.begin() + 3) ==
          std::set<ChunkId>{"wd_2023q1#0", "wd_2023q2#0", "wd_2023q3#0"});
}

TEST_CASE("local pipeline refusal and determinism") {
    Wd wd;
    const std::string q = "What was Western Digital Corporation's revenue in 2019?";
    const auto calls = wd.llm->calls().size();
    const auto rec = answer_local(q, wd.state, wd.ctx());
    CHECK(rec.answer == std::string(kRefusalAnswer));
    CHECK(rec.packed_chunks.empty());
    CHECK(rec.trace["refused"] == true);
    CHECK(wd.llm->calls().size() == calls + 1); // only the scope call

    const auto a = to_json(answer_local(testing::kWdQuery2020Q3, wd.state, wd.ctx())).dump();
    const auto b = to_json(answer_local(testing::kWdQuery2020Q3, wd.state, wd.ctx())).dump();
    CHECK(a == b);
}

TEST_CASE("local pipeline on an empty graph refuses") {
    MockLlmProvider llm;
    llm.add("time_scope", "*", "<|COMPLETE|>");
    MockEmbeddingProvider emb;
    IndexState empty;
    const auto rec = answer_local("anything?", empty, QueryContext{llm, emb});
    CHECK(rec.ok());
    CHECK(rec.answer == std::string(kRefusalAnswer));
}

TEST_CASE("provider failure becomes an error record") {
    Wd wd;
    MockLlmProvider bare;
    const auto rec = answer_local("unscripted?", wd.state, QueryContext{bare, wd.emb});
    CHECK_FALSE(rec.ok());
    CHECK(rec.error_code == ErrorCode::kProvider);
    CHECK(rec.provider_error_kind == ProviderErrorKind::kMalformed);
    const auto j = to_json(rec);
    CHECK(j["error"]["code"] == "provider_error");
}

TEST_CASE("trace header reflects configuration") {
    Wd wd;
    RetrievalConfig cfg;
    cfg.top_k = 7;
    cfg.scoring_mode = ScoringMode::kNoPpr;
    const auto rec = answer_local(testing::kWdQuery2020Q3, wd.state, wd.ctx(), cfg);
    CHECK(rec.trace["config"]["top_k"] == 7);
    CHECK(rec.trace["config"]["scoring_mode"] == "NO_PPR");
    CHECK(rec.trace["subgraph"]["edges"].size() == 7);
    const RetrievalConfig defaults;
    const auto j = defaults.to_json();
    CHECK(j["top_k"] == 20);
    CHECK(j["local_budget"] == 12000);
    CHECK(j["global_budget"] == 24000);
    CHECK(j["chunk_fraction"] == 0.10);
    CHECK(defaults.chunk_budget() == 2400);
    CHECK(defaults.report_budget() == 21600);
}

TEST_CASE("global evidence split and ordering") {
    Wd wd;
    TimeScope s;
    s.logic = TemporalLogic::kBetween;
    s.anchors = {ts("2023-Q1"), ts("2023-Q3")};
    s.resolved = expand_scope(s, wd.state.graph);
    const std::vector<ScoredChunk> ranked = {{"wd_2023q1#0", 3, 26}, {"wd_2023q2#0", 2, 23}, {"wd_fy2022#0", 0, 20}};
    const auto ev = collect_global_evidence(ranked, s, wd.state, RetrievalConfig{});
    CHECK(ev.chunk_budget == 2400);
    CHECK(ev.report_budget == 21600);
    REQUIRE(ev.chunks.size() == 2);
    CHECK(ev.chunks[0].id == "chunk:wd_2023q1#0");
    REQUIRE(ev.reports.size() == 3);
    CHECK(ev.reports[0].id == "report:2023-Q1");
    CHECK(ev.reports[2].id == "report:2023-Q3");

    const auto none = collect_global_evidence({}, TimeScope{}, wd.state, RetrievalConfig{});
    std::vector<std::string> ids;
    for (const auto& r : none.reports) ids.push_back(r.id);
    CHECK(ids == std::vector<std::string>{"report:2020", "report:2022", "report:2023"});

    RetrievalConfig tight;
    tight.global_budget = 40;
    tight.chunk_fraction = 0.5;
    const auto cut = collect_global_evidence(ranked, s, wd.state, tight);
    CHECK(cut.chunk_tokens <= 20);
    CHECK(cut.report_tokens <= 20);

    auto stale = wd.state;
    stale.reports.reports.erase(ts("2023-Q2"));
    try {
        collect_global_evidence(ranked, s, stale, RetrievalConfig{});
        FAIL("expected MissingReport");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kMissingReport);
    }
}

TEST_CASE("parse_points") {
    auto p = parse_points(R"([{"description": "x", "importance": 80, "confidence": 90}, {"description": "y", "importance": 10, "confidence": 20}])");
    CHECK(p.size() == 2);
    p = parse_points(R"([{"description": "x", "importance": 80}, {"description": "y", "importance": 1, "confidence": 2}])");
    REQUIRE(p.size() == 1);
    CHECK(p[0].description == "y");
    p = parse_points(R"(Here you go: {"points": [{"description": "z", "score": 5, "confidence": 6}]} done)");
    REQUIRE(p.size() == 1);
    CHECK(p[0].importance == 5);
    CHECK(parse_points("no json at all").empty());
    CHECK(parse_points(R"([{"description": "", "importance": 1, "confidence": 1}])").empty());
}

TEST_CASE("synthesize_global removal order") {
    MockLlmProvider llm;
    llm.add("global_query", "*", "synthesized");
    MockEmbeddingProvider emb;
    const QueryContext ctx{llm, emb};
    std::vector<AtomicPoint> pts = {{"p1", 50, 0.9}, {"p2", 70, 0.2}, {"p3", 10, 0.5}, {"p4", 90, 0.2}, {"p5", 30, 0.7}};
    std::size_t each = default_tokenizer().count(serialize_point(pts[0]));
    for (const auto& p : pts) REQUIRE(default_tokenizer().count(serialize_point(p)) == each);

    auto all = synthesize_global(pts, "q", 5 * each, ctx);
    CHECK(all.removed.empty());
    REQUIRE(all.kept.size() == 5);
    CHECK(all.kept[0].description == "p4");
    CHECK(all.kept[4].description == "p3");
    CHECK(all.answer == "synthesized");

    auto cut = synthesize_global(pts, "q", 2 * each, ctx);
    REQUIRE(cut.removed.size() == 3);
    CHECK(cut.removed[0].description == "p2");
    CHECK(cut.removed[1].description == "p4");
    CHECK(cut.removed[2].description == "p3");
    for (std::size_t i = 1; i < cut.removed.size(); ++i) CHECK(cut.removed[i - 1].confidence <= cut.removed[i].confidence);
    CHECK(cut.points_tokens <= 2 * each);
    CHECK(cut.kept[0].description == "p1");

    const auto calls = llm.calls().size();
    auto none = synthesize_global({}, "q", 100, ctx);
    CHECK(none.refused);
    CHECK(none.answer == std::string(kRefusalAnswer));
    CHECK(llm.calls().size() == calls);
}

TEST_CASE("global pipeline end to end") {
    Wd wd;
    RetrievalConfig seq;
    RetrievalConfig par;
    par.point_workers = 3;
    const auto a = answer_global(testing::kWdQueryRevenue2023, wd.state, wd.ctx(), seq);
    const auto b = answer_global(testing::kWdQueryRevenue2023, wd.state, wd.ctx(), par);
    REQUIRE(a.ok());
    CHECK(a.mode == "global");
    CHECK(a.answer.find("Western Digital") != std::string::npos);
    CHECK(a.trace["evidence"]["chunk_budget"] == 2400);
    CHECK(a.trace["evidence"]["report_budget"] == 21600);
    CHECK(a.answer == b.answer);
    CHECK(a.trace["synthesis"] == b.trace["synthesis"]);
}
