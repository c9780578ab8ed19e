#include "doctest.h"

#include "tgrag/error.hpp"
#include "tgrag/reports.hpp"

using namespace tgrag;

namespace {

Quadruple quad(const std::string& tail, const std::string& rel, const std::string& ts) {
    return {"WD", tail, rel, parse_timestamp(ts)};
}

void script_echo(MockLlmProvider& m) { m.add("time_report", "*", "[{time_label}] {edges}{child_reports}"); }

} // namespace

TEST_CASE("leaf report carries both relations") {
    BiLevelGraph g;
    g.insert_edge(quad("Revenue", "revenue was $3.7 billion", "2023-Q1"), "c");
    g.insert_edge(quad("Margin", "margin was 20%", "2023-Q1"), "c");
    MockLlmProvider m;
    script_echo(m);
    ReportStore store;
    generate_all(g, store, ReportContext{m});
    const auto& text = store.find(Timestamp::of_quarter(2023, 1))->text;
    CHECK(text.find("revenue was $3.7 billion") != std::string::npos);
    CHECK(text.find("margin was 20%") != std::string::npos);
}

TEST_CASE("year report includes every child report") {
    BiLevelGraph g;
    for (int q = 1; q <= 4; ++q) {
        g.insert_edge(quad("Revenue", "quarter " + std::to_string(q) + " figure", "2022-Q" + std::to_string(q)), "c");
    }
    MockLlmProvider m;
    script_echo(m);
    ReportStore store;
    generate_all(g, store, ReportContext{m});
    const auto calls = m.calls();
    REQUIRE(calls.size() == 5);
    const auto& year = calls.back();
    CHECK(year.key == "2022");
    for (int q = 1; q <= 4; ++q) {
        CHECK(year.variables.at("child_reports").find("[2022-Q" + std::to_string(q) + "]") != std::string::npos);
    }
}

TEST_CASE("empty node gets the placeholder without a call") {
    const auto restored = BiLevelGraph::restore({}, {}, {TimeNode{Timestamp::of_year(2020), std::nullopt, {}, {}}});
    MockLlmProvider m;
    script_echo(m);
    ReportStore store;
    generate_all(restored, store, ReportContext{m});
    CHECK(m.calls().empty());
    CHECK(store.find(Timestamp::of_year(2020))->text == "No recorded activity for 2020.");
}

TEST_CASE("order, call count, idempotence") {
    BiLevelGraph g;
    g.insert_edge(quad("Revenue", "a", "2020-Q3"), "c");
    g.insert_edge(quad("Revenue", "b", "2020-07-04"), "c");
    g.insert_edge(quad("Revenue", "c", "2021"), "c");
    MockLlmProvider m;
    script_echo(m);
    ReportStore store;
    const auto done = generate_all(g, store, ReportContext{m});
    CHECK(m.calls().size() == g.time_nodes().size());
    CHECK(done.size() == g.time_nodes().size());
    std::map<std::string, std::size_t> pos;
    const auto calls = m.calls();
    for (std::size_t i = 0; i < calls.size(); ++i) pos[calls[i].key] = i;
    CHECK(pos.at("2020-Q3") < pos.at("2020"));
    CHECK(pos.at("2020-07-04") < pos.at("2020-07"));
    CHECK(pos.at("2020-07") < pos.at("2020-Q3"));
    m.clear_calls();
    CHECK(generate_all(g, store, ReportContext{m}).empty());
    CHECK(m.calls().empty());
}

TEST_CASE("refresh_dirty regenerates exactly the dirty set") {
    BiLevelGraph g;
    g.insert_edge(quad("Revenue", "a", "2023-Q1"), "c");
    g.insert_edge(quad("Revenue", "b", "2023-Q2"), "c");
    MockLlmProvider m;
    script_echo(m);
    ReportStore store;
    generate_all(g, store, ReportContext{m});
    const auto q1 = *store.find(Timestamp::of_quarter(2023, 1));
    const auto r = g.insert_edge(quad("Margin", "new", "2023-Q2"), "c2");
    REQUIRE(r.inserted);
    m.clear_calls();
    const std::set dirty{Timestamp::of_quarter(2023, 2), Timestamp::of_year(2023)};
    const auto done = refresh_dirty(dirty, g, store, ReportContext{m});
    CHECK(done == std::vector{Timestamp::of_quarter(2023, 2), Timestamp::of_year(2023)});
    CHECK(m.calls().size() == 2);
    CHECK(*store.find(Timestamp::of_quarter(2023, 1)) == q1);
    CHECK(refresh_dirty({}, g, store, ReportContext{m}).empty());
}

TEST_CASE("input limit keeps the most recent edges, then alphabetical") {
    BiLevelGraph g;
    g.insert_edge(quad("Y", "b fact", "2020"), "c");
    g.insert_edge(quad("X", "a fact", "2020"), "c");
    g.insert_edge(quad("Z", "old fact", "2019"), "c");
    MockLlmProvider m;
    script_echo(m);
    ReportContext ctx{m};
    ReportStore store;
    const auto* year = g.find_time_node(Timestamp::of_year(2020));
    const auto all = assemble_report_inputs(*year, g, store, ctx);
    CHECK(all.edges == "- WD -> X: a fact\n- WD -> Y: b fact\n");
    ctx.config.input_limit_tokens = 6;
    const auto cut = assemble_report_inputs(*year, g, store, ctx);
    CHECK(cut.edges_total == 2);
    CHECK(cut.edges_included == 1);
    CHECK(cut.edges == "- WD -> X: a fact\n");
}

TEST_CASE("missing child report") {
    BiLevelGraph g;
    g.insert_edge(quad("X", "fact", "2020-Q1"), "c");
    MockLlmProvider m;
    script_echo(m);
    ReportStore store;
    try {
        generate_report(*g.find_time_node(Timestamp::of_year(2020)), g, store, ReportContext{m});
        FAIL("expected MissingChildReport");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kMissingChildReport);
    }
}

TEST_CASE("parallel generation matches sequential") {
    BiLevelGraph g;
    for (int m = 1; m <= 12; ++m) g.insert_edge(quad("R", "m" + std::to_string(m), "2021-" + std::to_string(m)), "c");
    MockLlmProvider seq;
    script_echo(seq);
    MockLlmProvider par;
    script_echo(par);
    par.set_latency(std::chrono::milliseconds(2));
    ReportStore a;
    ReportStore b;
    generate_all(g, a, ReportContext{seq});
    ReportContext pctx{par};
    pctx.config.workers = 4;
    generate_all(g, b, pctx);
    CHECK(a == b);
}
