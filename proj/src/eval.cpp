#include "tgrag/eval.hpp"

#include "tgrag/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tgrag {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool says_refusal(std::string_view text) {
    return lower(text).find(lower(kRefusalAnswer)) != std::string::npos;
}

bool gold_is_unanswerable(std::string_view gold) {
    const auto g = lower(gold);
    return says_refusal(gold) || g == "unanswerable" || g == "(unanswerable)";
}

double f_measure(double overlap, std::size_t pred, std::size_t ref) {
    if (overlap <= 0.0 || pred == 0 || ref == 0) return 0.0;
    const double p = overlap / static_cast<double>(pred);
    const double r = overlap / static_cast<double>(ref);
    return 2.0 * p * r / (p + r);
}

TokenCounts minus(const TokenCounts& after, const TokenCounts& before) {
    return {after.prompt - before.prompt, after.completion - before.completion, after.calls - before.calls};
}

json counts_json(const TokenCounts& c) {
    return {{"prompt", c.prompt}, {"completion", c.completion}, {"calls", c.calls}};
}

// Strict JSON, tolerating a surrounding code fence.
json parse_object(std::string_view response) {
    auto j = json::parse(response, nullptr, false);
    if (!j.is_discarded()) return j;
    const auto open = response.find('{');
    const auto close = response.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) return json();
    j = json::parse(response.substr(open, close - open + 1), nullptr, false);
    return j.is_discarded() ? json() : j;
}

std::optional<std::size_t> count_value(const json& v) {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::size_t>(v.get<long long>());
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d >= 0.0 && std::floor(d) == d) return static_cast<std::size_t>(d);
    }
    return std::nullopt;
}

PairwiseWinner winner_of(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_object()) return PairwiseWinner::kNone;
    const auto w = it->find("Winner");
    if (w == it->end() || !w->is_string()) return PairwiseWinner::kNone;
    const auto s = lower(w->get<std::string>());
    if (s == "answer 1" || s == "1") return PairwiseWinner::kFirst;
    if (s == "answer 2" || s == "2") return PairwiseWinner::kSecond;
    return PairwiseWinner::kNone;
}

} // namespace

std::vector<std::string> metric_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

double rouge_l(std::string_view prediction, std::string_view reference) {
    const auto a = metric_tokens(prediction);
    const auto b = metric_tokens(reference);
    if (a.empty() || b.empty()) return 0.0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return f_measure(static_cast<double>(prev[b.size()]), a.size(), b.size());
}

double token_f1(std::string_view prediction, std::string_view reference) {
    const auto a = metric_tokens(prediction);
    const auto b = metric_tokens(reference);
    if (a.empty() || b.empty()) return 0.0;
    std::map<std::string, std::size_t> bag;
    for (const auto& t : b) ++bag[t];
    std::size_t overlap = 0;
    for (const auto& t : a) {
        auto it = bag.find(t);
        if (it != bag.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return f_measure(static_cast<double>(overlap), a.size(), b.size());
}

std::vector<QARecord> load_queries(const fs::path& path, const std::string& default_slice) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open query file " + path.string());
    std::vector<QARecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = path.filename().string() + ":" + std::to_string(lineno);
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kJsonParse, where + ": not a JSON object");
        try {
            QARecord r;
            r.query_id = j.at("query_id").get<std::string>();
            r.question = j.at("question").get<std::string>();
            r.gold_answer = j.value("gold_answer", std::string());
            r.mode = j.value("mode", std::string("local"));
            r.slice = j.value("slice", default_slice);
            if (r.mode != "local" && r.mode != "global") {
                throw Error(ErrorCode::kInvalidArgument, where + ": mode must be local or global");
            }
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::kJsonParse, where + ": " + e.what());
        }
    }
    return out;
}

std::string_view scenario_name(Scenario s) {
    switch (s) {
    case Scenario::kBaseOnBase: return "base_queries_base_corpus";
    case Scenario::kBaseOnUpdated: return "base_queries_updated_corpus";
    case Scenario::kNewOnUpdated: return "new_queries_updated_corpus";
    }
    return "";
}

ScenarioReport evaluate_queries(Scenario scenario, const std::vector<QARecord>& queries,
                                const IndexState& state, const EvalEngine& engine) {
    ScenarioReport r;
    r.scenario = scenario;
    r.queries = queries.size();
    const QueryContext ctx{engine.answer_llm ? *engine.answer_llm : engine.llm, engine.embedder, engine.prompts,
                           engine.tokenizer};
    std::size_t refusals = 0;
    for (const auto& q : queries) {
        QARecord rec = q;
        const auto ans = q.mode == "global" ? answer_global(q.question, state, ctx, engine.retrieval)
                                            : answer_local(q.question, state, ctx, engine.retrieval);
        if (ans.ok()) {
            rec.prediction = ans.answer;
        } else {
            rec.error = ans.error_message;
            ++r.failed;
        }
        r.rouge_l += rouge_l(rec.prediction, rec.gold_answer);
        r.token_f1 += token_f1(rec.prediction, rec.gold_answer);
        if (ans.ok() && says_refusal(rec.prediction)) ++refusals;
        r.records.push_back(std::move(rec));
    }
    if (!queries.empty()) {
        const auto n = static_cast<double>(queries.size());
        r.rouge_l /= n;
        r.token_f1 /= n;
        r.refusal_rate = static_cast<double>(refusals) / n;
    }
    return r;
}

std::vector<ScenarioReport> run_protocol(const std::vector<Document>& base_corpus,
                                         const std::vector<Document>& new_corpus,
                                         const std::vector<QARecord>& base_queries,
                                         const std::vector<QARecord>& new_queries,
                                         const EvalEngine& engine) {
    std::vector<ScenarioReport> out(3);
    out[0].scenario = Scenario::kBaseOnBase;
    out[1].scenario = Scenario::kBaseOnUpdated;
    out[2].scenario = Scenario::kNewOnUpdated;
    out[0].queries = out[1].queries = base_queries.size();
    out[2].queries = new_queries.size();

    const IngestContext ictx{engine.llm, engine.embedder, engine.prompts, engine.tokenizer};
    auto& meter = engine.llm.meter();

    IndexState base;
    auto before = meter.read();
    try {
        base = index_corpus(base_corpus, engine.index, ictx);
    } catch (const Error& e) {
        for (auto& r : out) r.error = std::string("base build failed: ") + e.what();
        return out;
    }
    const auto index_tokens = minus(meter.read(), before);

    std::optional<IndexState> updated;
    TokenCounts update_tokens;
    std::string update_error;
    before = meter.read();
    try {
        IndexState copy = base;
        update_corpus(copy, new_corpus, ictx);
        updated = std::move(copy);
        update_tokens = minus(meter.read(), before);
    } catch (const Error& e) {
        update_error = std::string("update failed: ") + e.what();
    }

    std::optional<TokenCounts> rebuild_tokens;
    if (engine.measure_rebuild) {
        std::vector<Document> all = base_corpus;
        all.insert(all.end(), new_corpus.begin(), new_corpus.end());
        before = meter.read();
        try {
            index_corpus(all, engine.index, ictx);
            rebuild_tokens = minus(meter.read(), before);
        } catch (const Error&) {
            rebuild_tokens.reset();
        }
    }

    out[0] = evaluate_queries(Scenario::kBaseOnBase, base_queries, base, engine);
    if (updated) {
        out[1] = evaluate_queries(Scenario::kBaseOnUpdated, base_queries, *updated, engine);
        out[2] = evaluate_queries(Scenario::kNewOnUpdated, new_queries, *updated, engine);
    } else {
        out[1].error = out[2].error = update_error;
    }
    for (auto& r : out) {
        r.index_tokens = index_tokens;
        if (r.scenario != Scenario::kBaseOnBase) r.update_tokens = update_tokens;
        r.rebuild_tokens = rebuild_tokens;
    }
    return out;
}

json to_json(const ScenarioReport& r) {
    auto records = json::array();
    for (const auto& q : r.records) {
        json rec = {{"query_id", q.query_id}, {"question", q.question}, {"gold_answer", q.gold_answer},
                    {"prediction", q.prediction}, {"mode", q.mode}, {"slice", q.slice}};
        if (!q.error.empty()) rec["error"] = q.error;
        records.push_back(rec);
    }
    json j = {{"scenario", std::string(scenario_name(r.scenario))},
              {"queries", r.queries},
              {"failed", r.failed},
              {"rouge_l", r.rouge_l},
              {"token_f1", r.token_f1},
              {"refusal_rate", r.refusal_rate},
              {"index_tokens", counts_json(r.index_tokens)},
              {"update_tokens", counts_json(r.update_tokens)},
              {"rebuild_tokens", r.rebuild_tokens ? counts_json(*r.rebuild_tokens) : json(nullptr)},
              {"records", records}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

std::string format_report_table(const std::vector<ScenarioReport>& reports) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-28s %7s %6s %8s %8s %8s %12s %12s\n", "scenario", "queries", "failed",
                  "rouge_l", "f1", "refusal", "idx_prompt", "upd_prompt");
    out += line;
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%-28s %7zu %6zu %8.4f %8.4f %8.4f %12zu %12zu\n",
                      std::string(scenario_name(r.scenario)).c_str(), r.queries, r.failed, r.rouge_l, r.token_f1,
                      r.refusal_rate, r.index_tokens.prompt, r.update_tokens.prompt);
        out += line;
        if (!r.error.empty()) out += "  error: " + r.error + "\n";
    }
    if (!reports.empty() && reports.front().rebuild_tokens) {
        const auto& rb = *reports.front().rebuild_tokens;
        std::snprintf(line, sizeof line, "rebuild tokens: prompt %zu completion %zu\n", rb.prompt, rb.completion);
        out += line;
    }
    return out;
}

ProtocolSpec load_protocol(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open protocol " + path.string());
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kJsonParse, path.string() + ": not a JSON object");
    const auto base = path.parent_path();
    auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : base / p; };
    ProtocolSpec spec;
    try {
        spec.base_corpus = resolve(j.at("base_corpus").get<std::string>());
        spec.new_corpus = resolve(j.at("new_corpus").get<std::string>());
        spec.base_queries = resolve(j.at("base_queries").get<std::string>());
        spec.new_queries = resolve(j.at("new_queries").get<std::string>());
        for (const auto& f : j.value("mock_fixtures", json::array())) spec.mock_fixtures.push_back(resolve(f.get<std::string>()));
        spec.measure_rebuild = j.value("measure_rebuild", true);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kJsonParse, path.string() + ": " + e.what());
    }
    return spec;
}

Judgment parse_judgment(std::string_view response) {
    Judgment out;
    const auto j = parse_object(response);
    if (!j.is_object()) {
        out.error = "judge output is not a JSON object";
        return out;
    }
    bool any = false;
    for (const auto& [key, value] : j.items()) {
        const auto k = lower(key);
        std::size_t* slot = nullptr;
        if (k == "correct") slot = &out.correct;
        if (k == "refusal" || k == "correctly refusal") slot = &out.refusal;
        if (k == "incorrect") slot = &out.incorrect;
        if (!slot) continue;
        const auto n = count_value(value);
        if (!n) {
            out.error = "non-integer count for " + key;
            return out;
        }
        *slot += *n;
        any = true;
    }
    if (!any) {
        out.error = "judge output has no recognised counts";
        return out;
    }
    out.parsed = true;
    return out;
}

std::vector<Judgment> judge(const std::vector<QARecord>& records, LlmProvider& judge_provider,
                            const PromptLibrary& prompts) {
    std::vector<Judgment> out;
    for (const auto& r : records) {
        const auto tmpl = gold_is_unanswerable(r.gold_answer) ? templates::kJudgeRefusal : templates::kJudgeLocal;
        std::map<std::string, std::string> vars = {
            {"question", r.question}, {"answer", r.gold_answer}, {"prediction", r.prediction}};
        ChatRequest req;
        req.template_id = std::string(tmpl);
        req.key = r.query_id;
        req.rendered_prompt = prompts.render(tmpl, vars);
        req.variables = std::move(vars);
        req.max_output_tokens = 256;
        Judgment jd;
        try {
            jd = parse_judgment(judge_provider.complete(req).text);
        } catch (const ProviderError& e) {
            jd.error = e.what();
        }
        jd.query_id = r.query_id;
        out.push_back(std::move(jd));
    }
    return out;
}

JudgeSummary summarize_judgments(const std::vector<Judgment>& judgments) {
    JudgeSummary s;
    std::size_t counted = 0;
    for (const auto& j : judgments) {
        if (!j.parsed) {
            ++s.unparsed;
            continue;
        }
        ++s.judged;
        const auto total = j.total();
        if (total == 0) {
            ++s.sum_violations;
            continue;
        }
        ++counted;
        s.correct += static_cast<double>(j.correct) / static_cast<double>(total);
        s.refusal += static_cast<double>(j.refusal) / static_cast<double>(total);
        s.incorrect += static_cast<double>(j.incorrect) / static_cast<double>(total);
    }
    if (counted > 0) {
        s.correct /= static_cast<double>(counted);
        s.refusal /= static_cast<double>(counted);
        s.incorrect /= static_cast<double>(counted);
    }
    return s;
}

PairwiseJudgment parse_pairwise(std::string_view response) {
    PairwiseJudgment out;
    const auto j = parse_object(response);
    if (!j.is_object()) {
        out.error = "judge output is not a JSON object";
        return out;
    }
    out.comprehensiveness = winner_of(j, "Comprehensiveness");
    out.diversity = winner_of(j, "Diversity");
    out.temporal_coverage = winner_of(j, "Temporal Coverage");
    out.overall = winner_of(j, "Overall Winner");
    for (auto w : {out.comprehensiveness, out.diversity, out.temporal_coverage, out.overall}) {
        if (w == PairwiseWinner::kNone) {
            out.error = "missing or invalid winner";
            return out;
        }
    }
    out.parsed = true;
    return out;
}

std::vector<PairwiseJudgment> judge_pairwise(const std::vector<PairwiseInput>& inputs, LlmProvider& judge_provider,
                                             const PromptLibrary& prompts) {
    std::vector<PairwiseJudgment> out;
    for (const auto& in : inputs) {
        std::map<std::string, std::string> vars = {
            {"question", in.question}, {"prediction1", in.prediction1}, {"prediction2", in.prediction2}};
        ChatRequest req;
        req.template_id = std::string(templates::kJudgePairwise);
        req.key = in.query_id;
        req.rendered_prompt = prompts.render(templates::kJudgePairwise, vars);
        req.variables = std::move(vars);
        req.max_output_tokens = 1024;
        PairwiseJudgment pj;
        try {
            pj = parse_pairwise(judge_provider.complete(req).text);
        } catch (const ProviderError& e) {
            pj.error = e.what();
        }
        pj.query_id = in.query_id;
        out.push_back(std::move(pj));
    }
    return out;
}

WinRates win_rates(const std::vector<PairwiseJudgment>& judgments) {
    WinRates w;
    for (const auto& j : judgments) {
        if (!j.parsed) {
            ++w.unparsed;
            continue;
        }
        ++w.parsed;
        w.comprehensiveness += j.comprehensiveness == PairwiseWinner::kFirst;
        w.diversity += j.diversity == PairwiseWinner::kFirst;
        w.temporal_coverage += j.temporal_coverage == PairwiseWinner::kFirst;
        w.overall += j.overall == PairwiseWinner::kFirst;
    }
    if (w.parsed > 0) {
        const auto n = static_cast<double>(w.parsed);
        w.comprehensiveness /= n;
        w.diversity /= n;
        w.temporal_coverage /= n;
        w.overall /= n;
    }
    return w;
}

} // namespace tgrag
