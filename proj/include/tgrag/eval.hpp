#pragma once

#include "tgrag/ingest.hpp"
#include "tgrag/retrieval.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tgrag {

// Lower-cased runs of ASCII letters and digits.
std::vector<std::string> metric_tokens(std::string_view text);

// LCS F-measure (beta = 1) over metric tokens. 0 when either side is empty.
double rouge_l(std::string_view prediction, std::string_view reference);

// Bag-of-tokens F1 with multiplicity. 0 when either side is empty.
double token_f1(std::string_view prediction, std::string_view reference);

struct QARecord {
    std::string query_id;
    std::string question;
    std::string gold_answer;
    std::string prediction;
    std::string mode = "local"; // local | global
    std::string slice = "base"; // base | new
    std::string error;          // set when answering failed
};

// JSON-lines of {query_id, question, gold_answer, mode?, slice?}. Missing
// slice defaults to default_slice.
std::vector<QARecord> load_queries(const std::filesystem::path& path, const std::string& default_slice);

enum class Scenario { kBaseOnBase, kBaseOnUpdated, kNewOnUpdated };
std::string_view scenario_name(Scenario s);

struct ScenarioReport {
    Scenario scenario = Scenario::kBaseOnBase;
    std::size_t queries = 0;
    std::size_t failed = 0;
    double rouge_l = 0.0;
    double token_f1 = 0.0;
    double refusal_rate = 0.0;
    std::vector<QARecord> records;
    TokenCounts index_tokens;  // base build
    TokenCounts update_tokens; // incremental update (zero for scenario 1)
    std::optional<TokenCounts> rebuild_tokens; // full build of base + new
    std::string error;
};

struct EvalEngine {
    LlmProvider& llm;
    EmbeddingProvider& embedder;
    const PromptLibrary& prompts = PromptLibrary::defaults();
    const Tokenizer& tokenizer = default_tokenizer();
    IndexConfig index{};
    RetrievalConfig retrieval{};
    // Also index base + new from scratch to compare against the update cost.
    bool measure_rebuild = true;
    // Provider for answering; llm when null. Meters stay on llm.
    LlmProvider* answer_llm = nullptr;
};

// Builds the base index (scenario 1), applies the new corpus incrementally
// to a copy (scenarios 2 and 3). The base state is never mutated. A failure
// is recorded on the affected scenarios only.
std::vector<ScenarioReport> run_protocol(const std::vector<Document>& base_corpus,
                                         const std::vector<Document>& new_corpus,
                                         const std::vector<QARecord>& base_queries,
                                         const std::vector<QARecord>& new_queries,
                                         const EvalEngine& engine);

// Answers and scores a query set against a fixed state.
ScenarioReport evaluate_queries(Scenario scenario, const std::vector<QARecord>& queries,
                                const IndexState& state, const EvalEngine& engine);

nlohmann::json to_json(const ScenarioReport& r);
std::string format_report_table(const std::vector<ScenarioReport>& reports);

// Protocol file: {"base_corpus": dir, "new_corpus": dir, "base_queries":
// file, "new_queries": file, "mock_fixtures": [files]?, "measure_rebuild"?}.
// Relative paths are resolved against the protocol file's directory.
struct ProtocolSpec {
    std::filesystem::path base_corpus;
    std::filesystem::path new_corpus;
    std::filesystem::path base_queries;
    std::filesystem::path new_queries;
    std::vector<std::filesystem::path> mock_fixtures;
    bool measure_rebuild = true;
};
ProtocolSpec load_protocol(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// LLM judge

struct Judgment {
    std::string query_id;
    bool parsed = false;
    std::size_t correct = 0;
    std::size_t refusal = 0;
    std::size_t incorrect = 0;
    std::string error; // parse or provider failure

    std::size_t total() const { return correct + refusal + incorrect; }
};

// Counts are parsed from strict JSON with keys among "correct", "refusal"
// (or "correctly refusal") and "incorrect". Anything else leaves parsed
// false.
Judgment parse_judgment(std::string_view response);

// Uses the refusal template when the gold answer says the question is
// unanswerable, the local template otherwise. Scripted key: query_id.
std::vector<Judgment> judge(const std::vector<QARecord>& records, LlmProvider& judge_provider,
                            const PromptLibrary& prompts = PromptLibrary::defaults());

struct JudgeSummary {
    std::size_t judged = 0;
    std::size_t unparsed = 0;
    // Parsed outputs whose counts are all zero, so proportions cannot sum to 1.
    std::size_t sum_violations = 0;
    double correct = 0.0;
    double refusal = 0.0;
    double incorrect = 0.0;
};
JudgeSummary summarize_judgments(const std::vector<Judgment>& judgments);

enum class PairwiseWinner { kNone, kFirst, kSecond };

struct PairwiseJudgment {
    std::string query_id;
    bool parsed = false;
    PairwiseWinner comprehensiveness = PairwiseWinner::kNone;
    PairwiseWinner diversity = PairwiseWinner::kNone;
    PairwiseWinner temporal_coverage = PairwiseWinner::kNone;
    PairwiseWinner overall = PairwiseWinner::kNone;
    std::string error;
};

PairwiseJudgment parse_pairwise(std::string_view response);

struct PairwiseInput {
    std::string query_id;
    std::string question;
    std::string prediction1;
    std::string prediction2;
};

std::vector<PairwiseJudgment> judge_pairwise(const std::vector<PairwiseInput>& inputs,
                                             LlmProvider& judge_provider,
                                             const PromptLibrary& prompts = PromptLibrary::defaults());

// Fraction of parsed judgments won by answer 1, per criterion.
struct WinRates {
    std::size_t parsed = 0;
    std::size_t unparsed = 0;
    double comprehensiveness = 0.0;
    double diversity = 0.0;
    double temporal_coverage = 0.0;
    double overall = 0.0;
};
WinRates win_rates(const std::vector<PairwiseJudgment>& judgments);

} // namespace tgrag
