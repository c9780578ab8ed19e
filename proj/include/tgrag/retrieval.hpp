#pragma once

#include "tgrag/embedding.hpp"
#include "tgrag/graph.hpp"
#include "tgrag/ingest.hpp"
#include "tgrag/llm.hpp"
#include "tgrag/prompts.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tgrag {

// ---------------------------------------------------------------------------
// Time scope

enum class TemporalLogic { kAt, kBefore, kAfter, kBetween, kNone };

std::string_view temporal_logic_name(TemporalLogic logic);
std::optional<TemporalLogic> temporal_logic_from_name(std::string_view name);

struct TimeClause {
    TemporalLogic logic = TemporalLogic::kNone;
    std::vector<Timestamp> anchors;
    bool operator==(const TimeClause&) const = default;
};

// logic/anchors describe the first clause the extractor produced; further
// clauses (a query naming several periods) are kept in extra_clauses and
// contribute to resolved.
struct TimeScope {
    TemporalLogic logic = TemporalLogic::kNone;
    std::vector<Timestamp> anchors;
    std::vector<TimeClause> extra_clauses;
    std::set<Timestamp> resolved;

    bool is_none() const { return logic == TemporalLogic::kNone; }
    bool operator==(const TimeScope&) const = default;
};

// Parses the time-identification tuple grammar:
//   ("entity"<|>"at|before|after"<|>"<timestamp>"<|>"<type>")
//   ("entity"<|>"between"<|>"<timestamp>"<|>"<timestamp>"<|>"<type>")
// Unusable output yields a NONE scope. BETWEEN anchors are ordered and
// lifted to a common granularity. resolved is left empty.
TimeScope parse_time_scope(std::string_view response);

// AT -> {anchor}; BETWEEN -> every bucket at the anchors' granularity in
// [a1, a2]; BEFORE/AFTER -> same-granularity hierarchy nodes strictly
// before/after the anchor; NONE -> {}.
std::set<Timestamp> expand_scope(const TimeScope& scope, const BiLevelGraph& hierarchy);

TimeScope identify_time_scope(const std::string& query, LlmProvider& provider,
                              const BiLevelGraph& hierarchy,
                              const PromptLibrary& prompts = PromptLibrary::defaults());

// Indicator used by edge scoring: true when t overlaps a member of the
// resolved set. A NONE scope applies no temporal filter.
bool in_scope(const Timestamp& t, const TimeScope& scope);

// ---------------------------------------------------------------------------
// Subgraph and scoring

enum class ScoringMode { kFull, kNoPpr, kNoTemporal, kNoTemporalNoPpr, kStatic };

std::string_view scoring_mode_name(ScoringMode mode);
std::optional<ScoringMode> scoring_mode_from_name(std::string_view name);

struct RetrievedEdge {
    EdgeId id{};
    double gamma = 0.0; // cosine(query, edge)
    bool operator==(const RetrievedEdge&) const = default;
};

struct QuerySubgraph {
    std::vector<RetrievedEdge> edges; // descending gamma, ties by id
    std::set<EntityId> entities;
    std::set<EntityId> seeds;
    bool seed_fallback = false;

    std::map<EdgeId, double> gamma_map() const;
};

// Top-k edges by cosine define the subgraph; seeds are the endpoints of
// retrieved edges that fall in scope, or every subgraph entity when there
// are none. Throws Error(kEmptyIndex) when the edge index is empty.
QuerySubgraph position_subgraph(const Vector& query_vec, const VectorIndex& edge_index,
                                const BiLevelGraph& g, const TimeScope& scope, std::size_t k);

struct PageRankConfig {
    double damping = 0.85;
    double tolerance = 1e-8; // L1 change between iterations
    int max_iterations = 100;
};

// Power iteration on an undirected multigraph over nodes [0, n). Each
// (u, v) pair is one unit-weight edge; a self loop adds one to the node's
// degree. personalization need not be normalized. Scores sum to 1.
std::vector<double> personalized_pagerank(std::size_t n,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                          const std::vector<double>& personalization,
                                          const PageRankConfig& cfg = {});

// PPR over the entity graph induced by the subgraph edges with uniform
// restart over the seeds. Throws Error(kEmptySubgraph).
std::map<EntityId, double> ppr(const QuerySubgraph& sg, const BiLevelGraph& g,
                               const PageRankConfig& cfg = {});

// Standard PageRank over the whole entity graph, uniform teleport.
std::map<EntityId, double> pagerank(const BiLevelGraph& g, const PageRankConfig& cfg = {});

// FULL:               1[in scope] * (s(v1) + s(v2)), s from ppr
// NO_PPR:             1[in scope] * gamma
// NO_TEMPORAL:        s(v1) + s(v2), s from unpersonalized pagerank
// NO_TEMPORAL_NO_PPR: gamma
// gamma-based scores are floored at 0.
// STATIC:             max gamma over retrieved edges joining the same
//                     entity pair (timestamps collapsed)
std::map<EdgeId, double> score_edges(const QuerySubgraph& sg, const BiLevelGraph& g,
                                     const std::map<EntityId, double>& entity_scores,
                                     const TimeScope& scope, ScoringMode mode);

// Entity scores a mode needs: ppr for FULL, pagerank for NO_TEMPORAL, none
// otherwise.
std::map<EntityId, double> entity_scores_for(ScoringMode mode, const QuerySubgraph& sg,
                                             const BiLevelGraph& g, const PageRankConfig& cfg = {});

struct ScoredChunk {
    ChunkId chunk_id;
    double score = 0.0;
    std::size_t token_count = 0;
    bool operator==(const ScoredChunk&) const = default;
};

enum class ChunkSumScope {
    kChunkEdges, // sum over retrieved edges extracted from the chunk
    kAllRetrieved, // sum over every retrieved edge (literal reading)
};

// s(c) = prod over retrieved edges of c of (1 + gamma) * sum of s(edge),
// with the sum taken per sum_scope. Every chunk in the store is returned,
// sorted by score descending then id ascending.
std::vector<ScoredChunk> score_chunks(const ChunkStore& chunks, const QuerySubgraph& sg,
                                      const BiLevelGraph& g,
                                      const std::map<EdgeId, double>& edge_scores,
                                      ChunkSumScope sum_scope = ChunkSumScope::kChunkEdges);

// Longest prefix of the sorted chunks that fits in budget tokens.
std::vector<ScoredChunk> pack_context(const std::vector<ScoredChunk>& sorted, std::size_t budget);

// Number of leading items whose token counts fit in budget.
std::size_t greedy_prefix(const std::vector<std::size_t>& token_counts, std::size_t budget);

// ---------------------------------------------------------------------------
// Pipelines

struct RetrievalConfig {
    std::size_t top_k = 20;
    std::size_t local_budget = 12000;
    std::size_t global_budget = 24000;
    double chunk_fraction = 0.10;
    ScoringMode scoring_mode = ScoringMode::kFull;
    ChunkSumScope chunk_sum = ChunkSumScope::kChunkEdges;
    PageRankConfig pagerank{};
    std::string response_type = "Multiple Paragraphs";
    std::size_t answer_max_tokens = 1024;
    std::size_t points_max_tokens = 1024;
    // Evidence items processed concurrently during point extraction.
    std::size_t point_workers = 1;

    std::size_t chunk_budget() const;
    std::size_t report_budget() const;
    nlohmann::json to_json() const;
};

struct QueryContext {
    LlmProvider& llm;
    EmbeddingProvider& embedder;
    const PromptLibrary& prompts = PromptLibrary::defaults();
    const Tokenizer& tokenizer = default_tokenizer();
};

struct AnswerRecord {
    std::string query;
    std::string mode; // "local" or "global"
    ScoringMode scoring_mode = ScoringMode::kFull;
    std::string answer;
    std::vector<ChunkId> packed_chunks;
    TimeScope scope;
    nlohmann::json trace = nlohmann::json::object();
    // Set when a stage failed; answer is then empty.
    std::optional<ErrorCode> error_code;
    std::optional<ProviderErrorKind> provider_error_kind;
    std::string error_message;

    bool ok() const { return !error_code.has_value(); }
};

nlohmann::json to_json(const TimeScope& scope);
nlohmann::json to_json(const AnswerRecord& rec);

// Time identification, subgraph positioning, scoring, packing and answer
// generation. Stage errors are recorded on the returned record.
AnswerRecord answer_local(const std::string& query, const IndexState& state, const QueryContext& ctx,
                          const RetrievalConfig& cfg = {});

struct EvidenceItem {
    std::string id; // "chunk:<chunk id>" or "report:<time label>"
    std::string text;
    std::size_t token_count = 0;
    bool operator==(const EvidenceItem&) const = default;
};

struct GlobalEvidence {
    std::vector<EvidenceItem> chunks;
    std::vector<EvidenceItem> reports;
    std::size_t chunk_tokens = 0;
    std::size_t report_tokens = 0;
    std::size_t chunk_budget = 0;
    std::size_t report_budget = 0;
};

// Top positive-scored chunks packed into the chunk share of the global
// budget, and reports of the resolved scope nodes (YEAR reports when the
// scope is NONE) packed coarse-to-fine, then chronologically, into the
// rest. Throws Error(kMissingReport) for a scope node lacking a report.
GlobalEvidence collect_global_evidence(const std::vector<ScoredChunk>& ranked_chunks,
                                       const TimeScope& scope, const IndexState& state,
                                       const RetrievalConfig& cfg);

struct AtomicPoint {
    std::string description;
    double importance = 0.0;
    double confidence = 0.0;
    bool operator==(const AtomicPoint&) const = default;
};

// Accepts a JSON list of {description, score|importance, confidence}, or an
// object holding it under "points". Items lacking a field are dropped.
std::vector<AtomicPoint> parse_points(std::string_view response);

std::vector<AtomicPoint> extract_points(const EvidenceItem& evidence, const std::string& query,
                                        LlmProvider& provider,
                                        const PromptLibrary& prompts = PromptLibrary::defaults(),
                                        std::size_t max_output_tokens = 1024);

// One line per point, as fed to synthesis.
std::string serialize_point(const AtomicPoint& p);

struct SynthesisResult {
    std::string answer;
    std::vector<AtomicPoint> kept;    // importance descending
    std::vector<AtomicPoint> removed; // in removal order
    std::size_t points_tokens = 0;
    bool refused = false;
};

// Drops the lowest-confidence points (ties: lower importance, then
// description) until the serialized points fit in budget, orders the rest
// by importance and makes one synthesis call. No call is made when nothing
// survives; the answer is then the refusal text.
SynthesisResult synthesize_global(std::vector<AtomicPoint> points, const std::string& query,
                                  std::size_t budget, const QueryContext& ctx,
                                  const RetrievalConfig& cfg = {});

AnswerRecord answer_global(const std::string& query, const IndexState& state,
                           const QueryContext& ctx, const RetrievalConfig& cfg = {});

} // namespace tgrag
