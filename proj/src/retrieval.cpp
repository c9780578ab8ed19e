#include "tgrag/retrieval.hpp"

#include "tgrag/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <future>

namespace tgrag {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string_view strip_field(std::string_view s) {
    s = trim(s);
    while (!s.empty() && (s.front() == '"' || s.front() == '\'')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == '"' || s.back() == '\'')) s.remove_suffix(1);
    return trim(s);
}

std::vector<std::string_view> split(std::string_view s, std::string_view delim) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(delim, pos);
        if (next == std::string_view::npos) {
            out.push_back(s.substr(pos));
            return out;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + delim.size();
    }
}

// Record bodies between "(" and ")", split on record delimiters and lines.
std::vector<std::string_view> records_of(std::string_view response) {
    std::vector<std::string_view> out;
    const auto end = response.find(kCompletionDelimiter);
    if (end != std::string_view::npos) response = response.substr(0, end);
    for (auto piece : split(response, kRecordDelimiter)) {
        for (auto line : split(piece, "\n")) {
            line = trim(line);
            const auto open = line.find('(');
            const auto close = line.rfind(')');
            if (open == std::string_view::npos || close == std::string_view::npos || close <= open) continue;
            out.push_back(line.substr(open + 1, close - open - 1));
        }
    }
    return out;
}

std::optional<Timestamp> try_parse(std::string_view s) {
    try {
        return parse_timestamp(s);
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::optional<TimeClause> parse_clause(std::string_view body) {
    const auto fields = split(body, kTupleDelimiter);
    if (fields.size() < 3) return std::nullopt;
    const auto logic = temporal_logic_from_name(strip_field(fields[1]));
    if (!logic || *logic == TemporalLogic::kNone) return std::nullopt;
    TimeClause c;
    c.logic = *logic;
    if (c.logic == TemporalLogic::kBetween) {
        if (fields.size() < 4) return std::nullopt;
        auto a = try_parse(strip_field(fields[2]));
        auto b = try_parse(strip_field(fields[3]));
        if (!a || !b) return std::nullopt;
        const auto g = std::min(a->granularity, b->granularity);
        *a = lift_to(*a, g);
        *b = lift_to(*b, g);
        if (*b < *a) std::swap(*a, *b);
        c.anchors = {*a, *b};
    } else {
        auto a = try_parse(strip_field(fields[2]));
        if (!a) return std::nullopt;
        c.anchors = {*a};
    }
    return c;
}

constexpr std::size_t kMaxEnumeratedBuckets = 100000;

void expand_clause(const TimeClause& c, const BiLevelGraph& h, std::set<Timestamp>& out) {
    switch (c.logic) {
    case TemporalLogic::kNone:
        return;
    case TemporalLogic::kAt:
        out.insert(c.anchors.at(0));
        return;
    case TemporalLogic::kBetween: {
        const auto& a = c.anchors.at(0);
        const auto& b = c.anchors.at(1);
        std::set<Timestamp> buckets;
        for (Timestamp t = a; !(b < t); t = next_bucket(t)) {
            if (buckets.size() >= kMaxEnumeratedBuckets) {
                buckets.clear();
                for (const auto& [id, node] : h.time_nodes()) {
                    if (id.granularity == a.granularity && !(id < a) && !(b < id)) buckets.insert(id);
                }
                break;
            }
            buckets.insert(t);
        }
        out.insert(buckets.begin(), buckets.end());
        return;
    }
    case TemporalLogic::kBefore:
    case TemporalLogic::kAfter: {
        const auto& a = c.anchors.at(0);
        for (const auto& [id, node] : h.time_nodes()) {
            if (id.granularity != a.granularity) continue;
            if (c.logic == TemporalLogic::kBefore ? id < a : a < id) out.insert(id);
        }
        return;
    }
    }
}

std::string upper_snake(std::string_view s) {
    std::string out;
    for (char c : trim(s)) {
        out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    return out;
}

std::string fmt_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

void record_failure(AnswerRecord& rec, const Error& e) {
    rec.error_code = e.code();
    if (const auto* pe = dynamic_cast<const ProviderError*>(&e)) rec.provider_error_kind = pe->kind();
    rec.error_message = e.what();
    rec.answer.clear();
}

struct Ranked {
    TimeScope scope;
    std::vector<ScoredChunk> chunks; // positive scores only, sorted
};

// Shared front half of both pipelines: scope, subgraph, scores, ranking.
Ranked rank_chunks(const std::string& query, const IndexState& state, const QueryContext& ctx,
                   const RetrievalConfig& cfg, nlohmann::json& trace) {
    Ranked out;
    out.scope = identify_time_scope(query, ctx.llm, state.graph, ctx.prompts);
    trace["time_scope"] = to_json(out.scope);
    if (state.edge_vectors.empty()) {
        trace["subgraph"] = {{"edges", nlohmann::json::array()}, {"seeds", nlohmann::json::array()},
                             {"seed_fallback", false}};
        return out;
    }
    const auto qvec = embed({query}, ctx.embedder).at(0);
    const auto sg = position_subgraph(qvec, state.edge_vectors, state.graph, out.scope, cfg.top_k);
    const auto ent = entity_scores_for(cfg.scoring_mode, sg, state.graph, cfg.pagerank);
    const auto edge_scores = score_edges(sg, state.graph, ent, out.scope, cfg.scoring_mode);
    auto scored = score_chunks(state.chunks, sg, state.graph, edge_scores, cfg.chunk_sum);

    const auto& g = state.graph;
    auto edges_json = nlohmann::json::array();
    for (const auto& re : sg.edges) {
        const auto& e = g.edge(re.id);
        edges_json.push_back({{"id", raw(re.id)},
                              {"head", g.entity(e.head).name},
                              {"tail", g.entity(e.tail).name},
                              {"relation", e.relation},
                              {"timestamp", e.timestamp.to_string()},
                              {"chunk", e.source_chunk},
                              {"gamma", re.gamma},
                              {"in_scope", in_scope(e.timestamp, out.scope)},
                              {"score", edge_scores.at(re.id)}});
    }
    auto seeds_json = nlohmann::json::array();
    for (EntityId s : sg.seeds) seeds_json.push_back(g.entity(s).name);
    trace["subgraph"] = {{"edges", edges_json}, {"seeds", seeds_json}, {"seed_fallback", sg.seed_fallback}};
    auto ent_json = nlohmann::json::array();
    for (EntityId v : sg.entities) {
        const auto it = ent.find(v);
        ent_json.push_back({{"entity", g.entity(v).name}, {"score", it == ent.end() ? 0.0 : it->second}});
    }
    trace["entity_scores"] = ent_json;

    for (auto& c : scored) {
        if (c.score > 0.0) out.chunks.push_back(std::move(c));
    }
    auto chunks_json = nlohmann::json::array();
    for (const auto& c : out.chunks) {
        chunks_json.push_back({{"chunk", c.chunk_id}, {"score", c.score}, {"tokens", c.token_count}});
    }
    trace["chunk_scores"] = chunks_json;
    return out;
}

} // namespace

std::string_view temporal_logic_name(TemporalLogic logic) {
    switch (logic) {
    case TemporalLogic::kAt: return "AT";
    case TemporalLogic::kBefore: return "BEFORE";
    case TemporalLogic::kAfter: return "AFTER";
    case TemporalLogic::kBetween: return "BETWEEN";
    case TemporalLogic::kNone: return "NONE";
    }
    return "NONE";
}

std::optional<TemporalLogic> temporal_logic_from_name(std::string_view name) {
    const auto n = upper_snake(name);
    for (auto l : {TemporalLogic::kAt, TemporalLogic::kBefore, TemporalLogic::kAfter,
                   TemporalLogic::kBetween, TemporalLogic::kNone}) {
        if (n == temporal_logic_name(l)) return l;
    }
    return std::nullopt;
}

TimeScope parse_time_scope(std::string_view response) {
    TimeScope scope;
    bool first = true;
    for (auto body : records_of(response)) {
        auto clause = parse_clause(body);
        if (!clause) continue;
        if (first) {
            scope.logic = clause->logic;
            scope.anchors = std::move(clause->anchors);
            first = false;
        } else {
            scope.extra_clauses.push_back(std::move(*clause));
        }
    }
    return scope;
}

std::set<Timestamp> expand_scope(const TimeScope& scope, const BiLevelGraph& hierarchy) {
    std::set<Timestamp> out;
    if (scope.is_none()) return out;
    expand_clause({scope.logic, scope.anchors}, hierarchy, out);
    for (const auto& c : scope.extra_clauses) expand_clause(c, hierarchy, out);
    return out;
}

TimeScope identify_time_scope(const std::string& query, LlmProvider& provider,
                              const BiLevelGraph& hierarchy, const PromptLibrary& prompts) {
    std::map<std::string, std::string> vars = {
        {"input_text", query},
        {"tuple_delimiter", std::string(kTupleDelimiter)},
        {"record_delimiter", std::string(kRecordDelimiter)},
        {"completion_delimiter", std::string(kCompletionDelimiter)},
    };
    ChatRequest req;
    req.template_id = std::string(templates::kTimeScope);
    req.key = query;
    req.rendered_prompt = prompts.render(templates::kTimeScope, vars);
    req.variables = std::move(vars);
    req.max_output_tokens = 256;
    auto scope = parse_time_scope(provider.complete(req).text);
    scope.resolved = expand_scope(scope, hierarchy);
    return scope;
}

bool in_scope(const Timestamp& t, const TimeScope& scope) {
    if (scope.is_none()) return true;
    for (const auto& r : scope.resolved) {
        if (overlaps(t, r)) return true;
    }
    return false;
}

std::string_view scoring_mode_name(ScoringMode mode) {
    switch (mode) {
    case ScoringMode::kFull: return "FULL";
    case ScoringMode::kNoPpr: return "NO_PPR";
    case ScoringMode::kNoTemporal: return "NO_TEMPORAL";
    case ScoringMode::kNoTemporalNoPpr: return "NO_TEMPORAL_NO_PPR";
    case ScoringMode::kStatic: return "STATIC";
    }
    return "FULL";
}

std::optional<ScoringMode> scoring_mode_from_name(std::string_view name) {
    const auto n = upper_snake(name);
    for (auto m : {ScoringMode::kFull, ScoringMode::kNoPpr, ScoringMode::kNoTemporal,
                   ScoringMode::kNoTemporalNoPpr, ScoringMode::kStatic}) {
        if (n == scoring_mode_name(m)) return m;
    }
    return std::nullopt;
}

std::map<EdgeId, double> QuerySubgraph::gamma_map() const {
    std::map<EdgeId, double> m;
    for (const auto& e : edges) m[e.id] = e.gamma;
    return m;
}

QuerySubgraph position_subgraph(const Vector& query_vec, const VectorIndex& edge_index,
                                const BiLevelGraph& g, const TimeScope& scope, std::size_t k) {
    if (edge_index.empty()) throw Error(ErrorCode::kEmptyIndex, "edge index is empty");
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "top_k must be at least 1");
    QuerySubgraph sg;
    for (const auto& hit : edge_index.top_k(query_vec, k)) {
        const EdgeId id{hit.id};
        const auto& e = g.edge(id);
        sg.edges.push_back({id, hit.score});
        sg.entities.insert(e.head);
        sg.entities.insert(e.tail);
        if (!scope.is_none() && in_scope(e.timestamp, scope)) {
            sg.seeds.insert(e.head);
            sg.seeds.insert(e.tail);
        }
    }
    if (sg.seeds.empty()) {
        sg.seeds = sg.entities;
        sg.seed_fallback = true;
    }
    return sg;
}

std::vector<double> personalized_pagerank(std::size_t n,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                          const std::vector<double>& personalization,
                                          const PageRankConfig& cfg) {
    if (n == 0) return {};
    if (personalization.size() != n) {
        throw Error(ErrorCode::kInvalidArgument, "personalization size does not match node count");
    }
    std::vector<double> p = personalization;
    double psum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "personalization must be non-negative");
        psum += v;
    }
    if (psum <= 0.0) {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(n));
    } else {
        for (auto& v : p) v /= psum;
    }

    std::vector<std::map<std::size_t, double>> adj(n);
    std::vector<double> degree(n, 0.0);
    for (const auto& [u, v] : edges) {
        if (u >= n || v >= n) throw Error(ErrorCode::kInvalidArgument, "edge endpoint out of range");
        if (u == v) {
            adj[u][u] += 1.0;
            degree[u] += 1.0;
        } else {
            adj[u][v] += 1.0;
            adj[v][u] += 1.0;
            degree[u] += 1.0;
            degree[v] += 1.0;
        }
    }

    const double d = cfg.damping;
    std::vector<double> x = p;
    std::vector<double> next(n);
    for (int it = 0; it < cfg.max_iterations; ++it) {
        double dangling = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
            if (degree[u] == 0.0) dangling += x[u];
        }
        for (std::size_t v = 0; v < n; ++v) next[v] = ((1.0 - d) + d * dangling) * p[v];
        for (std::size_t u = 0; u < n; ++u) {
            if (degree[u] == 0.0) continue;
            const double share = d * x[u] / degree[u];
            for (const auto& [v, w] : adj[u]) next[v] += share * w;
        }
        double residual = 0.0;
        for (std::size_t v = 0; v < n; ++v) residual += std::abs(next[v] - x[v]);
        x.swap(next);
        if (residual < cfg.tolerance) break;
    }
    double total = 0.0;
    for (double v : x) total += v;
    if (total > 0.0) {
        for (auto& v : x) v /= total;
    }
    return x;
}

namespace {

std::map<EntityId, double> run_pagerank(const std::set<EntityId>& nodes,
                                        const std::vector<const TemporalEdge*>& edges,
                                        const std::set<EntityId>& restart, const PageRankConfig& cfg) {
    std::map<EntityId, std::size_t> index;
    std::vector<EntityId> order(nodes.begin(), nodes.end());
    for (std::size_t i = 0; i < order.size(); ++i) index[order[i]] = i;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(edges.size());
    for (const auto* e : edges) pairs.emplace_back(index.at(e->head), index.at(e->tail));
    std::vector<double> p(order.size(), 0.0);
    for (EntityId s : restart) {
        const auto it = index.find(s);
        if (it != index.end()) p[it->second] = 1.0;
    }
    const auto x = personalized_pagerank(order.size(), pairs, p, cfg);
    std::map<EntityId, double> out;
    for (std::size_t i = 0; i < order.size(); ++i) out[order[i]] = x[i];
    return out;
}

} // namespace

std::map<EntityId, double> ppr(const QuerySubgraph& sg, const BiLevelGraph& g, const PageRankConfig& cfg) {
    if (sg.edges.empty() || sg.entities.empty()) throw Error(ErrorCode::kEmptySubgraph, "query subgraph is empty");
    std::vector<const TemporalEdge*> edges;
    for (const auto& re : sg.edges) edges.push_back(&g.edge(re.id));
    return run_pagerank(sg.entities, edges, sg.seeds, cfg);
}

std::map<EntityId, double> pagerank(const BiLevelGraph& g, const PageRankConfig& cfg) {
    std::set<EntityId> nodes;
    for (const auto& [id, e] : g.entities()) nodes.insert(id);
    if (nodes.empty()) throw Error(ErrorCode::kEmptySubgraph, "entity graph is empty");
    std::vector<const TemporalEdge*> edges;
    for (const auto& [id, e] : g.edges()) edges.push_back(&e);
    return run_pagerank(nodes, edges, nodes, cfg);
}

std::map<EntityId, double> entity_scores_for(ScoringMode mode, const QuerySubgraph& sg,
                                             const BiLevelGraph& g, const PageRankConfig& cfg) {
    switch (mode) {
    case ScoringMode::kFull: return ppr(sg, g, cfg);
    case ScoringMode::kNoTemporal: return pagerank(g, cfg);
    default: return {};
    }
}

std::map<EdgeId, double> score_edges(const QuerySubgraph& sg, const BiLevelGraph& g,
                                     const std::map<EntityId, double>& entity_scores,
                                     const TimeScope& scope, ScoringMode mode) {
    auto s = [&](EntityId v) {
        const auto it = entity_scores.find(v);
        return it == entity_scores.end() ? 0.0 : it->second;
    };
    std::map<std::pair<EntityId, EntityId>, double> pair_max;
    if (mode == ScoringMode::kStatic) {
        for (const auto& re : sg.edges) {
            const auto& e = g.edge(re.id);
            const auto key = std::minmax(e.head, e.tail);
            auto [it, fresh] = pair_max.emplace(key, re.gamma);
            if (!fresh) it->second = std::max(it->second, re.gamma);
        }
    }
    std::map<EdgeId, double> out;
    for (const auto& re : sg.edges) {
        const auto& e = g.edge(re.id);
        const double gamma = std::max(0.0, re.gamma);
        double v = 0.0;
        switch (mode) {
        case ScoringMode::kFull:
            v = in_scope(e.timestamp, scope) ? s(e.head) + s(e.tail) : 0.0;
            break;
        case ScoringMode::kNoPpr:
            v = in_scope(e.timestamp, scope) ? gamma : 0.0;
            break;
        case ScoringMode::kNoTemporal:
            v = s(e.head) + s(e.tail);
            break;
        case ScoringMode::kNoTemporalNoPpr:
            v = gamma;
            break;
        case ScoringMode::kStatic:
            v = std::max(0.0, pair_max.at(std::minmax(e.head, e.tail)));
            break;
        }
        out[re.id] = v;
    }
    return out;
}

std::vector<ScoredChunk> score_chunks(const ChunkStore& chunks, const QuerySubgraph& sg,
                                      const BiLevelGraph& g,
                                      const std::map<EdgeId, double>& edge_scores,
                                      ChunkSumScope sum_scope) {
    struct Acc {
        double weight = 1.0;
        double sum = 0.0;
    };
    std::map<ChunkId, Acc> acc;
    double total = 0.0;
    for (const auto& re : sg.edges) {
        const auto it = edge_scores.find(re.id);
        const double se = it == edge_scores.end() ? 0.0 : it->second;
        total += se;
        auto& a = acc[g.edge(re.id).source_chunk];
        a.weight *= 1.0 + re.gamma;
        a.sum += se;
    }
    std::vector<ScoredChunk> out;
    out.reserve(chunks.size());
    for (const auto& [id, c] : chunks) {
        ScoredChunk sc{id, 0.0, c.token_count()};
        const auto it = acc.find(id);
        if (it != acc.end()) {
            const double sum = sum_scope == ChunkSumScope::kChunkEdges ? it->second.sum : total;
            sc.score = std::max(0.0, it->second.weight * sum);
        }
        out.push_back(std::move(sc));
    }
    std::stable_sort(out.begin(), out.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    });
    return out;
}

std::size_t greedy_prefix(const std::vector<std::size_t>& token_counts, std::size_t budget) {
    std::size_t used = 0;
    std::size_t n = 0;
    for (auto t : token_counts) {
        if (t > budget - used) break;
        used += t;
        ++n;
    }
    return n;
}

std::vector<ScoredChunk> pack_context(const std::vector<ScoredChunk>& sorted, std::size_t budget) {
    std::vector<std::size_t> tokens;
    tokens.reserve(sorted.size());
    for (const auto& c : sorted) tokens.push_back(c.token_count);
    const auto n = greedy_prefix(tokens, budget);
    return {sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::size_t RetrievalConfig::chunk_budget() const {
    const double share = std::clamp(chunk_fraction, 0.0, 1.0);
    return static_cast<std::size_t>(std::llround(static_cast<double>(global_budget) * share));
}

std::size_t RetrievalConfig::report_budget() const { return global_budget - chunk_budget(); }

nlohmann::json RetrievalConfig::to_json() const {
    return {{"top_k", top_k},
            {"local_budget", local_budget},
            {"global_budget", global_budget},
            {"chunk_fraction", chunk_fraction},
            {"scoring_mode", std::string(scoring_mode_name(scoring_mode))},
            {"chunk_sum", chunk_sum == ChunkSumScope::kChunkEdges ? "chunk_edges" : "all_retrieved"},
            {"damping", pagerank.damping},
            {"tolerance", pagerank.tolerance},
            {"max_iterations", pagerank.max_iterations},
            {"response_type", response_type},
            {"answer_max_tokens", answer_max_tokens},
            {"points_max_tokens", points_max_tokens},
            {"point_workers", point_workers}};
}

nlohmann::json to_json(const TimeScope& scope) {
    auto stamps = [](const auto& ts) {
        auto a = nlohmann::json::array();
        for (const auto& t : ts) a.push_back(t.to_string());
        return a;
    };
    auto extra = nlohmann::json::array();
    for (const auto& c : scope.extra_clauses) {
        extra.push_back({{"logic", std::string(temporal_logic_name(c.logic))}, {"anchors", stamps(c.anchors)}});
    }
    return {{"logic", std::string(temporal_logic_name(scope.logic))},
            {"anchors", stamps(scope.anchors)},
            {"extra_clauses", extra},
            {"resolved", stamps(scope.resolved)}};
}

nlohmann::json to_json(const AnswerRecord& rec) {
    nlohmann::json j = {{"query", rec.query},
                        {"mode", rec.mode},
                        {"scoring_mode", std::string(scoring_mode_name(rec.scoring_mode))},
                        {"answer", rec.answer},
                        {"packed_chunks", rec.packed_chunks},
                        {"time_scope", to_json(rec.scope)},
                        {"trace", rec.trace}};
    if (rec.error_code) {
        nlohmann::json err = {{"code", std::string(error_code_name(*rec.error_code))},
                              {"message", rec.error_message}};
        if (rec.provider_error_kind) err["kind"] = std::string(provider_error_kind_name(*rec.provider_error_kind));
        j["error"] = err;
    }
    return j;
}

AnswerRecord answer_local(const std::string& query, const IndexState& state, const QueryContext& ctx,
                          const RetrievalConfig& cfg) {
    AnswerRecord rec;
    rec.query = query;
    rec.mode = "local";
    rec.scoring_mode = cfg.scoring_mode;
    rec.trace["config"] = cfg.to_json();
    try {
        auto ranked = rank_chunks(query, state, ctx, cfg, rec.trace);
        rec.scope = ranked.scope;
        const auto packed = pack_context(ranked.chunks, cfg.local_budget);
        std::size_t used = 0;
        std::string context;
        for (const auto& c : packed) {
            rec.packed_chunks.push_back(c.chunk_id);
            used += c.token_count;
            context += "-----\nchunk: " + c.chunk_id + "\n" + state.chunks.at(c.chunk_id).text + "\n";
        }
        rec.trace["packed"] = {{"chunks", rec.packed_chunks}, {"tokens", used}, {"budget", cfg.local_budget}};
        if (packed.empty()) {
            rec.answer = std::string(kRefusalAnswer);
            rec.trace["refused"] = true;
            return rec;
        }
        rec.trace["refused"] = false;
        std::map<std::string, std::string> vars = {
            {"chunks", context}, {"query", query}, {"response_type", cfg.response_type}};
        ChatRequest req;
        req.template_id = std::string(templates::kLocalQuery);
        req.key = query;
        req.rendered_prompt = ctx.prompts.render(templates::kLocalQuery, vars);
        req.variables = std::move(vars);
        req.max_output_tokens = cfg.answer_max_tokens;
        rec.answer = ctx.llm.complete(req).text;
    } catch (const Error& e) {
        record_failure(rec, e);
    }
    return rec;
}

GlobalEvidence collect_global_evidence(const std::vector<ScoredChunk>& ranked_chunks,
                                       const TimeScope& scope, const IndexState& state,
                                       const RetrievalConfig& cfg) {
    GlobalEvidence ev;
    ev.chunk_budget = cfg.chunk_budget();
    ev.report_budget = cfg.report_budget();

    std::vector<ScoredChunk> positive;
    for (const auto& c : ranked_chunks) {
        if (c.score > 0.0) positive.push_back(c);
    }
    for (const auto& c : pack_context(positive, ev.chunk_budget)) {
        ev.chunks.push_back({"chunk:" + c.chunk_id, state.chunks.at(c.chunk_id).text, c.token_count});
        ev.chunk_tokens += c.token_count;
    }

    std::vector<Timestamp> nodes;
    if (scope.is_none()) {
        for (const auto& [t, node] : state.graph.time_nodes()) {
            if (t.granularity == Granularity::kYear) nodes.push_back(t);
        }
    } else {
        for (const auto& t : scope.resolved) {
            if (state.graph.find_time_node(t)) nodes.push_back(t);
        }
    }
    std::sort(nodes.begin(), nodes.end(), [](const Timestamp& a, const Timestamp& b) {
        if (a.granularity != b.granularity) return a.granularity < b.granularity;
        return a < b;
    });
    std::vector<const TimeReport*> reports;
    std::vector<std::size_t> tokens;
    for (const auto& t : nodes) {
        const auto* r = state.reports.find(t);
        if (!r) throw Error(ErrorCode::kMissingReport, "no report for time node " + t.to_string());
        reports.push_back(r);
        tokens.push_back(r->token_count);
    }
    const auto n = greedy_prefix(tokens, ev.report_budget);
    for (std::size_t i = 0; i < n; ++i) {
        ev.reports.push_back({"report:" + reports[i]->time_id.to_string(), reports[i]->text, tokens[i]});
        ev.report_tokens += tokens[i];
    }
    return ev;
}

std::vector<AtomicPoint> parse_points(std::string_view response) {
    auto parsed = nlohmann::json::parse(response, nullptr, false);
    if (parsed.is_discarded()) {
        const auto open = response.find_first_of("[{");
        const auto close = response.find_last_of("]}");
        if (open == std::string_view::npos || close == std::string_view::npos || close < open) return {};
        parsed = nlohmann::json::parse(response.substr(open, close - open + 1), nullptr, false);
        if (parsed.is_discarded()) return {};
    }
    nlohmann::json items;
    if (parsed.is_array()) {
        items = parsed;
    } else if (parsed.is_object() && parsed.contains("points") && parsed["points"].is_array()) {
        items = parsed["points"];
    } else if (parsed.is_object()) {
        items = nlohmann::json::array({parsed});
    } else {
        return {};
    }
    auto number = [](const nlohmann::json& obj, const char* key) -> std::optional<double> {
        const auto it = obj.find(key);
        if (it == obj.end() || !it->is_number()) return std::nullopt;
        const double v = it->get<double>();
        if (!std::isfinite(v)) return std::nullopt;
        return v;
    };
    std::vector<AtomicPoint> out;
    for (const auto& item : items) {
        if (!item.is_object()) continue;
        const auto d = item.find("description");
        if (d == item.end() || !d->is_string()) continue;
        const auto text = std::string(trim(d->get<std::string>()));
        if (text.empty()) continue;
        auto importance = number(item, "importance");
        if (!importance) importance = number(item, "score");
        const auto confidence = number(item, "confidence");
        if (!importance || !confidence) continue;
        out.push_back({text, *importance, *confidence});
    }
    return out;
}

std::vector<AtomicPoint> extract_points(const EvidenceItem& evidence, const std::string& query,
                                        LlmProvider& provider, const PromptLibrary& prompts,
                                        std::size_t max_output_tokens) {
    std::map<std::string, std::string> vars = {{"query", query}, {"evidence", evidence.text}};
    ChatRequest req;
    req.template_id = std::string(templates::kExtractPoints);
    req.key = evidence.id;
    req.rendered_prompt = prompts.render(templates::kExtractPoints, vars);
    req.variables = std::move(vars);
    req.max_output_tokens = max_output_tokens;
    return parse_points(provider.complete(req).text);
}

std::string serialize_point(const AtomicPoint& p) {
    return "- " + p.description + " (importance: " + fmt_number(p.importance) +
           ", confidence: " + fmt_number(p.confidence) + ")\n";
}

SynthesisResult synthesize_global(std::vector<AtomicPoint> points, const std::string& query,
                                  std::size_t budget, const QueryContext& ctx,
                                  const RetrievalConfig& cfg) {
    SynthesisResult res;
    std::size_t total = 0;
    for (const auto& p : points) total += ctx.tokenizer.count(serialize_point(p));
    while (total > budget && !points.empty()) {
        const auto victim = std::min_element(points.begin(), points.end(), [](const AtomicPoint& a, const AtomicPoint& b) {
            if (a.confidence != b.confidence) return a.confidence < b.confidence;
            if (a.importance != b.importance) return a.importance < b.importance;
            return a.description < b.description;
        });
        total -= ctx.tokenizer.count(serialize_point(*victim));
        res.removed.push_back(*victim);
        points.erase(victim);
    }
    std::sort(points.begin(), points.end(), [](const AtomicPoint& a, const AtomicPoint& b) {
        if (a.importance != b.importance) return a.importance > b.importance;
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.description < b.description;
    });
    res.kept = std::move(points);
    res.points_tokens = total;
    if (res.kept.empty()) {
        res.answer = std::string(kRefusalAnswer);
        res.refused = true;
        return res;
    }
    std::string data;
    for (const auto& p : res.kept) data += serialize_point(p);
    std::map<std::string, std::string> vars = {
        {"report_data", data}, {"query", query}, {"response_type", cfg.response_type}};
    ChatRequest req;
    req.template_id = std::string(templates::kGlobalQuery);
    req.key = query;
    req.rendered_prompt = ctx.prompts.render(templates::kGlobalQuery, vars);
    req.variables = std::move(vars);
    req.max_output_tokens = cfg.answer_max_tokens;
    res.answer = ctx.llm.complete(req).text;
    return res;
}

AnswerRecord answer_global(const std::string& query, const IndexState& state, const QueryContext& ctx,
                           const RetrievalConfig& cfg) {
    AnswerRecord rec;
    rec.query = query;
    rec.mode = "global";
    rec.scoring_mode = cfg.scoring_mode;
    rec.trace["config"] = cfg.to_json();
    try {
        auto ranked = rank_chunks(query, state, ctx, cfg, rec.trace);
        rec.scope = ranked.scope;
        const auto ev = collect_global_evidence(ranked.chunks, rec.scope, state, cfg);
        std::vector<EvidenceItem> items = ev.chunks;
        items.insert(items.end(), ev.reports.begin(), ev.reports.end());
        for (const auto& c : ev.chunks) rec.packed_chunks.push_back(c.id.substr(6));

        std::vector<std::vector<AtomicPoint>> per_item(items.size());
        const std::size_t workers = std::max<std::size_t>(1, cfg.point_workers);
        for (std::size_t start = 0; start < items.size(); start += workers) {
            const std::size_t end = std::min(items.size(), start + workers);
            if (workers == 1) {
                per_item[start] = extract_points(items[start], query, ctx.llm, ctx.prompts, cfg.points_max_tokens);
                continue;
            }
            std::vector<std::future<std::vector<AtomicPoint>>> pending;
            for (std::size_t i = start; i < end; ++i) {
                pending.push_back(std::async(std::launch::async, [&, i] {
                    return extract_points(items[i], query, ctx.llm, ctx.prompts, cfg.points_max_tokens);
                }));
            }
            for (std::size_t i = start; i < end; ++i) per_item[i] = pending[i - start].get();
        }

        auto ev_json = nlohmann::json::array();
        std::vector<AtomicPoint> points;
        for (std::size_t i = 0; i < items.size(); ++i) {
            ev_json.push_back({{"id", items[i].id}, {"tokens", items[i].token_count}, {"points", per_item[i].size()}});
            points.insert(points.end(), per_item[i].begin(), per_item[i].end());
        }
        rec.trace["evidence"] = {{"items", ev_json},
                                 {"chunk_tokens", ev.chunk_tokens},
                                 {"chunk_budget", ev.chunk_budget},
                                 {"report_tokens", ev.report_tokens},
                                 {"report_budget", ev.report_budget}};

        const auto synth = synthesize_global(std::move(points), query, cfg.global_budget, ctx, cfg);
        auto point_json = [](const std::vector<AtomicPoint>& ps) {
            auto a = nlohmann::json::array();
            for (const auto& p : ps) {
                a.push_back({{"description", p.description}, {"importance", p.importance}, {"confidence", p.confidence}});
            }
            return a;
        };
        rec.trace["synthesis"] = {{"kept", point_json(synth.kept)},
                                  {"removed", point_json(synth.removed)},
                                  {"points_tokens", synth.points_tokens}};
        rec.trace["refused"] = synth.refused;
        rec.answer = synth.answer;
    } catch (const Error& e) {
        record_failure(rec, e);
    }
    return rec;
}

} // namespace tgrag
