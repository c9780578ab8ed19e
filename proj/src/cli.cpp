#include "tgrag/cli.hpp"

#include "tgrag/config.hpp"
#include "tgrag/error.hpp"
#include "tgrag/eval.hpp"
#include "tgrag/service.hpp"
#include "tgrag/snapshot.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

using nlohmann::json;

namespace tgrag {

namespace {

// Config file reader: JSON when the file starts with '{', TOML otherwise.
// Keys may spell option names with '_' or '-'.
class AutoConfig : public CLI::ConfigTOML {
public:
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        const std::string text((std::istreambuf_iterator<char>(input)), std::istreambuf_iterator<char>());
        const auto first = text.find_first_not_of(" \t\r\n");
        std::vector<CLI::ConfigItem> items;
        if (first != std::string::npos && text[first] == '{') {
            const auto j = json::parse(text, nullptr, false);
            if (j.is_discarded() || !j.is_object()) throw CLI::ConfigError("config file is not a valid JSON object");
            flatten(j, {}, items);
        } else {
            std::istringstream in(text);
            items = CLI::ConfigTOML::from_config(in);
        }
        for (auto& item : items) {
            for (auto& c : item.name) {
                if (c == '_') c = '-';
            }
        }
        return items;
    }

private:
    static std::string scalar(const json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
    }

    static void flatten(const json& obj, const std::vector<std::string>& parents,
                        std::vector<CLI::ConfigItem>& out) {
        for (const auto& [key, v] : obj.items()) {
            if (v.is_null()) continue;
            if (v.is_object()) {
                auto p = parents;
                p.push_back(key);
                flatten(v, p, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (v.is_array()) {
                for (const auto& e : v) item.inputs.push_back(scalar(e));
            } else {
                item.inputs.push_back(scalar(v));
            }
            out.push_back(std::move(item));
        }
    }
};

struct Options {
    std::string index_dir = "tgrag-index";
    std::string prompt_dir;
    bool json = false;
    bool trace = false;
    std::string scoring_mode = "FULL";
    std::string chunk_sum = "chunk_edges";
    std::string index_llm = "mock";
    std::string query_llm = "mock";
    std::string judge_llm = "mock";
    std::string embedder = "mock";
    std::vector<std::string> mock_fixtures;

    std::string corpus_dir;
    std::string docs_dir;
    std::string mode = "local";
    std::string question;
    std::string protocol;
    bool judge = false;
    std::string export_out;
};

void emit(std::ostream& out, const json& j) { out << j.dump(2) << "\n"; }

json tokens_json(const TokenCounts& c) {
    return {{"prompt", c.prompt}, {"completion", c.completion}, {"calls", c.calls}};
}

void print_counts(std::ostream& out, const SnapshotCounts& c) {
    out << "entities " << c.entities << "\n"
        << "edges " << c.edges << "\n"
        << "chunks " << c.chunks << "\n"
        << "documents " << c.documents << "\n"
        << "reports " << c.reports << "\n"
        << "time nodes " << c.total_time_nodes() << " (year " << c.time_nodes[0] << ", quarter "
        << c.time_nodes[1] << ", month " << c.time_nodes[2] << ", day " << c.time_nodes[3] << ")\n";
}

void print_tokens(std::ostream& out, const TokenCounts& c) {
    out << "llm tokens prompt " << c.prompt << " completion " << c.completion << " calls " << c.calls << "\n";
}

std::string join_stamps(const std::set<Timestamp>& ts) {
    std::string s;
    for (const auto& t : ts) s += (s.empty() ? "" : ", ") + t.to_string();
    return s.empty() ? "-" : s;
}

int cmd_index(const Options& o, const EngineConfig& cfg, std::ostream& out) {
    auto p = make_providers(cfg);
    const auto docs = load_corpus(o.corpus_dir);
    const IngestContext ctx{*p.index_llm, *p.embedder, p.prompts};
    const auto state = index_corpus(docs, cfg.index, ctx);
    save_snapshot(state, cfg.index_dir);
    const auto counts = snapshot_counts(state);
    const auto tokens = p.index_llm->meter().read();
    if (o.json) {
        emit(out, {{"command", "index"}, {"documents", docs.size()}, {"counts", to_json(counts)},
                   {"llm_tokens", tokens_json(tokens)}});
    } else {
        out << "indexed " << docs.size() << " documents\n";
        print_counts(out, counts);
        print_tokens(out, tokens);
    }
    return 0;
}

int cmd_update(const Options& o, const EngineConfig& cfg, std::ostream& out) {
    auto p = make_providers(cfg);
    auto state = load_snapshot(cfg.index_dir);
    const auto docs = load_corpus(o.docs_dir);
    const IngestContext ctx{*p.index_llm, *p.embedder, p.prompts};
    const auto outcome = update_corpus(state, docs, ctx);
    save_snapshot(state, cfg.index_dir);
    const auto tokens = p.index_llm->meter().read();
    if (o.json) {
        auto j = to_json(outcome);
        j["command"] = "update";
        j["documents"] = docs.size();
        j["counts"] = to_json(snapshot_counts(state));
        j["llm_tokens"] = tokens_json(tokens);
        emit(out, j);
    } else {
        std::set<Timestamp> regenerated(outcome.regenerated.begin(), outcome.regenerated.end());
        out << "updated with " << docs.size() << " documents\n"
            << "new edges " << outcome.delta.new_edges.size() << "\n"
            << "new chunks " << outcome.delta.new_chunks << "\n"
            << "new time nodes " << join_stamps(outcome.delta.new_time_nodes) << "\n"
            << "dirty time nodes " << join_stamps(outcome.delta.dirty_time_nodes) << "\n"
            << "regenerated reports " << outcome.regenerated.size() << "\n";
        print_tokens(out, tokens);
    }
    return 0;
}

int cmd_query(const Options& o, const EngineConfig& cfg, std::ostream& out, std::ostream& err) {
    auto p = make_providers(cfg);
    const auto state = load_snapshot(cfg.index_dir);
    const QueryContext ctx{*p.query_llm, *p.embedder, p.prompts};
    const auto rec = o.mode == "global" ? answer_global(o.question, state, ctx, cfg.retrieval)
                                        : answer_local(o.question, state, ctx, cfg.retrieval);
    if (o.json) {
        emit(out, to_json(rec));
    } else if (rec.ok()) {
        out << rec.answer << "\n";
        out << "packed chunks: ";
        for (std::size_t i = 0; i < rec.packed_chunks.size(); ++i) out << (i ? ", " : "") << rec.packed_chunks[i];
        out << (rec.packed_chunks.empty() ? "-" : "") << "\n";
        if (o.trace) out << "trace:\n" << rec.trace.dump(2) << "\n";
    }
    if (!rec.ok()) {
        err << "error: " << error_code_name(*rec.error_code) << ": " << rec.error_message << "\n";
        return 1;
    }
    return 0;
}

int cmd_stats(const Options& o, const EngineConfig& cfg, std::ostream& out) {
    const auto m = read_manifest(cfg.index_dir);
    const auto state = load_snapshot(cfg.index_dir);
    const auto counts = snapshot_counts(state);
    if (o.json) {
        emit(out, {{"snapshot", m.location.filename().string()},
                   {"created", m.created},
                   {"config_hash", m.config_hash},
                   {"counts", to_json(counts)}});
    } else {
        out << "snapshot " << m.location.filename().string() << " created " << m.created << "\n";
        print_counts(out, counts);
    }
    return 0;
}

int cmd_eval(const Options& o, const EngineConfig& cfg, std::ostream& out) {
    const auto spec = load_protocol(o.protocol);
    auto p = make_providers(cfg);
    for (const auto& f : spec.mock_fixtures) load_mock_fixture(p, f);
    EvalEngine engine{*p.index_llm, *p.embedder, p.prompts};
    engine.index = cfg.index;
    engine.retrieval = cfg.retrieval;
    engine.measure_rebuild = spec.measure_rebuild;
    engine.answer_llm = p.query_llm.get();
    const auto reports = run_protocol(load_corpus(spec.base_corpus), load_corpus(spec.new_corpus),
                                      load_queries(spec.base_queries, "base"),
                                      load_queries(spec.new_queries, "new"), engine);
    std::vector<JudgeSummary> judged;
    if (o.judge) {
        for (const auto& r : reports) judged.push_back(summarize_judgments(judge(r.records, *p.judge_llm, p.prompts)));
    }
    if (o.json) {
        auto arr = json::array();
        for (std::size_t i = 0; i < reports.size(); ++i) {
            auto j = to_json(reports[i]);
            if (o.judge) {
                const auto& s = judged[i];
                j["judge"] = {{"judged", s.judged}, {"unparsed", s.unparsed}, {"sum_violations", s.sum_violations},
                              {"correct", s.correct}, {"refusal", s.refusal}, {"incorrect", s.incorrect}};
            }
            arr.push_back(j);
        }
        emit(out, {{"command", "eval"}, {"scenarios", arr}});
    } else {
        out << format_report_table(reports);
        for (std::size_t i = 0; i < judged.size(); ++i) {
            out << scenario_name(reports[i].scenario) << " judge: correct " << judged[i].correct << " refusal "
                << judged[i].refusal << " incorrect " << judged[i].incorrect << " unparsed " << judged[i].unparsed
                << "\n";
        }
    }
    return 0;
}

int cmd_export(const Options& o, const EngineConfig& cfg, std::ostream& out) {
    const auto state = load_snapshot(cfg.index_dir);
    const auto& g = state.graph;
    auto entities = json::array();
    for (const auto& [id, e] : g.entities()) {
        entities.push_back({{"id", raw(id)}, {"name", e.name}, {"description", e.description}});
    }
    auto edges = json::array();
    for (const auto& [id, e] : g.edges()) {
        edges.push_back({{"id", raw(id)},
                         {"head", g.entity(e.head).name},
                         {"tail", g.entity(e.tail).name},
                         {"relation", e.relation},
                         {"timestamp", e.timestamp.to_string()},
                         {"chunk", e.source_chunk}});
    }
    auto nodes = json::array();
    for (const auto& [t, n] : g.time_nodes()) {
        auto children = json::array();
        for (const auto& c : n.children) children.push_back(c.to_string());
        nodes.push_back({{"id", t.to_string()},
                         {"parent", n.parent ? json(n.parent->to_string()) : json(nullptr)},
                         {"children", children},
                         {"edges", n.attached_edges.size()}});
    }
    auto reports = json::array();
    for (const auto& [t, r] : state.reports.reports) reports.push_back(to_json(r));
    const json doc = {{"counts", to_json(snapshot_counts(state))},
                      {"entities", entities},
                      {"edges", edges},
                      {"time_nodes", nodes},
                      {"reports", reports}};
    if (o.export_out.empty()) {
        emit(out, doc);
    } else {
        std::ofstream f(o.export_out);
        if (!f) throw Error(ErrorCode::kIo, "cannot write " + o.export_out);
        f << doc.dump(2) << "\n";
        if (!f.flush()) throw Error(ErrorCode::kIo, "short write to " + o.export_out);
        if (o.json) {
            emit(out, {{"command", "export"}, {"out", o.export_out}});
        } else {
            out << "exported to " << o.export_out << "\n";
        }
    }
    return 0;
}

int cmd_serve(const Options&, const EngineConfig& cfg, std::ostream& out) {
    auto p = make_providers(cfg);
    auto state = std::make_shared<const IndexState>(load_snapshot(cfg.index_dir));
    Service svc(state, ServiceContext{*p.query_llm, *p.index_llm, *p.embedder, p.prompts}, cfg.retrieval,
                cfg.index_dir);
    const int port = svc.start(cfg.bind, cfg.port);
    out << "listening on http://" << cfg.bind << ":" << port << std::endl;
    svc.wait();
    return 0;
}

CLI::Validator provider_kind() { return CLI::IsMember({"mock", "http"}); }

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    EngineConfig cfg;
    Options o;

    CLI::App app{"Temporal graph retrieval engine", "tgrag"};
    app.config_formatter(std::make_shared<AutoConfig>());
    app.set_config("--config", "", "TOML or JSON config file; explicit flags take precedence");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.fallthrough();
    app.require_subcommand(1);

    app.add_option("-d,--index-dir", o.index_dir, "Index directory")->capture_default_str();
    app.add_flag("--json", o.json, "Machine-readable output");
    app.add_flag("--trace", o.trace, "Print the per-stage retrieval trace");
    app.add_option("--prompt-dir", o.prompt_dir, "Directory of prompt overrides (<template>.txt)");

    app.add_option("--chunk-size", cfg.index.chunk_size, "Chunk size in tokens")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--overlap", cfg.index.overlap, "Chunk overlap in tokens")->capture_default_str();
    app.add_option("--extract-workers", cfg.index.extract_workers, "Concurrent extraction calls")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--report-workers", cfg.index.reports.workers, "Concurrent report calls per level")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--report-input-limit", cfg.index.reports.input_limit_tokens, "Report prompt input limit in tokens")->capture_default_str();

    app.add_option("--top-k", cfg.retrieval.top_k, "Retrieved relation edges")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--local-budget", cfg.retrieval.local_budget, "Local context budget in tokens")->capture_default_str();
    app.add_option("--global-budget", cfg.retrieval.global_budget, "Global evidence budget in tokens")->capture_default_str();
    app.add_option("--chunk-fraction", cfg.retrieval.chunk_fraction, "Share of the global budget for chunks")
        ->capture_default_str()
        ->check([](const std::string& v) -> std::string {
            try {
                const double d = std::stod(v);
                return d > 0.0 && d < 1.0 ? std::string() : "must lie strictly between 0 and 1";
            } catch (...) {
                return "not a number";
            }
        });
    app.add_option("--scoring-mode", o.scoring_mode, "FULL, NO_PPR, NO_TEMPORAL, NO_TEMPORAL_NO_PPR or STATIC")
        ->capture_default_str()
        ->check([](const std::string& v) {
            return scoring_mode_from_name(v) ? std::string() : "unknown scoring mode " + v;
        });
    app.add_option("--chunk-sum", o.chunk_sum, "Chunk score sum over chunk_edges or all_retrieved")
        ->capture_default_str()
        ->check(CLI::IsMember({"chunk_edges", "all_retrieved"}));
    app.add_option("--point-workers", cfg.retrieval.point_workers, "Concurrent point extraction calls")->capture_default_str()->check(CLI::PositiveNumber);

    app.add_option("--index-llm", o.index_llm, "Provider for extraction and reports")->capture_default_str()->check(provider_kind());
    app.add_option("--query-llm", o.query_llm, "Provider for query-time calls")->capture_default_str()->check(provider_kind());
    app.add_option("--judge-llm", o.judge_llm, "Provider for judging")->capture_default_str()->check(provider_kind());
    app.add_option("--embedder", o.embedder, "Embedding provider")->capture_default_str()->check(provider_kind());
    app.add_option("--index-model", cfg.index_model, "Model for the index phase");
    app.add_option("--query-model", cfg.query_model, "Model for the query phase");
    app.add_option("--judge-model", cfg.judge_model, "Model for the judge");
    app.add_option("--mock-fixture", o.mock_fixtures, "JSON-lines fixture for mock providers")->check(CLI::ExistingFile);
    app.add_option("--mock-embed-dim", cfg.mock_embed_dim, "Mock embedding dimension")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--bind", cfg.bind, "Service bind address")->capture_default_str()->envname("TGRAG_BIND");
    app.add_option("--port", cfg.port, "Service port")->capture_default_str()->envname("TGRAG_PORT");

    auto* index = app.add_subcommand("index", "Build an index from a directory of .txt documents");
    index->add_option("corpus_dir", o.corpus_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
    auto* update = app.add_subcommand("update", "Add documents to an existing index");
    update->add_option("docs_dir", o.docs_dir, "Directory of new documents")->required()->check(CLI::ExistingDirectory);
    auto* query = app.add_subcommand("query", "Answer a question");
    query->add_option("--mode", o.mode, "local or global")->capture_default_str()->check(CLI::IsMember({"local", "global"}));
    query->add_option("question", o.question, "Question text")->required();
    auto* stats = app.add_subcommand("stats", "Print index counts");
    auto* eval = app.add_subcommand("eval", "Run the three-scenario evaluation protocol");
    eval->add_option("--protocol", o.protocol, "Protocol JSON file")->required()->check(CLI::ExistingFile);
    eval->add_flag("--judge", o.judge, "Also score predictions with the judge provider");
    auto* exp = app.add_subcommand("export", "Dump the index as one JSON document");
    exp->add_option("--out", o.export_out, "Output file (stdout when omitted)");
    auto* serve = app.add_subcommand("serve", "Serve the index over HTTP");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    cfg.index_dir = o.index_dir;
    cfg.prompt_dir = o.prompt_dir;
    cfg.retrieval.scoring_mode = *scoring_mode_from_name(o.scoring_mode);
    cfg.retrieval.chunk_sum = o.chunk_sum == "all_retrieved" ? ChunkSumScope::kAllRetrieved : ChunkSumScope::kChunkEdges;
    cfg.index_llm = *provider_kind_from_name(o.index_llm);
    cfg.query_llm = *provider_kind_from_name(o.query_llm);
    cfg.judge_llm = *provider_kind_from_name(o.judge_llm);
    cfg.embedder = *provider_kind_from_name(o.embedder);
    for (const auto& f : o.mock_fixtures) cfg.mock_fixtures.emplace_back(f);
    if (cfg.index.overlap >= cfg.index.chunk_size) {
        err << "--overlap must be smaller than --chunk-size\n";
        return 2;
    }

    try {
        if (index->parsed()) return cmd_index(o, cfg, out);
        if (update->parsed()) return cmd_update(o, cfg, out);
        if (query->parsed()) return cmd_query(o, cfg, out, err);
        if (stats->parsed()) return cmd_stats(o, cfg, out);
        if (eval->parsed()) return cmd_eval(o, cfg, out);
        if (exp->parsed()) return cmd_export(o, cfg, out);
        if (serve->parsed()) return cmd_serve(o, cfg, out);
    } catch (const Error& e) {
        if (o.json) emit(out, {{"error", api_error(e.code(), e.what())}});
        err << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 2;
}

} // namespace tgrag
