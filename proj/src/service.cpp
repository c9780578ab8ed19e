#include "tgrag/service.hpp"

#include "tgrag/error.hpp"
#include "tgrag/snapshot.hpp"

#include <httplib.h>

#include <thread>

using nlohmann::json;

namespace tgrag {

namespace {

json stamps(const std::set<Timestamp>& ts) {
    auto a = json::array();
    for (const auto& t : ts) a.push_back(t.to_string());
    return a;
}

ApiResponse from_error(const Error& e, const json& detail = json::object()) {
    return {http_status_for(e.code()), api_error(e.code(), e.what(), detail)};
}

ApiResponse bad_request(const std::string& message) {
    return {400, api_error(ErrorCode::kInvalidArgument, message)};
}

} // namespace

json to_json(const UpdateOutcome& outcome) {
    const auto& d = outcome.delta;
    auto regenerated = json::array();
    for (const auto& t : outcome.regenerated) regenerated.push_back(t.to_string());
    return {{"new_edges", d.new_edges.size()},
            {"new_chunks", d.new_chunks},
            {"malformed_lines", d.malformed_lines},
            {"new_time_nodes", stamps(d.new_time_nodes)},
            {"dirty_time_nodes", stamps(d.dirty_time_nodes)},
            {"regenerated_reports", regenerated}};
}

json to_json(const TimeReport& r) {
    return {{"time_id", r.time_id.to_string()},
            {"text", r.text},
            {"token_count", r.token_count},
            {"input_fingerprint", r.input_fingerprint},
            {"generated_at", r.generated_at}};
}

int http_status_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::kMalformedTimestamp:
    case ErrorCode::kInvalidDate:
    case ErrorCode::kEmptyDocument:
    case ErrorCode::kEmptyCorpus:
    case ErrorCode::kDuplicateDocument:
    case ErrorCode::kJsonParse:
    case ErrorCode::kInvalidArgument:
        return 400;
    case ErrorCode::kMissingReport:
        return 404;
    case ErrorCode::kUpdateConflict:
        return 409;
    case ErrorCode::kProvider:
        return 503;
    default:
        return 500;
    }
}

json api_error(ErrorCode code, const std::string& message, const json& detail) {
    return {{"code", std::string(error_code_name(code))}, {"message", message}, {"detail", detail}};
}

struct Service::Http {
    httplib::Server server;
    std::thread thread;
};

Service::Service(std::shared_ptr<const IndexState> state, ServiceContext ctx, RetrievalConfig cfg,
                 std::filesystem::path persist_dir)
    : state_(std::move(state)), ctx_(ctx), cfg_(std::move(cfg)), persist_dir_(std::move(persist_dir)) {}

Service::~Service() { stop(); }

std::shared_ptr<const IndexState> Service::snapshot() const {
    std::lock_guard lock(state_mutex_);
    return state_;
}

ApiResponse Service::query(const std::string& body) const {
    const auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return bad_request("body must be a JSON object");
    const auto q = j.find("question");
    if (q == j.end() || !q->is_string() || q->get<std::string>().empty()) {
        return bad_request("\"question\" must be a non-empty string");
    }
    const std::string mode = j.value("mode", std::string("local"));
    if (mode != "local" && mode != "global") return bad_request("\"mode\" must be local or global");
    RetrievalConfig cfg = cfg_;
    if (j.contains("scoring_mode")) {
        const auto& sm = j.at("scoring_mode");
        const auto parsed = sm.is_string() ? scoring_mode_from_name(sm.get<std::string>()) : std::nullopt;
        if (!parsed) return bad_request("unknown scoring_mode");
        cfg.scoring_mode = *parsed;
    }
    const auto state = snapshot();
    const QueryContext qctx{ctx_.query_llm, ctx_.embedder, ctx_.prompts, ctx_.tokenizer};
    const auto rec = mode == "global" ? answer_global(q->get<std::string>(), *state, qctx, cfg)
                                      : answer_local(q->get<std::string>(), *state, qctx, cfg);
    const auto body_json = to_json(rec);
    if (!rec.ok()) return {http_status_for(*rec.error_code), api_error(*rec.error_code, rec.error_message, body_json)};
    return {200, body_json};
}

ApiResponse Service::update(const std::string& body) {
    std::unique_lock guard(update_mutex_, std::try_to_lock);
    if (!guard.owns_lock()) {
        return {409, api_error(ErrorCode::kUpdateConflict, "another update is in progress")};
    }
    const auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("docs") || !j.at("docs").is_array()) {
        return bad_request("body must be {\"docs\": [...]}");
    }
    std::vector<Document> docs;
    for (const auto& d : j.at("docs")) {
        if (!d.is_object() || !d.contains("id") || !d.at("id").is_string() || !d.contains("text") ||
            !d.at("text").is_string()) {
            return bad_request("each doc needs string \"id\" and \"text\"");
        }
        Document doc;
        doc.id = d.at("id").get<std::string>();
        doc.text = d.at("text").get<std::string>();
        if (d.contains("metadata")) {
            if (!d.at("metadata").is_object()) return bad_request("\"metadata\" must be an object");
            for (const auto& [k, v] : d.at("metadata").items()) {
                doc.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
            }
        }
        docs.push_back(std::move(doc));
    }
    try {
        auto next = std::make_shared<IndexState>(*snapshot());
        const IngestContext ictx{ctx_.index_llm, ctx_.embedder, ctx_.prompts, ctx_.tokenizer};
        const auto outcome = update_corpus(*next, docs, ictx);
        if (!persist_dir_.empty()) save_snapshot(*next, persist_dir_);
        {
            std::lock_guard lock(state_mutex_);
            state_ = std::move(next);
        }
        return {200, to_json(outcome)};
    } catch (const Error& e) {
        return from_error(e);
    }
}

ApiResponse Service::stats() const { return {200, to_json(snapshot_counts(*snapshot()))}; }

ApiResponse Service::time_report(const std::string& timestamp) const {
    Timestamp t;
    try {
        t = parse_timestamp(timestamp);
    } catch (const Error& e) {
        return from_error(e);
    }
    const auto state = snapshot();
    const auto* r = state->reports.find(t);
    if (!r) return {404, api_error(ErrorCode::kMissingReport, "no report for " + t.to_string())};
    return {200, to_json(*r)};
}

ApiResponse Service::healthz() const { return {200, {{"status", "ok"}}}; }

int Service::start(const std::string& bind, int port) {
    if (http_) throw Error(ErrorCode::kInvalidArgument, "service already started");
    http_ = std::make_unique<Http>();
    auto& srv = http_->server;
    auto reply = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(2), "application/json");
    };
    srv.Post("/query", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, query(req.body));
    });
    srv.Post("/update", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, update(req.body));
    });
    srv.Get("/stats", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, stats()); });
    srv.Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, healthz()); });
    srv.Get(R"(/time/([^/]+)/report)", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, time_report(req.matches[1]));
    });
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        const auto code = res.status == 404 ? "not_found" : "http_error";
        res.set_content(json{{"code", code}, {"message", httplib::status_message(res.status)}, {"detail", json::object()}}.dump(2),
                        "application/json");
    });
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string msg = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            msg = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(json{{"code", "internal"}, {"message", msg}, {"detail", json::object()}}.dump(2),
                        "application/json");
    });

    const int bound = port == 0 ? srv.bind_to_any_port(bind) : (srv.bind_to_port(bind, port) ? port : -1);
    if (bound < 0) {
        http_.reset();
        throw Error(ErrorCode::kIo, "cannot bind " + bind + ":" + std::to_string(port));
    }
    http_->thread = std::thread([&srv] { srv.listen_after_bind(); });
    return bound;
}

void Service::wait() {
    if (http_ && http_->thread.joinable()) http_->thread.join();
}

void Service::stop() {
    if (!http_) return;
    http_->server.stop();
    if (http_->thread.joinable()) http_->thread.join();
    http_.reset();
}

} // namespace tgrag
