#pragma once

#include "tgrag/ingest.hpp"
#include "tgrag/retrieval.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

namespace tgrag {

nlohmann::json to_json(const UpdateOutcome& outcome);
nlohmann::json to_json(const TimeReport& report);

// HTTP status for an engine error: 400 bad input, 404 missing report,
// 409 update conflict, 503 provider failure, 500 otherwise.
int http_status_for(ErrorCode code);

// {"code", "message", "detail"}
nlohmann::json api_error(ErrorCode code, const std::string& message,
                         const nlohmann::json& detail = nlohmann::json::object());

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

struct ServiceContext {
    LlmProvider& query_llm;
    LlmProvider& index_llm;
    EmbeddingProvider& embedder;
    const PromptLibrary& prompts = PromptLibrary::defaults();
    const Tokenizer& tokenizer = default_tokenizer();
};

// JSON facade over an immutable index snapshot. Queries read whichever
// snapshot is current when they start; an update builds a new snapshot and
// swaps it in. One update runs at a time.
class Service {
public:
    // When persist_dir is set, each update is saved before it is published.
    Service(std::shared_ptr<const IndexState> state, ServiceContext ctx, RetrievalConfig cfg,
            std::filesystem::path persist_dir = {});
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    std::shared_ptr<const IndexState> snapshot() const;

    // POST /query {question, mode?, scoring_mode?}
    ApiResponse query(const std::string& body) const;
    // POST /update {docs: [{id, text, metadata?}]}
    ApiResponse update(const std::string& body);
    // GET /stats
    ApiResponse stats() const;
    // GET /time/{timestamp}/report
    ApiResponse time_report(const std::string& timestamp) const;
    // GET /healthz
    ApiResponse healthz() const;

    // Binds (port 0 picks a free one) and serves on a background thread.
    // Returns the bound port.
    int start(const std::string& bind, int port);
    void wait();
    void stop();

private:
    struct Http;

    mutable std::mutex state_mutex_;
    std::shared_ptr<const IndexState> state_;
    std::mutex update_mutex_;
    ServiceContext ctx_;
    RetrievalConfig cfg_;
    std::filesystem::path persist_dir_;
    std::unique_ptr<Http> http_;
};

} // namespace tgrag
