#include "tgrag/llm.hpp"

#include "http_client.hpp"
#include "tgrag/prompts.hpp"

#include <fstream>

namespace tgrag {

std::string substitute(std::string_view text, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            const std::size_t close = text.find('}', i + 1);
            if (close != std::string_view::npos) {
                const auto name = text.substr(i + 1, close - i - 1);
                if (const auto it = vars.find(std::string(name)); it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(text[i]);
        ++i;
    }
    return out;
}

void MockLlmProvider::add(std::string template_id, std::string key, std::string response) {
    responses_[{std::move(template_id), std::move(key)}] = std::move(response);
}

void MockLlmProvider::load_fixture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open fixture " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = path.string() + ":" + std::to_string(lineno);
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error(ErrorCode::kJsonParse, where + ": not a JSON object");
        }
        try {
            if (j.contains("chunk_id")) {
                std::string response;
                for (const auto& q : j.at("quadruples")) {
                    response += "(\"quadruple\"";
                    for (const char* field : {"head", "tail", "relation", "timestamp"}) {
                        response += std::string(kTupleDelimiter) + "\"" +
                                    q.at(field).get<std::string>() + "\"";
                    }
                    response += ")\n";
                }
                response += kCompletionDelimiter;
                add(std::string(templates::kExtractQuadruples), j.at("chunk_id").get<std::string>(),
                    std::move(response));
            } else {
                add(j.at("template_id").get<std::string>(), j.at("key").get<std::string>(),
                    j.at("response").get<std::string>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::kJsonParse, where + ": " + e.what());
        }
    }
}

ChatResponse MockLlmProvider::complete(const ChatRequest& req) {
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    {
        std::lock_guard lock(calls_mutex_);
        calls_.push_back(req);
    }
    auto it = responses_.find({req.template_id, req.key});
    if (it == responses_.end()) it = responses_.find({req.template_id, "*"});
    if (it == responses_.end()) {
        throw ProviderError(ProviderErrorKind::kMalformed, "no scripted response for template '" +
                                                               req.template_id + "' key '" +
                                                               req.key + "'");
    }
    ChatResponse resp;
    resp.text = substitute(it->second, req.variables);
    if (req.max_output_tokens > 0) {
        const auto spans = tokenizer_->tokenize(resp.text);
        if (spans.size() > req.max_output_tokens) {
            resp.text.resize(spans[req.max_output_tokens - 1].end);
        }
    }
    resp.prompt_tokens = tokenizer_->count(req.rendered_prompt);
    resp.completion_tokens = tokenizer_->count(resp.text);
    meter().record(resp.prompt_tokens, resp.completion_tokens);
    return resp;
}

std::vector<ChatRequest> MockLlmProvider::calls() const {
    std::lock_guard lock(calls_mutex_);
    return calls_;
}

void MockLlmProvider::clear_calls() {
    std::lock_guard lock(calls_mutex_);
    calls_.clear();
}

HttpLlmConfig HttpLlmConfig::from_env() {
    HttpLlmConfig cfg;
    cfg.endpoint = detail::env_or("TGRAG_LLM_ENDPOINT");
    cfg.model = detail::env_or("TGRAG_LLM_MODEL");
    cfg.api_key = detail::env_or("TGRAG_LLM_API_KEY");
    return cfg;
}

ChatResponse HttpLlmProvider::complete(const ChatRequest& req) {
    if (cfg_.endpoint.empty()) {
        throw ProviderError(ProviderErrorKind::kMalformed, "no LLM endpoint configured");
    }
    nlohmann::json body = {
        {"model", cfg_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.rendered_prompt}}})},
        {"temperature", req.temperature},
    };
    if (req.max_output_tokens > 0) body["max_tokens"] = req.max_output_tokens;

    const auto reply = with_retries(cfg_.retry, [&] {
        return detail::post_json(cfg_.endpoint, cfg_.api_key, body);
    });

    ChatResponse resp;
    try {
        resp.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw ProviderError(ProviderErrorKind::kMalformed, "chat response lacks choices[0].message");
    }
    const auto usage = reply.value("usage", nlohmann::json::object());
    resp.prompt_tokens = usage.contains("prompt_tokens") ? usage["prompt_tokens"].get<std::size_t>()
                                                         : tokenizer_->count(req.rendered_prompt);
    resp.completion_tokens = usage.contains("completion_tokens")
                                 ? usage["completion_tokens"].get<std::size_t>()
                                 : tokenizer_->count(resp.text);
    meter().record(resp.prompt_tokens, resp.completion_tokens);
    return resp;
}

} // namespace tgrag
