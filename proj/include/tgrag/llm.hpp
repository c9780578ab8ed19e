#pragma once

#include "tgrag/error.hpp"
#include "tgrag/tokenizer.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string_view>
#include <thread>
#include <string>
#include <utility>
#include <vector>

namespace tgrag {

struct ChatRequest {
    std::string template_id;
    // Lookup key for scripted providers (chunk id, query text, time label...).
    std::string key;
    std::string rendered_prompt;
    // Placeholder values the prompt was rendered from.
    std::map<std::string, std::string> variables;
    std::size_t max_output_tokens = 1024;
    double temperature = 0.0;
};

struct ChatResponse {
    std::string text;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

struct TokenCounts {
    std::size_t prompt = 0;
    std::size_t completion = 0;
    std::size_t calls = 0;
    bool operator==(const TokenCounts&) const = default;
};

// Monotone counters since the last reset. Safe to bump from many threads.
class TokenMeter {
public:
    void record(std::size_t prompt, std::size_t completion) {
        prompt_.fetch_add(prompt, std::memory_order_relaxed);
        completion_.fetch_add(completion, std::memory_order_relaxed);
        calls_.fetch_add(1, std::memory_order_relaxed);
    }
    TokenCounts read() const {
        return {prompt_.load(), completion_.load(), calls_.load()};
    }
    void reset() {
        prompt_ = 0;
        completion_ = 0;
        calls_ = 0;
    }

private:
    std::atomic<std::size_t> prompt_{0};
    std::atomic<std::size_t> completion_{0};
    std::atomic<std::size_t> calls_{0};
};

class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    virtual ChatResponse complete(const ChatRequest& req) = 0;

    TokenMeter& meter() { return meter_; }
    const TokenMeter& meter() const { return meter_; }

private:
    TokenMeter meter_;
};

inline TokenCounts token_meter(const LlmProvider& provider) { return provider.meter().read(); }

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
};

// Runs fn up to policy.attempts times, sleeping with exponential backoff
// between attempts. Only retryable ProviderErrors are retried.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn,
                  const std::function<void(std::chrono::milliseconds)>& sleeper = {}) {
    auto delay = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const ProviderError& e) {
            if (!e.retryable() || attempt >= policy.attempts) throw;
        }
        if (sleeper) {
            sleeper(delay);
        } else {
            std::this_thread::sleep_for(delay);
        }
        delay = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(delay.count()) * policy.multiplier));
    }
}

// Replays scripted responses looked up by (template_id, key). A key of "*"
// is a per-template fallback. Responses may reference the request's
// variables as {name}; those are substituted, so a fixture can echo inputs.
//
// Fixture files are JSON-lines. Two record shapes are accepted:
//   {"template_id": ..., "key": ..., "response": ...}
//   {"chunk_id": ..., "quadruples": [{"head","tail","relation","timestamp"}]}
// The second is an extraction record; it is rendered into the extraction
// tuple grammar under template "extract_quadruples".
class MockLlmProvider final : public LlmProvider {
public:
    explicit MockLlmProvider(const Tokenizer& tokenizer = default_tokenizer())
        : tokenizer_(&tokenizer) {}

    void add(std::string template_id, std::string key, std::string response);
    void load_fixture(const std::filesystem::path& path);

    // Sleep applied to every call, for exercising concurrency.
    void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }

    ChatResponse complete(const ChatRequest& req) override;

    // Requests seen so far, in call order.
    std::vector<ChatRequest> calls() const;
    void clear_calls();

private:
    const Tokenizer* tokenizer_;
    std::map<std::pair<std::string, std::string>, std::string> responses_;
    std::chrono::milliseconds latency_{0};
    mutable std::mutex calls_mutex_;
    std::vector<ChatRequest> calls_;
};

struct HttpLlmConfig {
    std::string endpoint; // full URL of an OpenAI-compatible chat completions route
    std::string model;
    std::string api_key;
    RetryPolicy retry;

    // TGRAG_LLM_ENDPOINT, TGRAG_LLM_MODEL, TGRAG_LLM_API_KEY.
    static HttpLlmConfig from_env();
};

class HttpLlmProvider final : public LlmProvider {
public:
    explicit HttpLlmProvider(HttpLlmConfig cfg, const Tokenizer& tokenizer = default_tokenizer())
        : cfg_(std::move(cfg)), tokenizer_(&tokenizer) {}

    ChatResponse complete(const ChatRequest& req) override;

private:
    HttpLlmConfig cfg_;
    const Tokenizer* tokenizer_;
};

// Substitutes {name} occurrences whose name is a key of vars. Other braces
// are left untouched.
std::string substitute(std::string_view text, const std::map<std::string, std::string>& vars);

} // namespace tgrag
