#include "http_client.hpp"

#include "tgrag/error.hpp"

#include <httplib.h>

#include <cstdlib>
#include <regex>

namespace tgrag::detail {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

nlohmann::json post_json(const std::string& url, const std::string& api_key,
                         const nlohmann::json& body) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, kUrl)) {
        throw ProviderError(ProviderErrorKind::kMalformed, "bad endpoint url '" + url + "'");
    }
    const std::string origin = m[1].str();
    const std::string path = m[2].matched ? m[2].str() : "/";

    httplib::Client client(origin);
    client.set_connection_timeout(30);
    client.set_read_timeout(300);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        throw ProviderError(ProviderErrorKind::kNetwork,
                            url + ": " + httplib::to_string(res.error()));
    }
    if (res->status == 401 || res->status == 403) {
        throw ProviderError(ProviderErrorKind::kAuth, url + ": HTTP " + std::to_string(res->status));
    }
    if (res->status == 429) {
        throw ProviderError(ProviderErrorKind::kRateLimit, url + ": HTTP 429");
    }
    if (res->status >= 500) {
        throw ProviderError(ProviderErrorKind::kNetwork, url + ": HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw ProviderError(ProviderErrorKind::kMalformed,
                            url + ": HTTP " + std::to_string(res->status) + " " + res->body);
    }
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) {
        throw ProviderError(ProviderErrorKind::kMalformed, url + ": response is not JSON");
    }
    return parsed;
}

} // namespace tgrag::detail
