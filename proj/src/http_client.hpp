#pragma once

#include <json.hpp>

#include <string>

namespace tgrag::detail {

// POSTs a JSON body to a full URL with an optional bearer token and returns
// the parsed JSON response. Maps failures onto ProviderError kinds.
nlohmann::json post_json(const std::string& url, const std::string& api_key,
                         const nlohmann::json& body);

std::string env_or(const char* name, const std::string& fallback = {});

} // namespace tgrag::detail
