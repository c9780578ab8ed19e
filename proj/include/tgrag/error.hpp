#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tgrag {

enum class ErrorCode {
    kMalformedTimestamp,
    kInvalidDate,
    kEmptyDocument,
    kEmptyCorpus,
    kDuplicateDocument,
    kProvider,
    kZeroVector,
    kDimensionMismatch,
    kEmptyIndex,
    kEmptySubgraph,
    kMissingChildReport,
    kMissingReport,
    kCorruptSnapshot,
    kVersion,
    kIo,
    kJsonParse,
    kUpdateConflict,
    kInvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

// Base for every failure the engine reports. The code is stable and is what
// the CLI and the HTTP service map onto exit statuses and API error codes.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

enum class ProviderErrorKind { kNetwork, kAuth, kRateLimit, kMalformed };

std::string_view provider_error_kind_name(ProviderErrorKind kind);

class ProviderError : public Error {
public:
    ProviderError(ProviderErrorKind kind, const std::string& message)
        : Error(ErrorCode::kProvider,
                std::string(provider_error_kind_name(kind)) + ": " + message),
          kind_(kind), detail_(message) {}

    ProviderErrorKind kind() const noexcept { return kind_; }
    // Message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

    // Network failures and rate limits are worth another attempt; auth and
    // malformed responses are not.
    bool retryable() const noexcept {
        return kind_ == ProviderErrorKind::kNetwork || kind_ == ProviderErrorKind::kRateLimit;
    }

private:
    ProviderErrorKind kind_;
    std::string detail_;
};

} // namespace tgrag
