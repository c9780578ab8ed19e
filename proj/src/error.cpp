#include "tgrag/error.hpp"

namespace tgrag {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::kMalformedTimestamp: return "malformed_timestamp";
    case ErrorCode::kInvalidDate: return "invalid_date";
    case ErrorCode::kEmptyDocument: return "empty_document";
    case ErrorCode::kEmptyCorpus: return "empty_corpus";
    case ErrorCode::kDuplicateDocument: return "duplicate_document";
    case ErrorCode::kProvider: return "provider_error";
    case ErrorCode::kZeroVector: return "zero_vector";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kEmptyIndex: return "empty_index";
    case ErrorCode::kEmptySubgraph: return "empty_subgraph";
    case ErrorCode::kMissingChildReport: return "missing_child_report";
    case ErrorCode::kMissingReport: return "missing_report";
    case ErrorCode::kCorruptSnapshot: return "corrupt_snapshot";
    case ErrorCode::kVersion: return "version_error";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kJsonParse: return "json_parse_error";
    case ErrorCode::kUpdateConflict: return "update_conflict";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    }
    return "unknown";
}

std::string_view provider_error_kind_name(ProviderErrorKind kind) {
    switch (kind) {
    case ProviderErrorKind::kNetwork: return "network";
    case ProviderErrorKind::kAuth: return "auth";
    case ProviderErrorKind::kRateLimit: return "rate-limit";
    case ProviderErrorKind::kMalformed: return "malformed";
    }
    return "unknown";
}

} // namespace tgrag
