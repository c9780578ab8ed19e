#pragma once

#include "tgrag/embedding.hpp"
#include "tgrag/ingest.hpp"
#include "tgrag/llm.hpp"
#include "tgrag/prompts.hpp"
#include "tgrag/retrieval.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tgrag {

enum class ProviderKind { kMock, kHttp };

std::string_view provider_kind_name(ProviderKind k);
std::optional<ProviderKind> provider_kind_from_name(std::string_view name);

// Everything the CLI and the service are configured with. Each pipeline
// phase picks its own chat provider.
struct EngineConfig {
    std::filesystem::path index_dir = "tgrag-index";
    IndexConfig index{};
    RetrievalConfig retrieval{};

    ProviderKind index_llm = ProviderKind::kMock;
    ProviderKind query_llm = ProviderKind::kMock;
    ProviderKind judge_llm = ProviderKind::kMock;
    ProviderKind embedder = ProviderKind::kMock;
    // Per-phase model names; empty falls back to TGRAG_LLM_MODEL.
    std::string index_model;
    std::string query_model;
    std::string judge_model;
    std::vector<std::filesystem::path> mock_fixtures;
    std::size_t mock_embed_dim = 256;

    std::filesystem::path prompt_dir;

    std::string bind = "127.0.0.1";
    int port = 8080;

    nlohmann::json to_json() const;
};

struct Providers {
    std::unique_ptr<LlmProvider> index_llm;
    std::unique_ptr<LlmProvider> query_llm;
    std::unique_ptr<LlmProvider> judge_llm;
    std::unique_ptr<EmbeddingProvider> embedder;
    PromptLibrary prompts;
};

// Mock chat providers load every configured fixture. Prompt overrides are
// read from prompt_dir when set.
Providers make_providers(const EngineConfig& cfg);

// Adds fixture records to every mock chat provider in p.
void load_mock_fixture(Providers& p, const std::filesystem::path& path);

} // namespace tgrag
