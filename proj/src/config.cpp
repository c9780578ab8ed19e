#include "tgrag/config.hpp"

#include "tgrag/snapshot.hpp"

namespace tgrag {

namespace {

std::unique_ptr<LlmProvider> make_llm(ProviderKind kind, const std::string& model,
                                      const std::vector<std::filesystem::path>& fixtures) {
    if (kind == ProviderKind::kHttp) {
        auto cfg = HttpLlmConfig::from_env();
        if (!model.empty()) cfg.model = model;
        return std::make_unique<HttpLlmProvider>(std::move(cfg));
    }
    auto mock = std::make_unique<MockLlmProvider>();
    for (const auto& f : fixtures) mock->load_fixture(f);
    return mock;
}

} // namespace

std::string_view provider_kind_name(ProviderKind k) {
    return k == ProviderKind::kHttp ? "http" : "mock";
}

std::optional<ProviderKind> provider_kind_from_name(std::string_view name) {
    if (name == "mock") return ProviderKind::kMock;
    if (name == "http") return ProviderKind::kHttp;
    return std::nullopt;
}

nlohmann::json EngineConfig::to_json() const {
    auto fixtures = nlohmann::json::array();
    for (const auto& f : mock_fixtures) fixtures.push_back(f.string());
    return {{"index_dir", index_dir.string()},
            {"index", tgrag::to_json(index)},
            {"retrieval", retrieval.to_json()},
            {"providers",
             {{"index_llm", std::string(provider_kind_name(index_llm))},
              {"query_llm", std::string(provider_kind_name(query_llm))},
              {"judge_llm", std::string(provider_kind_name(judge_llm))},
              {"embedder", std::string(provider_kind_name(embedder))},
              {"index_model", index_model},
              {"query_model", query_model},
              {"judge_model", judge_model},
              {"mock_fixtures", fixtures},
              {"mock_embed_dim", mock_embed_dim}}},
            {"prompt_dir", prompt_dir.string()},
            {"bind", bind},
            {"port", port}};
}

Providers make_providers(const EngineConfig& cfg) {
    Providers p;
    p.index_llm = make_llm(cfg.index_llm, cfg.index_model, cfg.mock_fixtures);
    p.query_llm = make_llm(cfg.query_llm, cfg.query_model, cfg.mock_fixtures);
    p.judge_llm = make_llm(cfg.judge_llm, cfg.judge_model, cfg.mock_fixtures);
    if (cfg.embedder == ProviderKind::kHttp) {
        p.embedder = std::make_unique<HttpEmbeddingProvider>(HttpEmbeddingConfig::from_env());
    } else {
        p.embedder = std::make_unique<MockEmbeddingProvider>(cfg.mock_embed_dim);
    }
    if (!cfg.prompt_dir.empty()) p.prompts.load_directory(cfg.prompt_dir);
    return p;
}

void load_mock_fixture(Providers& p, const std::filesystem::path& path) {
    for (auto* llm : {p.index_llm.get(), p.query_llm.get(), p.judge_llm.get()}) {
        if (auto* mock = dynamic_cast<MockLlmProvider*>(llm)) mock->load_fixture(path);
    }
}

} // namespace tgrag
