#pragma once

#include "tgrag/llm.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace tgrag {

using Vector = std::vector<float>;

// Throws Error(kDimensionMismatch) or Error(kZeroVector).
double cosine(const Vector& a, const Vector& b);

struct ScoredId {
    std::uint64_t id = 0;
    double score = 0.0;
    bool operator==(const ScoredId&) const = default;
};

// Exact cosine index. Rows are kept in id order.
class VectorIndex {
public:
    VectorIndex() = default;
    explicit VectorIndex(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    // Inserts or replaces. The first insert fixes the dimension of an
    // unsized index.
    void upsert(std::uint64_t id, Vector v);
    const Vector* find(std::uint64_t id) const;
    const std::map<std::uint64_t, Vector>& entries() const { return entries_; }

    // Descending cosine, ties by ascending id; at most k results.
    std::vector<ScoredId> top_k(const Vector& query, std::size_t k) const;

    bool operator==(const VectorIndex&) const = default;

private:
    std::size_t dim_ = 0;
    std::map<std::uint64_t, Vector> entries_;
};

// Binary layout: "TGVE", u32 version, u64 count, u32 dim (little-endian),
// then count * dim little-endian f32. The JSON sidecar lists the id of each
// row in order.
void write_vectors(const VectorIndex& index, const std::filesystem::path& bin_path,
                   const std::filesystem::path& sidecar_path);
VectorIndex read_vectors(const std::filesystem::path& bin_path,
                         const std::filesystem::path& sidecar_path);

inline constexpr std::uint32_t kVectorFormatVersion = 1;

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
    virtual std::size_t dim() const = 0;
};

// Order-preserving batch embedding. Throws Error(kInvalidArgument) on empty
// input and ProviderError when the provider fails.
std::vector<Vector> embed(const std::vector<std::string>& texts, EmbeddingProvider& provider);

// Feature-hashes lower-cased alphanumeric tokens into a seeded signed bucket
// vector and L2-normalizes it. Texts with shared words get positive cosine,
// identical texts get identical vectors.
class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit MockEmbeddingProvider(std::size_t dim = 256, std::uint64_t seed = 0x7467726167ULL)
        : dim_(dim), seed_(seed) {}

    std::vector<Vector> embed(const std::vector<std::string>& texts) override;
    std::size_t dim() const override { return dim_; }

    Vector embed_one(const std::string& text) const;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

struct HttpEmbeddingConfig {
    std::string endpoint; // full URL of an OpenAI-compatible /embeddings route
    std::string model;
    std::string api_key;
    std::size_t dim = 1536;
    RetryPolicy retry;

    static HttpEmbeddingConfig from_env();
};

class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(HttpEmbeddingConfig cfg) : cfg_(std::move(cfg)) {}

    std::vector<Vector> embed(const std::vector<std::string>& texts) override;
    std::size_t dim() const override { return cfg_.dim; }

private:
    HttpEmbeddingConfig cfg_;
};

} // namespace tgrag
