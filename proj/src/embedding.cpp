#include "tgrag/embedding.hpp"

#include "http_client.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

namespace tgrag {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h);
}

double norm_of(const Vector& v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

template <typename T>
void put_le(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw Error(ErrorCode::kCorruptSnapshot, "truncated vector file");
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return static_cast<T>(v);
}

} // namespace

double cosine(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::kDimensionMismatch, "cosine of vectors with dims " +
                                                       std::to_string(a.size()) + " and " +
                                                       std::to_string(b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::kZeroVector, "cosine of a zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

void VectorIndex::upsert(std::uint64_t id, Vector v) {
    if (dim_ == 0 && entries_.empty()) dim_ = v.size();
    if (v.size() != dim_) {
        throw Error(ErrorCode::kDimensionMismatch, "index dim " + std::to_string(dim_) +
                                                       ", vector dim " + std::to_string(v.size()));
    }
    for (float x : v) {
        if (!std::isfinite(x)) throw Error(ErrorCode::kInvalidArgument, "non-finite vector entry");
    }
    if (norm_of(v) == 0.0) throw Error(ErrorCode::kZeroVector, "cannot index a zero vector");
    entries_[id] = std::move(v);
}

const Vector* VectorIndex::find(std::uint64_t id) const {
    const auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

std::vector<ScoredId> VectorIndex::top_k(const Vector& query, std::size_t k) const {
    if (entries_.empty() || k == 0) return {};
    std::vector<ScoredId> all;
    all.reserve(entries_.size());
    for (const auto& [id, v] : entries_) all.push_back({id, cosine(query, v)});
    const auto better = [](const ScoredId& a, const ScoredId& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    };
    const std::size_t n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), better);
    all.resize(n);
    return all;
}

void write_vectors(const VectorIndex& index, const std::filesystem::path& bin_path,
                   const std::filesystem::path& sidecar_path) {
    std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + bin_path.string());
    out.write("TGVE", 4);
    put_le<std::uint32_t>(out, kVectorFormatVersion);
    put_le<std::uint64_t>(out, index.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [id, v] : index.entries()) {
        for (float x : v) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
        rows.push_back(id);
    }
    if (!out.flush()) throw Error(ErrorCode::kIo, "short write to " + bin_path.string());

    std::ofstream side(sidecar_path, std::ios::trunc);
    if (!side) throw Error(ErrorCode::kIo, "cannot write " + sidecar_path.string());
    side << nlohmann::json{{"dim", index.dim()}, {"rows", rows}}.dump() << '\n';
    if (!side.flush()) throw Error(ErrorCode::kIo, "short write to " + sidecar_path.string());
}

VectorIndex read_vectors(const std::filesystem::path& bin_path,
                         const std::filesystem::path& sidecar_path) {
    const std::string bin_name = bin_path.filename().string();
    const std::string side_name = sidecar_path.filename().string();
    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kCorruptSnapshot, bin_name + ": missing");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "TGVE", 4) != 0) {
        throw Error(ErrorCode::kCorruptSnapshot, bin_name + ": bad magic");
    }
    if (get_le<std::uint32_t>(in) != kVectorFormatVersion) {
        throw Error(ErrorCode::kVersion, bin_name + ": unsupported vector format version");
    }
    const auto count = get_le<std::uint64_t>(in);
    const auto dim = get_le<std::uint32_t>(in);

    std::ifstream side_in(sidecar_path);
    if (!side_in) throw Error(ErrorCode::kCorruptSnapshot, side_name + ": missing");
    auto side = nlohmann::json::parse(side_in, nullptr, false);
    if (side.is_discarded() || !side.contains("rows") || !side["rows"].is_array() ||
        side["rows"].size() != count) {
        throw Error(ErrorCode::kCorruptSnapshot, side_name + ": row map does not match " + bin_name);
    }

    VectorIndex index(dim);
    for (std::uint64_t r = 0; r < count; ++r) {
        Vector v(dim);
        for (auto& x : v) x = std::bit_cast<float>(get_le<std::uint32_t>(in));
        try {
            index.upsert(side["rows"][r].get<std::uint64_t>(), std::move(v));
        } catch (const Error& e) {
            throw Error(ErrorCode::kCorruptSnapshot, bin_name + ": row " + std::to_string(r) + ": " + e.what());
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::kCorruptSnapshot, side_name + ": bad row id at " + std::to_string(r));
        }
    }
    if (index.size() != count) throw Error(ErrorCode::kCorruptSnapshot, side_name + ": duplicate row ids");
    return index;
}

std::vector<Vector> embed(const std::vector<std::string>& texts, EmbeddingProvider& provider) {
    if (texts.empty()) throw Error(ErrorCode::kInvalidArgument, "embed called with no texts");
    auto out = provider.embed(texts);
    if (out.size() != texts.size()) {
        throw ProviderError(ProviderErrorKind::kMalformed, "embedding count does not match input count");
    }
    return out;
}

Vector MockEmbeddingProvider::embed_one(const std::string& text) const {
    Vector v(dim_, 0.0F);
    std::string token;
    bool any = false;
    const auto flush = [&] {
        if (token.empty()) return;
        const auto h = fnv1a(token, seed_);
        v[h % dim_] += (h >> 63) != 0 ? 1.0F : -1.0F;
        any = true;
        token.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            token.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    double n = norm_of(v);
    if (!any || n == 0.0) {
        // No alphanumeric tokens, or the buckets cancelled out.
        const auto h = fnv1a(text, seed_ ^ 0x5bd1e995ULL);
        v.assign(dim_, 0.0F);
        v[h % dim_] = 1.0F;
        n = 1.0;
    }
    for (auto& x : v) x = static_cast<float>(x / n);
    return v;
}

std::vector<Vector> MockEmbeddingProvider::embed(const std::vector<std::string>& texts) {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

HttpEmbeddingConfig HttpEmbeddingConfig::from_env() {
    HttpEmbeddingConfig cfg;
    cfg.endpoint = detail::env_or("TGRAG_EMBED_ENDPOINT");
    cfg.model = detail::env_or("TGRAG_EMBED_MODEL", "text-embedding-3-small");
    cfg.api_key = detail::env_or("TGRAG_EMBED_API_KEY");
    return cfg;
}

std::vector<Vector> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts) {
    if (cfg_.endpoint.empty()) {
        throw ProviderError(ProviderErrorKind::kMalformed, "no embedding endpoint configured");
    }
    const nlohmann::json body = {{"model", cfg_.model}, {"input", texts}};
    const auto reply = with_retries(cfg_.retry, [&] {
        return detail::post_json(cfg_.endpoint, cfg_.api_key, body);
    });
    std::vector<Vector> out(texts.size());
    try {
        for (const auto& item : reply.at("data")) {
            const auto idx = item.value("index", std::size_t{0});
            if (idx >= out.size()) throw ProviderError(ProviderErrorKind::kMalformed, "embedding index out of range");
            out[idx] = item.at("embedding").get<Vector>();
            if (out[idx].size() != cfg_.dim) {
                throw ProviderError(ProviderErrorKind::kMalformed,
                                    "embedding dim " + std::to_string(out[idx].size()) +
                                        " != configured " + std::to_string(cfg_.dim));
            }
        }
    } catch (const nlohmann::json::exception&) {
        throw ProviderError(ProviderErrorKind::kMalformed, "embedding response lacks data[]");
    }
    for (const auto& v : out) {
        if (v.empty()) throw ProviderError(ProviderErrorKind::kMalformed, "missing embedding row");
    }
    return out;
}

} // namespace tgrag
