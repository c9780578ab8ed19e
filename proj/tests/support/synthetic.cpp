#include "synthetic.hpp"

#include "tgrag/prompts.hpp"

#include <json.hpp>

#include <array>
#include <cstdio>

namespace tgrag::testing {

std::uint64_t Rng::next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

constexpr std::array kCompanies = {"Northwind Traders", "Contoso Ltd", "Fabrikam Inc", "Tailspin Toys",
                                   "Litware Systems"};
constexpr std::array kMetrics = {"Revenue", "Operating Margin", "Free Cash Flow", "Headcount",
                                 "Gross Debt", "Earnings Per Share"};

Timestamp random_timestamp(Rng& rng) {
    const int year = 2019 + static_cast<int>(rng.below(4));
    switch (rng.below(4)) {
    case 0: return Timestamp::of_year(year);
    case 1: return Timestamp::of_quarter(year, 1 + static_cast<int>(rng.below(4)));
    case 2: return Timestamp::of_month(year, 1 + static_cast<int>(rng.below(12)));
    default: return Timestamp::of_day(year, 1 + static_cast<int>(rng.below(12)), 1 + static_cast<int>(rng.below(28)));
    }
}

} // namespace

SyntheticCorpus make_synthetic_corpus(std::size_t n_docs, std::uint64_t seed) {
    Rng rng(seed);
    SyntheticCorpus out;
    std::vector<Quadruple> seen;
    for (std::size_t i = 0; i < n_docs; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "syn_%02zu", i);
        const std::string company = kCompanies[i % kCompanies.size()];
        std::vector<Quadruple> qs;
        const std::size_t n = 2 + rng.below(3);
        for (std::size_t k = 0; k < n; ++k) {
            if (!seen.empty() && rng.below(5) == 0) {
                qs.push_back(seen[rng.below(seen.size())]);
                continue;
            }
            Quadruple q;
            q.head_name = company;
            q.timestamp = random_timestamp(rng);
            if (rng.below(4) == 0) {
                q.tail_name = kCompanies[rng.below(kCompanies.size())];
                q.relation = company + " signed a supply agreement with " + q.tail_name + " in " + q.timestamp.to_string() + ".";
            } else {
                q.tail_name = kMetrics[rng.below(kMetrics.size())];
                q.relation = company + " reported " + q.tail_name + " of " + std::to_string(10 + rng.below(990)) +
                             " million for " + q.timestamp.to_string() + ".";
            }
            seen.push_back(q);
            qs.push_back(std::move(q));
        }
        Document doc;
        doc.id = id;
        doc.metadata["company"] = company;
        doc.text = company + " update.";
        for (const auto& q : qs) doc.text += " " + q.relation;
        out.extractions[doc.id + "#0"] = std::move(qs);
        out.docs.push_back(std::move(doc));
    }
    return out;
}

namespace {

std::string render_extraction(const std::vector<Quadruple>& qs) {
    std::string s;
    for (const auto& q : qs) {
        s += "(\"quadruple\"";
        for (const auto* f : {&q.head_name, &q.tail_name, &q.relation}) {
            s += std::string(kTupleDelimiter) + "\"" + *f + "\"";
        }
        s += std::string(kTupleDelimiter) + "\"" + q.timestamp.to_string() + "\")\n";
    }
    return s + std::string(kCompletionDelimiter);
}

const std::vector<std::pair<std::string, std::string>>& fallbacks() {
    static const std::vector<std::pair<std::string, std::string>> f = {
        {"time_report", "Period {time_label} summary. {edges}"},
        {"time_scope", std::string(kCompletionDelimiter)},
        {"local_query", "Answer drawn from the supplied records."},
        {"extract_points", R"([{"description": "a recorded figure", "importance": 50, "confidence": 50}])"},
        {"global_query", "Overview drawn from the supplied points."},
    };
    return f;
}

} // namespace

void script_mock(MockLlmProvider& llm, const SyntheticCorpus& corpus) {
    for (const auto& [chunk, qs] : corpus.extractions) {
        llm.add(std::string(templates::kExtractQuadruples), chunk, render_extraction(qs));
    }
    for (const auto& [t, r] : fallbacks()) llm.add(t, "*", r);
}

std::string mock_fixture_jsonl(const SyntheticCorpus& corpus) {
    std::string out;
    for (const auto& [chunk, qs] : corpus.extractions) {
        auto arr = nlohmann::json::array();
        for (const auto& q : qs) {
            arr.push_back({{"head", q.head_name}, {"tail", q.tail_name}, {"relation", q.relation},
                           {"timestamp", q.timestamp.to_string()}});
        }
        out += nlohmann::json{{"chunk_id", chunk}, {"quadruples", arr}}.dump() + "\n";
    }
    for (const auto& [t, r] : fallbacks()) {
        out += nlohmann::json{{"template_id", t}, {"key", "*"}, {"response", r}}.dump() + "\n";
    }
    return out;
}

} // namespace tgrag::testing
