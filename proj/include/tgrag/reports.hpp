#pragma once

#include "tgrag/graph.hpp"
#include "tgrag/llm.hpp"
#include "tgrag/prompts.hpp"
#include "tgrag/tokenizer.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace tgrag {

struct TimeReport {
    Timestamp time_id;
    std::string text;
    std::size_t token_count = 0;
    // Hex digest over the attached edge ids and the child report fingerprints.
    std::string input_fingerprint;
    std::uint64_t generated_at = 0;

    bool operator==(const TimeReport&) const = default;
};

struct ReportStore {
    std::map<Timestamp, TimeReport> reports;
    // Monotone version stamped onto each newly generated report.
    std::uint64_t version = 0;

    const TimeReport* find(const Timestamp& t) const {
        const auto it = reports.find(t);
        return it == reports.end() ? nullptr : &it->second;
    }
    bool operator==(const ReportStore&) const = default;
};

struct ReportConfig {
    std::size_t input_limit_tokens = 8000;
    std::size_t max_output_tokens = 512;
    // Nodes of one level generated concurrently; levels are barriers.
    std::size_t workers = 1;
};

struct ReportContext {
    LlmProvider& provider;
    const PromptLibrary& prompts = PromptLibrary::defaults();
    const Tokenizer& tokenizer = default_tokenizer();
    ReportConfig config{};
};

// Throws Error(kMissingChildReport) when a child has no report yet.
std::string report_fingerprint(const TimeNode& node, const ReportStore& store);

// Rendered {edges} and {child_reports} values for a node, after truncation.
struct ReportInputs {
    std::string edges;
    std::string child_reports;
    std::size_t edges_included = 0;
    std::size_t edges_total = 0;
};
ReportInputs assemble_report_inputs(const TimeNode& node, const BiLevelGraph& g,
                                    const ReportStore& store, const ReportContext& ctx);

// Builds the report for one node from its attached edges and child reports.
// A node with neither gets a placeholder without a provider call. The
// returned report is not stored and carries generated_at == 0.
TimeReport generate_report(const TimeNode& node, const BiLevelGraph& g, const ReportStore& store,
                           const ReportContext& ctx);

// Generates reports bottom-up for every node whose fingerprint changed (all
// nodes on a fresh store). Returns the regenerated nodes in generation order.
std::vector<Timestamp> generate_all(const BiLevelGraph& g, ReportStore& store,
                                    const ReportContext& ctx);

// Regenerates exactly the dirty nodes, children before parents.
std::vector<Timestamp> refresh_dirty(const std::set<Timestamp>& dirty, const BiLevelGraph& g,
                                     ReportStore& store, const ReportContext& ctx);

} // namespace tgrag
