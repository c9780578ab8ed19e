#include "tgrag/reports.hpp"

#include "tgrag/error.hpp"

#include <algorithm>
#include <cstdio>
#include <future>

namespace tgrag {

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct Fnv {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    void feed(std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    }
};

std::vector<std::vector<Timestamp>> by_level(const std::vector<Timestamp>& bottom_up) {
    std::vector<std::vector<Timestamp>> levels;
    for (const auto& t : bottom_up) {
        if (levels.empty() || levels.back().front().granularity != t.granularity) levels.emplace_back();
        levels.back().push_back(t);
    }
    return levels;
}

// Generates the given nodes of one level, in parallel batches when
// configured, and commits them to the store in input order.
void run_level(const std::vector<Timestamp>& nodes, const BiLevelGraph& g, ReportStore& store,
               const ReportContext& ctx) {
    std::vector<TimeReport> results(nodes.size());
    const std::size_t workers = std::max<std::size_t>(1, ctx.config.workers);
    for (std::size_t start = 0; start < nodes.size(); start += workers) {
        const std::size_t end = std::min(nodes.size(), start + workers);
        if (workers == 1) {
            results[start] = generate_report(*g.find_time_node(nodes[start]), g, store, ctx);
            continue;
        }
        std::vector<std::future<TimeReport>> pending;
        for (std::size_t i = start; i < end; ++i) {
            pending.push_back(std::async(std::launch::async, [&, i] {
                return generate_report(*g.find_time_node(nodes[i]), g, store, ctx);
            }));
        }
        for (std::size_t i = start; i < end; ++i) results[i] = pending[i - start].get();
    }
    for (auto& r : results) {
        r.generated_at = ++store.version;
        const Timestamp t = r.time_id;
        store.reports[t] = std::move(r);
    }
}

} // namespace

std::string report_fingerprint(const TimeNode& node, const ReportStore& store) {
    Fnv f;
    f.feed(node.id.to_string());
    for (EdgeId e : node.attached_edges) {
        f.feed("|e");
        f.feed(std::to_string(raw(e)));
    }
    for (const auto& child : node.children) {
        const auto* r = store.find(child);
        if (!r) {
            throw Error(ErrorCode::kMissingChildReport,
                        node.id.to_string() + ": child " + child.to_string() + " has no report");
        }
        f.feed("|c");
        f.feed(child.to_string());
        f.feed("=");
        f.feed(r->input_fingerprint);
    }
    return hex64(f.h);
}

ReportInputs assemble_report_inputs(const TimeNode& node, const BiLevelGraph& g,
                                    const ReportStore& store, const ReportContext& ctx) {
    ReportInputs in;
    std::size_t child_tokens = 0;
    for (const auto& child : node.children) {
        const auto* r = store.find(child);
        if (!r) {
            throw Error(ErrorCode::kMissingChildReport,
                        node.id.to_string() + ": child " + child.to_string() + " has no report");
        }
        std::string block = "[" + child.to_string() + "]\n" + r->text + "\n";
        child_tokens += ctx.tokenizer.count(block);
        in.child_reports += block;
    }

    struct Line {
        Timestamp when;
        std::string text;
    };
    std::vector<Line> lines;
    for (EdgeId id : node.attached_edges) {
        const auto& e = g.edge(id);
        lines.push_back({e.timestamp, "- " + g.entity(e.head).name + " -> " +
                                          g.entity(e.tail).name + ": " + e.relation + "\n"});
    }
    // Most recent first, then alphabetical.
    std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
        if (a.when != b.when) return b.when < a.when;
        return a.text < b.text;
    });
    in.edges_total = lines.size();
    std::size_t used = child_tokens;
    for (const auto& l : lines) {
        const std::size_t n = ctx.tokenizer.count(l.text);
        if (used + n > ctx.config.input_limit_tokens) break;
        used += n;
        in.edges += l.text;
        ++in.edges_included;
    }
    return in;
}

TimeReport generate_report(const TimeNode& node, const BiLevelGraph& g, const ReportStore& store,
                           const ReportContext& ctx) {
    TimeReport report;
    report.time_id = node.id;
    report.input_fingerprint = report_fingerprint(node, store);
    const std::string label = node.id.to_string();

    if (node.attached_edges.empty() && node.children.empty()) {
        report.text = "No recorded activity for " + label + ".";
    } else {
        const auto inputs = assemble_report_inputs(node, g, store, ctx);
        std::map<std::string, std::string> vars = {
            {"time_label", label},
            {"edges", inputs.edges.empty() ? "(none)\n" : inputs.edges},
            {"child_reports", inputs.child_reports.empty() ? "(none)\n" : inputs.child_reports},
        };
        ChatRequest req;
        req.template_id = std::string(templates::kTimeReport);
        req.key = label;
        req.rendered_prompt = ctx.prompts.render(templates::kTimeReport, vars);
        req.variables = std::move(vars);
        req.max_output_tokens = ctx.config.max_output_tokens;
        try {
            report.text = ctx.provider.complete(req).text;
        } catch (const ProviderError& e) {
            throw ProviderError(e.kind(), "report for " + label + ": " + e.detail());
        }
    }
    report.token_count = ctx.tokenizer.count(report.text);
    return report;
}

std::vector<Timestamp> generate_all(const BiLevelGraph& g, ReportStore& store,
                                    const ReportContext& ctx) {
    std::vector<Timestamp> regenerated;
    for (const auto& level : by_level(g.bottom_up_order())) {
        std::vector<Timestamp> stale;
        for (const auto& t : level) {
            const auto* existing = store.find(t);
            if (existing && existing->input_fingerprint == report_fingerprint(*g.find_time_node(t), store)) {
                continue;
            }
            stale.push_back(t);
        }
        run_level(stale, g, store, ctx);
        regenerated.insert(regenerated.end(), stale.begin(), stale.end());
    }
    return regenerated;
}

std::vector<Timestamp> refresh_dirty(const std::set<Timestamp>& dirty, const BiLevelGraph& g,
                                     ReportStore& store, const ReportContext& ctx) {
    std::vector<Timestamp> order;
    for (const auto& t : g.bottom_up_order()) {
        if (dirty.count(t)) order.push_back(t);
    }
    for (const auto& t : dirty) {
        if (!g.find_time_node(t)) {
            throw Error(ErrorCode::kInvalidArgument, "dirty node " + t.to_string() + " is not in the hierarchy");
        }
    }
    for (const auto& level : by_level(order)) run_level(level, g, store, ctx);
    return order;
}

} // namespace tgrag
