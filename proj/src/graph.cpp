#include "tgrag/graph.hpp"

#include "tgrag/error.hpp"

#include <algorithm>
#include <cctype>

namespace tgrag {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

void append_description(Entity& e, const std::string& relation) {
    std::size_t start = 0;
    while (start <= e.description.size()) {
        std::size_t end = e.description.find('\n', start);
        if (end == std::string::npos) end = e.description.size();
        if (e.description.compare(start, end - start, relation) == 0 && end > start) return;
        start = end + 1;
    }
    if (!e.description.empty()) e.description += '\n';
    e.description += relation;
}

} // namespace

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(ch);
    }
    return out;
}

std::string canonical_entity_name(std::string_view name) {
    std::string out = normalize_text(name);
    for (char& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return out;
}

EntityId BiLevelGraph::upsert_entity(const std::string& canonical_name, const ChunkId& chunk) {
    if (auto it = entity_by_name_.find(canonical_name); it != entity_by_name_.end()) {
        entities_.at(it->second).source_chunks.insert(chunk);
        return it->second;
    }
    const EntityId id{next_entity_++};
    Entity e;
    e.id = id;
    e.name = canonical_name;
    e.source_chunks.insert(chunk);
    entities_.emplace(id, std::move(e));
    entity_by_name_.emplace(canonical_name, id);
    adjacency_[id];
    return id;
}

std::vector<Timestamp> BiLevelGraph::ensure_time_chain(const Timestamp& t) {
    std::vector<Timestamp> created;
    std::optional<Timestamp> child;
    for (std::optional<Timestamp> cur = t; cur; cur = parent_of(*cur)) {
        auto [it, fresh] = time_nodes_.try_emplace(*cur);
        TimeNode& node = it->second;
        if (fresh) {
            node.id = *cur;
            node.parent = parent_of(*cur);
            created.push_back(*cur);
        }
        if (child) node.children.insert(*child);
        if (!fresh) break; // ancestors of an existing node already exist
        child = cur;
    }
    return created;
}

InsertResult BiLevelGraph::insert_edge(const Quadruple& q, const ChunkId& chunk) {
    const std::string head_name = canonical_entity_name(q.head_name);
    const std::string tail_name = canonical_entity_name(q.tail_name);
    const std::string relation = normalize_text(q.relation);
    if (head_name.empty() || tail_name.empty() || relation.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "quadruple has an empty field");
    }

    const EntityId head = upsert_entity(head_name, chunk);
    const EntityId tail = upsert_entity(tail_name, chunk);

    EdgeKey key{head, tail, relation, q.timestamp};
    if (auto it = edge_by_key_.find(key); it != edge_by_key_.end()) {
        return {it->second, false, {}};
    }

    const EdgeId id{next_edge_++};
    edges_.emplace(id, TemporalEdge{id, head, tail, relation, q.timestamp, chunk});
    edge_by_key_.emplace(std::move(key), id);
    adjacency_[head].insert(id);
    adjacency_[tail].insert(id);
    append_description(entities_.at(head), relation);
    if (tail != head) append_description(entities_.at(tail), relation);

    InsertResult result{id, true, ensure_time_chain(q.timestamp)};
    time_nodes_.at(q.timestamp).attached_edges.insert(id);
    return result;
}

void BiLevelGraph::collect_descendant_edges(const Timestamp& t, std::set<EdgeId>& out) const {
    const auto it = time_nodes_.find(t);
    if (it == time_nodes_.end()) return;
    out.insert(it->second.attached_edges.begin(), it->second.attached_edges.end());
    for (const auto& child : it->second.children) collect_descendant_edges(child, out);
}

std::set<EdgeId> BiLevelGraph::edges_in_scope(const std::set<Timestamp>& scope) const {
    std::set<EdgeId> out;
    for (const auto& member : scope) {
        collect_descendant_edges(member, out);
        for (const auto& anc : ancestors(member)) {
            if (const auto* node = find_time_node(anc)) {
                out.insert(node->attached_edges.begin(), node->attached_edges.end());
            }
        }
    }
    return out;
}

const Entity& BiLevelGraph::entity(EntityId id) const { return entities_.at(id); }

const TemporalEdge& BiLevelGraph::edge(EdgeId id) const { return edges_.at(id); }

const TimeNode* BiLevelGraph::find_time_node(const Timestamp& t) const {
    const auto it = time_nodes_.find(t);
    return it == time_nodes_.end() ? nullptr : &it->second;
}

const Entity* BiLevelGraph::find_entity(std::string_view name) const {
    const auto it = entity_by_name_.find(canonical_entity_name(name));
    return it == entity_by_name_.end() ? nullptr : &entities_.at(it->second);
}

Quadruple BiLevelGraph::quadruple_of(EdgeId id) const {
    const auto& e = edge(id);
    return {entity(e.head).name, entity(e.tail).name, e.relation, e.timestamp};
}

std::vector<Timestamp> BiLevelGraph::bottom_up_order() const {
    std::vector<Timestamp> order;
    order.reserve(time_nodes_.size());
    for (const auto& [t, _] : time_nodes_) order.push_back(t);
    std::stable_sort(order.begin(), order.end(), [](const Timestamp& a, const Timestamp& b) {
        return a.granularity > b.granularity;
    });
    return order;
}

std::vector<std::string> BiLevelGraph::check_integrity() const {
    std::vector<std::string> problems;
    for (const auto& [id, e] : edges_) {
        if (e.id != id) problems.push_back("edge " + std::to_string(raw(id)) + " has mismatched id");
        if (!entities_.count(e.head) || !entities_.count(e.tail)) {
            problems.push_back("edge " + std::to_string(raw(id)) + " references a missing entity");
        }
        const auto* node = find_time_node(e.timestamp);
        if (!node || !node->attached_edges.count(id)) {
            problems.push_back("edge " + std::to_string(raw(id)) + " is not linked to time node " +
                               e.timestamp.to_string());
        }
    }
    for (const auto& [id, en] : entities_) {
        if (en.name.empty()) problems.push_back("entity " + std::to_string(raw(id)) + " has no name");
    }
    for (const auto& [entity_id, edge_ids] : adjacency_) {
        for (EdgeId eid : edge_ids) {
            const auto it = edges_.find(eid);
            if (it == edges_.end() || (it->second.head != entity_id && it->second.tail != entity_id)) {
                problems.push_back("adjacency of entity " + std::to_string(raw(entity_id)) +
                                   " lists a foreign edge");
            }
        }
    }
    for (const auto& [t, node] : time_nodes_) {
        const std::string label = t.to_string();
        if (node.id != t) problems.push_back("time node " + label + " has mismatched id");
        if (node.parent != parent_of(t)) problems.push_back("time node " + label + " has wrong parent");
        if (node.parent) {
            const auto* p = find_time_node(*node.parent);
            if (!p || !p->children.count(t)) {
                problems.push_back("time node " + label + " missing from its parent");
            }
        }
        for (const auto& c : node.children) {
            if (parent_of(c) != t || !time_nodes_.count(c)) {
                problems.push_back("time node " + label + " has a bad child " + c.to_string());
            }
        }
        for (EdgeId eid : node.attached_edges) {
            const auto it = edges_.find(eid);
            if (it == edges_.end() || it->second.timestamp != t) {
                problems.push_back("time node " + label + " links a foreign edge");
            }
        }
    }
    return problems;
}

BiLevelGraph BiLevelGraph::restore(std::vector<Entity> entities, std::vector<TemporalEdge> edges,
                                   std::vector<TimeNode> time_nodes) {
    BiLevelGraph g;
    for (auto& e : entities) {
        if (!g.entity_by_name_.emplace(e.name, e.id).second) {
            throw Error(ErrorCode::kCorruptSnapshot, "duplicate entity name " + e.name);
        }
        g.next_entity_ = std::max(g.next_entity_, raw(e.id) + 1);
        g.adjacency_[e.id];
        const EntityId id = e.id;
        if (!g.entities_.emplace(id, std::move(e)).second) {
            throw Error(ErrorCode::kCorruptSnapshot, "duplicate entity id " + std::to_string(raw(id)));
        }
    }
    for (auto& e : edges) {
        g.next_edge_ = std::max(g.next_edge_, raw(e.id) + 1);
        if (!g.edge_by_key_.emplace(EdgeKey{e.head, e.tail, e.relation, e.timestamp}, e.id).second) {
            throw Error(ErrorCode::kCorruptSnapshot, "duplicate edge " + std::to_string(raw(e.id)));
        }
        g.adjacency_[e.head].insert(e.id);
        g.adjacency_[e.tail].insert(e.id);
        const EdgeId id = e.id;
        g.edges_.emplace(id, std::move(e));
    }
    for (auto& n : time_nodes) {
        const Timestamp t = n.id;
        g.time_nodes_.emplace(t, std::move(n));
    }
    if (auto problems = g.check_integrity(); !problems.empty()) {
        throw Error(ErrorCode::kCorruptSnapshot, problems.front());
    }
    return g;
}

GraphStats graph_stats(const BiLevelGraph& g) {
    GraphStats s;
    s.entities = g.entities().size();
    s.edges = g.edges().size();
    std::set<ChunkId> chunks;
    for (const auto& [_, e] : g.edges()) chunks.insert(e.source_chunk);
    s.chunks = chunks.size();
    for (const auto& [t, _] : g.time_nodes()) ++s.time_nodes[static_cast<std::size_t>(t.granularity)];
    return s;
}

} // namespace tgrag
