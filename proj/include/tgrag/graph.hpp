#pragma once

#include "tgrag/timestamp.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace tgrag {

enum class EntityId : std::uint64_t {};
enum class EdgeId : std::uint64_t {};
using ChunkId = std::string;

constexpr std::uint64_t raw(EntityId id) { return static_cast<std::uint64_t>(id); }
constexpr std::uint64_t raw(EdgeId id) { return static_cast<std::uint64_t>(id); }

// (head, tail, relation description, timestamp) as extracted from one chunk.
struct Quadruple {
    std::string head_name;
    std::string tail_name;
    std::string relation;
    Timestamp timestamp;

    bool operator==(const Quadruple&) const = default;
    auto operator<=>(const Quadruple&) const = default;
};

struct Entity {
    EntityId id{};
    std::string name;        // canonical form, see canonical_entity_name
    std::string description; // distinct relation texts mentioning the entity, newline-joined
    std::set<ChunkId> source_chunks;

    bool operator==(const Entity&) const = default;
};

struct TemporalEdge {
    EdgeId id{};
    EntityId head{};
    EntityId tail{};
    std::string relation;
    Timestamp timestamp;
    ChunkId source_chunk;

    bool operator==(const TemporalEdge&) const = default;
};

struct TimeNode {
    Timestamp id;
    std::optional<Timestamp> parent;
    std::set<Timestamp> children;
    std::set<EdgeId> attached_edges;

    bool operator==(const TimeNode&) const = default;
};

struct GraphStats {
    std::size_t entities = 0;
    std::size_t edges = 0;
    std::size_t chunks = 0;
    // Indexed by Granularity.
    std::array<std::size_t, 4> time_nodes{};

    std::size_t total_time_nodes() const {
        return time_nodes[0] + time_nodes[1] + time_nodes[2] + time_nodes[3];
    }
    bool operator==(const GraphStats&) const = default;
};

// Upper-cased, whitespace-collapsed, trimmed. Two names denote the same
// entity iff their canonical forms are equal.
std::string canonical_entity_name(std::string_view name);

// Trimmed and whitespace-collapsed; case is preserved.
std::string normalize_text(std::string_view text);

struct InsertResult {
    EdgeId edge{};
    bool inserted = false;
    // Time nodes created by this insert, finest first.
    std::vector<Timestamp> created_nodes;
};

// The entity layer (entities plus parallel timestamped edges), the time
// hierarchy, and the cross-layer links binding each edge to the time node of
// its exact timestamp. Ancestors are resolved through the hierarchy at query
// time.
class BiLevelGraph {
public:
    // Upserts both entities and appends the edge unless an edge with the same
    // (head, tail, relation, timestamp) exists, in which case that edge is
    // returned with inserted == false.
    InsertResult insert_edge(const Quadruple& q, const ChunkId& chunk);

    // Edges whose timestamp equals, contains, or is contained in a member of
    // the scope.
    std::set<EdgeId> edges_in_scope(const std::set<Timestamp>& scope) const;

    const std::map<EntityId, Entity>& entities() const { return entities_; }
    const std::map<EdgeId, TemporalEdge>& edges() const { return edges_; }
    const std::map<Timestamp, TimeNode>& time_nodes() const { return time_nodes_; }
    const std::map<EntityId, std::set<EdgeId>>& adjacency() const { return adjacency_; }

    const Entity& entity(EntityId id) const;
    const TemporalEdge& edge(EdgeId id) const;
    const TimeNode* find_time_node(const Timestamp& t) const;
    const Entity* find_entity(std::string_view name) const;

    Quadruple quadruple_of(EdgeId id) const;

    // Leaves-first order: all DAY nodes, then MONTH, QUARTER, YEAR;
    // chronological within a level.
    std::vector<Timestamp> bottom_up_order() const;

    // Full scan of referential integrity and hierarchy shape. Returns a list
    // of human-readable problems; empty when consistent.
    std::vector<std::string> check_integrity() const;

    // Rebuilds a graph from persisted records and validates it. Throws
    // Error(kCorruptSnapshot) when the records are inconsistent.
    static BiLevelGraph restore(std::vector<Entity> entities, std::vector<TemporalEdge> edges,
                                std::vector<TimeNode> time_nodes);

    bool operator==(const BiLevelGraph& other) const {
        return entities_ == other.entities_ && edges_ == other.edges_ &&
               time_nodes_ == other.time_nodes_;
    }

private:
    using EdgeKey = std::tuple<EntityId, EntityId, std::string, Timestamp>;

    EntityId upsert_entity(const std::string& canonical_name, const ChunkId& chunk);
    std::vector<Timestamp> ensure_time_chain(const Timestamp& t);
    void collect_descendant_edges(const Timestamp& t, std::set<EdgeId>& out) const;

    std::map<EntityId, Entity> entities_;
    std::map<EdgeId, TemporalEdge> edges_;
    std::map<Timestamp, TimeNode> time_nodes_;
    std::map<EntityId, std::set<EdgeId>> adjacency_;

    std::map<std::string, EntityId, std::less<>> entity_by_name_;
    std::map<EdgeKey, EdgeId> edge_by_key_;
    std::uint64_t next_entity_ = 0;
    std::uint64_t next_edge_ = 0;
};

GraphStats graph_stats(const BiLevelGraph& g);

} // namespace tgrag
