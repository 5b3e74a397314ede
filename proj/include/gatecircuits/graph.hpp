// Computational graphs (DAGs of model components) and circuits (edge subsets).
//
// Graphs are immutable after construction and safe to share across threads.
// Circuits are value types: a graph id plus a sorted set of edge indices into
// the owning graph's canonical edge list.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gatecircuits/rng.hpp"

namespace gatecircuits {

enum class NodeKind : std::uint8_t { Input, AttentionHead, Mlp, GateNode, Output };

struct NodeId {
    NodeKind kind = NodeKind::Input;
    int layer = 0;
    int index = 0;

    friend bool operator==(const NodeId& a, const NodeId& b) {
        return a.kind == b.kind && a.layer == b.layer && a.index == b.index;
    }
    friend bool operator!=(const NodeId& a, const NodeId& b) { return !(a == b); }
    // Deterministic tie-break order for topological sorting: (layer, kind, index).
    friend bool operator<(const NodeId& a, const NodeId& b) {
        if (a.layer != b.layer) return a.layer < b.layer;
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.index < b.index;
    }
};

inline std::string node_name(const NodeId& n) {
    switch (n.kind) {
        case NodeKind::Input: return n.index == 0 ? "input" : "input" + std::to_string(n.index);
        case NodeKind::AttentionHead: return "a" + std::to_string(n.layer) + "." + std::to_string(n.index);
        case NodeKind::Mlp: return "m" + std::to_string(n.layer);
        case NodeKind::GateNode: return "g" + std::to_string(n.layer) + "." + std::to_string(n.index);
        case NodeKind::Output: return "output";
    }
    return "?";
}

struct EdgeId {
    NodeId sender;
    NodeId receiver;

    friend bool operator==(const EdgeId& a, const EdgeId& b) {
        return a.sender == b.sender && a.receiver == b.receiver;
    }
};

inline std::string edge_name(const EdgeId& e) {
    return node_name(e.sender) + "->" + node_name(e.receiver);
}

using EdgeIndex = std::uint32_t;

class ComputationalGraph {
public:
    ComputationalGraph(std::vector<NodeId> nodes, std::vector<EdgeId> edges) {
        build(std::move(nodes), std::move(edges));
    }

    std::size_t node_count() const { return topo_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    std::uint64_t id() const { return id_; }

    // Nodes in topological order; position in this vector is the node's topo index.
    const std::vector<NodeId>& topo() const { return topo_; }
    // Edges in canonical order: sorted by (topo(sender), topo(receiver)).
    const std::vector<EdgeId>& edges() const { return edges_; }

    int topo_pos(const NodeId& n) const {
        auto it = node_pos_.find(n);
        if (it == node_pos_.end()) throw std::invalid_argument("unknown node " + node_name(n));
        return it->second;
    }
    bool has_node(const NodeId& n) const { return node_pos_.count(n) > 0; }

    const std::vector<EdgeIndex>& in_edges(int topo_pos) const { return in_edges_[topo_pos]; }
    const std::vector<EdgeIndex>& out_edges(int topo_pos) const { return out_edges_[topo_pos]; }

    EdgeIndex edge_index(const EdgeId& e) const {
        auto it = edge_pos_.find(key(e));
        if (it == edge_pos_.end()) throw std::invalid_argument("unknown edge " + edge_name(e));
        return it->second;
    }
    bool has_edge(const EdgeId& e) const { return edge_pos_.count(key(e)) > 0; }

    int output_pos() const { return output_pos_; }
    const NodeId& output_node() const { return topo_[output_pos_]; }

private:
    static std::pair<std::uint64_t, std::uint64_t> key(const EdgeId& e) {
        auto pack = [](const NodeId& n) {
            return (static_cast<std::uint64_t>(n.kind) << 60) |
                   (static_cast<std::uint64_t>(n.layer & 0x3fffffff) << 30) |
                   static_cast<std::uint64_t>(n.index & 0x3fffffff);
        };
        return {pack(e.sender), pack(e.receiver)};
    }

    void build(std::vector<NodeId> nodes, std::vector<EdgeId> edges) {
        if (nodes.empty()) throw std::invalid_argument("graph: no nodes");
        std::sort(nodes.begin(), nodes.end());
        for (std::size_t i = 1; i < nodes.size(); ++i)
            if (nodes[i] == nodes[i - 1]) throw std::invalid_argument("graph: duplicate node " + node_name(nodes[i]));

        int outputs = 0;
        for (const auto& n : nodes) outputs += (n.kind == NodeKind::Output);
        if (outputs == 0) throw std::invalid_argument("graph: no output node");
        if (outputs > 1) throw std::invalid_argument("graph: more than one output node");

        std::map<NodeId, int> order;
        for (std::size_t i = 0; i < nodes.size(); ++i) order[nodes[i]] = static_cast<int>(i);

        std::vector<std::vector<int>> succ(nodes.size()), pred(nodes.size());
        for (const auto& e : edges) {
            auto si = order.find(e.sender);
            auto ri = order.find(e.receiver);
            if (si == order.end() || ri == order.end())
                throw std::invalid_argument("graph: edge references unknown node: " + edge_name(e));
            if (si->second == ri->second) throw std::invalid_argument("graph: self-edge on " + node_name(e.sender));
            succ[si->second].push_back(ri->second);
            pred[ri->second].push_back(si->second);
        }

        // Kahn's algorithm; the ready set is kept ordered by NodeId so ties
        // resolve by (layer, kind, index).
        std::vector<int> indeg(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) indeg[i] = static_cast<int>(pred[i].size());
        std::set<int> ready;  // indices into `nodes`, which is already NodeId-sorted
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (indeg[i] == 0) ready.insert(static_cast<int>(i));

        std::vector<int> topo_order;
        topo_order.reserve(nodes.size());
        while (!ready.empty()) {
            int u = *ready.begin();
            ready.erase(ready.begin());
            topo_order.push_back(u);
            for (int v : succ[u])
                if (--indeg[v] == 0) ready.insert(v);
        }
        if (topo_order.size() != nodes.size()) throw std::invalid_argument("graph: cycle detected");

        topo_.reserve(nodes.size());
        for (int u : topo_order) topo_.push_back(nodes[u]);
        for (std::size_t i = 0; i < topo_.size(); ++i) node_pos_[topo_[i]] = static_cast<int>(i);

        // Reachability checks: every non-input node reachable from an input,
        // and the output reachable from every node that has out-edges.
        std::vector<char> from_input(nodes.size(), 0);
        for (std::size_t i = 0; i < topo_.size(); ++i) {
            const NodeId& n = topo_[i];
            int u = order[n];
            if (n.kind == NodeKind::Input) from_input[u] = 1;
            if (!from_input[u]) continue;
            for (int v : succ[u]) from_input[v] = 1;
        }
        std::vector<char> to_output(nodes.size(), 0);
        for (auto it = topo_.rbegin(); it != topo_.rend(); ++it) {
            int u = order[*it];
            if (it->kind == NodeKind::Output) to_output[u] = 1;
            if (!to_output[u]) continue;
            for (int v : pred[u]) to_output[v] = 1;
        }
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].kind != NodeKind::Input && !from_input[i])
                throw std::invalid_argument("graph: node unreachable from input: " + node_name(nodes[i]));
            if (nodes[i].kind != NodeKind::Output && !to_output[i])
                throw std::invalid_argument("graph: dead node (output unreachable): " + node_name(nodes[i]));
        }

        // Canonical edge order.
        std::sort(edges.begin(), edges.end(), [&](const EdgeId& a, const EdgeId& b) {
            int as = node_pos_.at(a.sender), bs = node_pos_.at(b.sender);
            if (as != bs) return as < bs;
            return node_pos_.at(a.receiver) < node_pos_.at(b.receiver);
        });
        for (std::size_t i = 1; i < edges.size(); ++i)
            if (edges[i] == edges[i - 1]) throw std::invalid_argument("graph: duplicate edge " + edge_name(edges[i]));
        edges_ = std::move(edges);

        in_edges_.assign(topo_.size(), {});
        out_edges_.assign(topo_.size(), {});
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            edge_pos_[key(edges_[i])] = static_cast<EdgeIndex>(i);
            in_edges_[node_pos_.at(edges_[i].receiver)].push_back(static_cast<EdgeIndex>(i));
            out_edges_[node_pos_.at(edges_[i].sender)].push_back(static_cast<EdgeIndex>(i));
        }

        output_pos_ = node_pos_.at(*std::find_if(topo_.begin(), topo_.end(),
                                                 [](const NodeId& n) { return n.kind == NodeKind::Output; }));

        std::uint64_t h = hash_str("graph-v1");
        for (const auto& n : topo_) h = hash_combine(h, hash_str(node_name(n)));
        for (const auto& e : edges_) h = hash_combine(h, hash_str(edge_name(e)));
        id_ = h;
    }

    std::vector<NodeId> topo_;
    std::vector<EdgeId> edges_;
    std::map<NodeId, int> node_pos_;
    std::map<std::pair<std::uint64_t, std::uint64_t>, EdgeIndex> edge_pos_;
    std::vector<std::vector<EdgeIndex>> in_edges_;
    std::vector<std::vector<EdgeIndex>> out_edges_;
    int output_pos_ = -1;
    std::uint64_t id_ = 0;
};

// ---------------------------------------------------------------------------
// Circuit: an edge subset of one graph, stored as sorted canonical indices.
// ---------------------------------------------------------------------------

class Circuit {
public:
    Circuit() = default;
    Circuit(const ComputationalGraph& g, std::vector<EdgeIndex> members) : graph_id_(g.id()) {
        std::sort(members.begin(), members.end());
        members.erase(std::unique(members.begin(), members.end()), members.end());
        if (!members.empty() && members.back() >= g.edge_count())
            throw std::invalid_argument("circuit: member out of range");
        members_ = std::move(members);
    }
    // Fast path for set algebra: members must already be sorted and unique.
    Circuit(std::uint64_t graph_id, std::vector<EdgeIndex> members)
        : graph_id_(graph_id), members_(std::move(members)) {}

    static Circuit full(const ComputationalGraph& g) {
        std::vector<EdgeIndex> all(g.edge_count());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<EdgeIndex>(i);
        return Circuit(g, std::move(all));
    }
    static Circuit empty(const ComputationalGraph& g) { return Circuit(g, {}); }

    std::uint64_t graph_id() const { return graph_id_; }
    const std::vector<EdgeIndex>& members() const { return members_; }
    std::size_t size() const { return members_.size(); }
    bool contains(EdgeIndex e) const {
        return std::binary_search(members_.begin(), members_.end(), e);
    }
    double sparsity_ratio(const ComputationalGraph& g) const {
        return g.edge_count() == 0 ? 0.0 : static_cast<double>(members_.size()) / g.edge_count();
    }

    friend bool operator==(const Circuit& a, const Circuit& b) {
        return a.graph_id_ == b.graph_id_ && a.members_ == b.members_;
    }
    friend bool operator!=(const Circuit& a, const Circuit& b) { return !(a == b); }

private:
    std::uint64_t graph_id_ = 0;
    std::vector<EdgeIndex> members_;
};

inline void require_same_graph(const Circuit& a, const Circuit& b) {
    if (a.graph_id() != b.graph_id())
        throw std::invalid_argument("circuit operation on mismatched graphs");
}

inline void require_graph(const ComputationalGraph& g, const Circuit& c) {
    if (c.graph_id() != g.id())
        throw std::invalid_argument("circuit does not belong to this graph");
}

inline Circuit circuit_difference(const Circuit& a, const Circuit& b) {
    require_same_graph(a, b);
    std::vector<EdgeIndex> out;
    std::set_difference(a.members().begin(), a.members().end(),
                        b.members().begin(), b.members().end(), std::back_inserter(out));
    return Circuit(a.graph_id(), std::move(out));
}

inline Circuit circuit_intersection(const Circuit& a, const Circuit& b) {
    require_same_graph(a, b);
    std::vector<EdgeIndex> out;
    std::set_intersection(a.members().begin(), a.members().end(),
                          b.members().begin(), b.members().end(), std::back_inserter(out));
    return Circuit(a.graph_id(), std::move(out));
}

inline Circuit circuit_union(const Circuit& a, const Circuit& b) {
    require_same_graph(a, b);
    std::vector<EdgeIndex> out;
    std::set_union(a.members().begin(), a.members().end(),
                   b.members().begin(), b.members().end(), std::back_inserter(out));
    return Circuit(a.graph_id(), std::move(out));
}

inline Circuit circuit_complement(const ComputationalGraph& g, const Circuit& a) {
    require_graph(g, a);
    return circuit_difference(Circuit::full(g), a);
}

inline std::size_t hamming_distance(const Circuit& a, const Circuit& b) {
    require_same_graph(a, b);
    std::size_t inter = circuit_intersection(a, b).size();
    return a.size() + b.size() - 2 * inter;
}

// Uniformly sampled member subset whose size is drawn uniformly from
// [size_min, size_max]. Deterministic under a fixed seed.
inline Circuit random_subcircuit(const Circuit& c, std::size_t size_min, std::size_t size_max, Rng& rng) {
    if (size_min > size_max) throw std::invalid_argument("random_subcircuit: empty size range");
    if (size_min > c.size()) throw std::invalid_argument("random_subcircuit: size range exceeds circuit size");
    std::size_t hi = std::min(size_max, c.size());
    std::size_t n = size_min + static_cast<std::size_t>(rng.uniform_index(hi - size_min + 1));
    std::vector<EdgeIndex> pool = c.members();
    // Partial Fisher-Yates: the first n slots become the sample.
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(n);
    std::sort(pool.begin(), pool.end());
    return Circuit(c.graph_id(), std::move(pool));
}

// Canonical serialization: sorted "sender->receiver" names. Byte equality of
// the serialized form implies circuit equality within one graph.
inline std::vector<std::string> circuit_edge_names(const ComputationalGraph& g, const Circuit& c) {
    require_graph(g, c);
    std::vector<std::string> names;
    names.reserve(c.size());
    for (EdgeIndex e : c.members()) names.push_back(edge_name(g.edges()[e]));
    return names;
}

inline Circuit circuit_from_edge_names(const ComputationalGraph& g, const std::vector<std::string>& names) {
    std::vector<EdgeIndex> members;
    members.reserve(names.size());
    for (const auto& name : names) {
        bool found = false;
        for (std::size_t i = 0; i < g.edge_count(); ++i) {
            if (edge_name(g.edges()[i]) == name) {
                members.push_back(static_cast<EdgeIndex>(i));
                found = true;
                break;
            }
        }
        if (!found) throw std::invalid_argument("unknown edge name: " + name);
    }
    return Circuit(g, std::move(members));
}

}  // namespace gatecircuits
