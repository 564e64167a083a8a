#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cfgraph/errors.hpp"
#include "cfgraph/exact_sum.hpp"

namespace cfgraph {

using NodeId = std::int32_t;
using Matrix = Eigen::MatrixXd;

/// Sorted, unique node ids.
using NodeSet = std::vector<NodeId>;

inline NodeSet make_node_set(std::vector<NodeId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

inline bool node_set_contains(const NodeSet& s, NodeId v) {
    return std::binary_search(s.begin(), s.end(), v);
}

inline NodeSet node_set_union(const NodeSet& a, const NodeSet& b) {
    NodeSet out;
    out.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

enum class ForgetKind { Label, Feature, Edge, Node, Subgraph };

inline const char* forget_kind_name(ForgetKind k) {
    switch (k) {
        case ForgetKind::Label: return "label";
        case ForgetKind::Feature: return "feature";
        case ForgetKind::Edge: return "edge";
        case ForgetKind::Node: return "node";
        case ForgetKind::Subgraph: return "subgraph";
    }
    return "?";
}

inline ForgetKind forget_kind_from_name(const std::string& s) {
    if (s == "label") return ForgetKind::Label;
    if (s == "feature") return ForgetKind::Feature;
    if (s == "edge") return ForgetKind::Edge;
    if (s == "node") return ForgetKind::Node;
    if (s == "subgraph") return ForgetKind::Subgraph;
    throw ValidationError("unknown forget kind: " + s);
}

/// One graph-object modification: label/feature/node/subgraph target node
/// ids; edge forget targets endpoint pairs.
struct ForgetRequest {
    ForgetKind kind = ForgetKind::Label;
    NodeSet nodes;
    std::vector<std::pair<NodeId, NodeId>> edge_pairs;

    std::size_t size() const {
        return kind == ForgetKind::Edge ? edge_pairs.size() : nodes.size();
    }
};

/// Immutable sparse undirected graph. Self-loops are never stored; the
/// propagation operator adds them analytically. Deleted nodes keep their
/// id (rows stay addressable across unlearning events) but have degree 0
/// and act as isolated self-loop-only nodes.
struct Graph {
    NodeId n = 0;
    std::vector<std::pair<NodeId, NodeId>> edges;  // u < v, sorted, unique
    std::vector<std::int64_t> row_offsets;         // size n+1
    std::vector<NodeId> col_indices;               // ascending within a row
    std::vector<NodeId> degrees_bar;               // deg(A) + 1
    std::vector<char> deleted;                     // masked node flags

    std::int64_t degree(NodeId v) const {
        return row_offsets[v + 1] - row_offsets[v];
    }
    const NodeId* neighbors_begin(NodeId v) const {
        return col_indices.data() + row_offsets[v];
    }
    const NodeId* neighbors_end(NodeId v) const {
        return col_indices.data() + row_offsets[v + 1];
    }
};

namespace detail {

inline void rebuild_csr(Graph& g) {
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    g.row_offsets.assign(static_cast<std::size_t>(g.n) + 1, 0);
    for (const auto& [u, v] : g.edges) {
        ++g.row_offsets[u + 1];
        ++g.row_offsets[v + 1];
    }
    for (NodeId i = 0; i < g.n; ++i) g.row_offsets[i + 1] += g.row_offsets[i];
    g.col_indices.assign(static_cast<std::size_t>(g.row_offsets[g.n]), 0);
    std::vector<std::int64_t> cursor(g.row_offsets.begin(), g.row_offsets.end() - 1);
    for (const auto& [u, v] : g.edges) {
        g.col_indices[static_cast<std::size_t>(cursor[u]++)] = v;
        g.col_indices[static_cast<std::size_t>(cursor[v]++)] = u;
    }
    for (NodeId v = 0; v < g.n; ++v)
        std::sort(g.col_indices.begin() + g.row_offsets[v],
                  g.col_indices.begin() + g.row_offsets[v + 1]);
    g.degrees_bar.resize(static_cast<std::size_t>(g.n));
    for (NodeId v = 0; v < g.n; ++v)
        g.degrees_bar[v] = static_cast<NodeId>(g.degree(v)) + 1;
}

}  // namespace detail

/// Build from an undirected edge list; symmetrizes, deduplicates, and
/// drops explicit self-loops.
inline Graph make_graph(NodeId n, const std::vector<std::pair<NodeId, NodeId>>& raw_edges) {
    Graph g;
    g.n = n;
    g.deleted.assign(static_cast<std::size_t>(n), 0);
    g.edges.reserve(raw_edges.size());
    for (auto [u, v] : raw_edges) {
        if (u < 0 || v < 0 || u >= n || v >= n)
            throw ValidationError("edge endpoint out of range");
        if (u == v) continue;
        if (u > v) std::swap(u, v);
        g.edges.emplace_back(u, v);
    }
    detail::rebuild_csr(g);
    return g;
}

/// Edge-list file: one "u<TAB>v" pair per line, 0-based ids.
inline Graph load_edge_list(const std::string& path, NodeId n) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open edge list: " + path);
    std::vector<std::pair<NodeId, NodeId>> edges;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long u, v;
        if (!(ls >> u >> v)) throw ValidationError("malformed edge line: " + line);
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
    return make_graph(n, edges);
}

/// One row of the normalized propagation A~ = Dbar^{-1/2}(A+I)Dbar^{-1/2}
/// applied to M, accumulated exactly in ascending (neighbor+self) order.
/// Row-local by construction, so local recomputation during unlearning is
/// bit-identical to a full pass.
inline void propagate_row(const Graph& g, const Matrix& M, NodeId v, double* out) {
    const Eigen::Index d = M.cols();
    const double inv_s_v = 1.0 / std::sqrt(static_cast<double>(g.degrees_bar[v]));
    ExactSum acc;
    for (Eigen::Index j = 0; j < d; ++j) {
        acc.clear();
        bool self_done = false;
        for (const NodeId* u = g.neighbors_begin(v); u != g.neighbors_end(v); ++u) {
            if (!self_done && *u > v) {
                acc.add(M(v, j) * (inv_s_v * inv_s_v));
                self_done = true;
            }
            const double w = inv_s_v / std::sqrt(static_cast<double>(g.degrees_bar[*u]));
            acc.add(M(*u, j) * w);
        }
        if (!self_done) acc.add(M(v, j) * (inv_s_v * inv_s_v));
        out[j] = acc.to_double();
    }
}

/// A~ * M over all rows in canonical ascending-node order.
inline Matrix propagate(const Graph& g, const Matrix& M) {
    if (M.rows() != g.n) throw DimensionMismatch("propagate: row count != n");
    Matrix out(M.rows(), M.cols());
    std::vector<double> row(static_cast<std::size_t>(M.cols()));
    for (NodeId v = 0; v < g.n; ++v) {
        propagate_row(g, M, v, row.data());
        for (Eigen::Index j = 0; j < M.cols(); ++j) out(v, j) = row[j];
    }
    return out;
}

/// {v : d_G(v, seeds) <= L} by breadth-first search.
inline NodeSet k_hop_neighborhood(const Graph& g, const NodeSet& seeds, int hops) {
    for (NodeId s : seeds)
        if (s < 0 || s >= g.n) throw ValidationError("k_hop: seed out of range");
    std::vector<int> dist(static_cast<std::size_t>(g.n), -1);
    std::queue<NodeId> frontier;
    for (NodeId s : seeds) {
        dist[s] = 0;
        frontier.push(s);
    }
    NodeSet out(seeds);
    while (!frontier.empty()) {
        const NodeId v = frontier.front();
        frontier.pop();
        if (dist[v] == hops) continue;
        for (const NodeId* u = g.neighbors_begin(v); u != g.neighbors_end(v); ++u) {
            if (dist[*u] < 0) {
                dist[*u] = dist[v] + 1;
                frontier.push(*u);
                out.push_back(*u);
            }
        }
    }
    return make_node_set(std::move(out));
}

/// Adjusted homophily on the train-induced subgraph. Labels are class ids;
/// only edges with both endpoints in the train mask count.
inline double adjusted_homophily(const Graph& g, const std::vector<int>& labels,
                                 const std::vector<char>& train_mask) {
    if (static_cast<NodeId>(labels.size()) != g.n ||
        static_cast<NodeId>(train_mask.size()) != g.n)
        throw DimensionMismatch("adjusted_homophily: mask/label size != n");
    std::int64_t e_tr = 0, e_same = 0;
    std::vector<std::int64_t> deg_tr(static_cast<std::size_t>(g.n), 0);
    for (const auto& [u, v] : g.edges) {
        if (!train_mask[u] || !train_mask[v]) continue;
        if (g.deleted[u] || g.deleted[v]) continue;
        ++e_tr;
        ++deg_tr[u];
        ++deg_tr[v];
        if (labels[u] == labels[v]) ++e_same;
    }
    if (e_tr == 0) throw NoTrainEdges("no train-train edges");
    int num_classes = 0;
    for (NodeId v = 0; v < g.n; ++v)
        if (train_mask[v] && !g.deleted[v]) num_classes = std::max(num_classes, labels[v] + 1);
    std::vector<double> class_degree(static_cast<std::size_t>(num_classes), 0.0);
    for (NodeId v = 0; v < g.n; ++v)
        if (train_mask[v] && !g.deleted[v])
            class_degree[labels[v]] += static_cast<double>(deg_tr[v]);
    const double two_e = 2.0 * static_cast<double>(e_tr);
    double correction = 0.0;
    for (double dsum : class_degree) {
        const double p = dsum / two_e;
        correction += p * p;
    }
    if (correction >= 1.0)
        throw ValidationError("adjusted_homophily: single-class train subgraph");
    const double h_edge = static_cast<double>(e_same) / static_cast<double>(e_tr);
    return (h_edge - correction) / (1.0 - correction);
}

/// Apply the structural part of a forget request. Returns the modified
/// graph and the affected set S: nodes whose A~-row, feature row, or label
/// changed. Node/subgraph deletion masks ids rather than compacting them.
inline std::pair<Graph, NodeSet> modify_graph(const Graph& g, const ForgetRequest& req) {
    auto check_node = [&](NodeId v) {
        if (v < 0 || v >= g.n) throw TargetMissing("node id out of range");
        if (g.deleted[v]) throw TargetMissing("node already deleted");
    };
    switch (req.kind) {
        case ForgetKind::Label:
        case ForgetKind::Feature: {
            if (req.nodes.empty()) throw ValidationError("empty forget target set");
            for (NodeId v : req.nodes) check_node(v);
            return {g, req.nodes};
        }
        case ForgetKind::Edge: {
            if (req.edge_pairs.empty()) throw ValidationError("empty forget target set");
            Graph out = g;
            NodeSet affected;
            for (auto [u, v] : req.edge_pairs) {
                check_node(u);
                check_node(v);
                if (u > v) std::swap(u, v);
                auto it = std::lower_bound(out.edges.begin(), out.edges.end(),
                                           std::make_pair(u, v));
                if (it == out.edges.end() || *it != std::make_pair(u, v))
                    throw TargetMissing("edge not present");
                out.edges.erase(it);
                affected.push_back(u);
                affected.push_back(v);
            }
            detail::rebuild_csr(out);
            return {std::move(out), make_node_set(std::move(affected))};
        }
        case ForgetKind::Node:
        case ForgetKind::Subgraph: {
            if (req.nodes.empty()) throw ValidationError("empty forget target set");
            for (NodeId v : req.nodes) check_node(v);
            Graph out = g;
            NodeSet affected(req.nodes);
            for (NodeId v : req.nodes) {
                out.deleted[v] = 1;
                for (const NodeId* u = g.neighbors_begin(v); u != g.neighbors_end(v); ++u)
                    affected.push_back(*u);
            }
            std::erase_if(out.edges, [&](const auto& e) {
                return out.deleted[e.first] || out.deleted[e.second];
            });
            detail::rebuild_csr(out);
            return {std::move(out), make_node_set(std::move(affected))};
        }
    }
    throw ValidationError("unreachable forget kind");
}

}  // namespace cfgraph
