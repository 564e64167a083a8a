#pragma once

// Shared test utilities: independent dense oracles kept deliberately
// separate from the library implementation paths they check.

#include <bit>
#include <cmath>
#include <vector>

#include "cfgraph/dataset.hpp"
#include "cfgraph/graph.hpp"
#include "cfgraph/prng.hpp"

namespace testutil {

using cfgraph::Graph;
using cfgraph::Matrix;
using cfgraph::NodeId;
using cfgraph::NodeSet;

/// Dense normalized propagation operator built entry-by-entry.
inline Matrix dense_propagation_operator(const Graph& g) {
    Matrix A = Matrix::Zero(g.n, g.n);
    for (const auto& [u, v] : g.edges) {
        A(u, v) = 1.0;
        A(v, u) = 1.0;
    }
    for (NodeId v = 0; v < g.n; ++v) A(v, v) = 1.0;  // self loops
    Matrix T(g.n, g.n);
    for (NodeId i = 0; i < g.n; ++i)
        for (NodeId j = 0; j < g.n; ++j)
            T(i, j) = A(i, j) / std::sqrt(static_cast<double>(g.degrees_bar[i]) *
                                          static_cast<double>(g.degrees_bar[j]));
    return T;
}

/// A~^k X via explicit dense matrix powers.
inline Matrix dense_propagate_power(const Graph& g, const Matrix& X, int k) {
    Matrix T = dense_propagation_operator(g);
    Matrix out = X;
    for (int i = 0; i < k; ++i) out = T * out;
    return out;
}

/// Brute-force all-pairs BFS distances (-1 = unreachable).
inline std::vector<std::vector<int>> all_pairs_bfs(const Graph& g) {
    std::vector<std::vector<int>> dist(g.n, std::vector<int>(g.n, -1));
    for (NodeId s = 0; s < g.n; ++s) {
        std::vector<NodeId> frontier{s};
        dist[s][s] = 0;
        int d = 0;
        while (!frontier.empty()) {
            std::vector<NodeId> next;
            for (NodeId v : frontier)
                for (const NodeId* u = g.neighbors_begin(v); u != g.neighbors_end(v); ++u)
                    if (dist[s][*u] < 0) {
                        dist[s][*u] = d + 1;
                        next.push_back(*u);
                    }
            frontier = std::move(next);
            ++d;
        }
    }
    return dist;
}

/// Erdos-Renyi-style random graph with ~avg_degree.
inline Graph random_graph(NodeId n, double avg_degree, std::uint64_t seed) {
    cfgraph::SplitMix64 rng(seed);
    const double p = avg_degree / static_cast<double>(n - 1);
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId u = 0; u < n; ++u)
        for (NodeId v = u + 1; v < n; ++v)
            if (rng.next_unit() < p) edges.emplace_back(u, v);
    return cfgraph::make_graph(n, edges);
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    cfgraph::SplitMix64 rng(seed);
    Matrix M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = rng.next_gaussian();
    return M;
}

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (std::bit_cast<std::uint64_t>(a(i, j)) != std::bit_cast<std::uint64_t>(b(i, j)))
                return false;
    return true;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testutil
