#pragma once

// Graph topology with static mesh positions, node attributes, and
// precomputed geometric edge features e_ij = [pos_j - pos_i, ||pos_j - pos_i||].
// Edges are directed and kept sorted by (dst, src) so scatter order is
// deterministic. Two slot layouts are precomputed:
//   in_dir:  slots grouped by destination (aggregate over j in N_i into i)
//   out_dir: slots grouped by source      (aggregate f(dst) into src)

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <vector>

#include "igns/autodiff.hpp"
#include "igns/matrix.hpp"

namespace igns {

// Node-type one-hot channels in node_static.
inline constexpr int kNodeTypeInterior = 0;
inline constexpr int kNodeTypeBoundary = 1;
inline constexpr int kNodeTypeSource = 2;
inline constexpr int kNodeTypeChannels = 3;

enum class GridConnectivity { four, eight };

struct EdgeDirection {
    std::vector<int> gather;  // row to read per slot
    ad::ScatterPlan plan;     // run layout over output rows
};

struct Graph {
    int n_nodes = 0;
    int spatial_dim = 0;
    int static_dim = 0;
    std::vector<int> edge_src;           // sorted by (dst, src)
    std::vector<int> edge_dst;
    std::vector<double> positions;       // n x spatial_dim
    std::vector<double> node_static;     // n x static_dim
    std::vector<double> edge_features;   // m x (spatial_dim + 1)
    EdgeDirection in_dir;
    EdgeDirection out_dir;

    int n_edges() const { return static_cast<int>(edge_src.size()); }
    int edge_dim() const { return spatial_dim + 1; }

    double pos(int node, int d) const { return positions[static_cast<size_t>(node) * spatial_dim + d]; }
    double attr(int node, int c) const { return node_static[static_cast<size_t>(node) * static_dim + c]; }
    double& attr(int node, int c) { return node_static[static_cast<size_t>(node) * static_dim + c]; }
    int node_type(int node) const {
        for (int c = 0; c < kNodeTypeChannels; ++c)
            if (attr(node, c) != 0.0) return c;
        return kNodeTypeInterior;
    }
};

inline std::vector<double> compute_edge_features(int spatial_dim, const std::vector<double>& positions,
                                                 const std::vector<int>& src, const std::vector<int>& dst) {
    const int ed = spatial_dim + 1;
    std::vector<double> feats(src.size() * static_cast<size_t>(ed));
    for (size_t e = 0; e < src.size(); ++e) {
        double norm2 = 0;
        for (int d = 0; d < spatial_dim; ++d) {
            const double s = positions[static_cast<size_t>(dst[e]) * spatial_dim + d] -
                             positions[static_cast<size_t>(src[e]) * spatial_dim + d];
            // displacement from i (dst, the receiving node) to j (src): pos_j - pos_i
            feats[e * ed + d] = -s;
            norm2 += s * s;
        }
        feats[e * ed + spatial_dim] = std::sqrt(norm2);
    }
    return feats;
}

namespace detail {

inline EdgeDirection make_direction(int n_nodes, const std::vector<int>& group_by,
                                    const std::vector<int>& companion, std::vector<int>& slot_of_edge) {
    const int m = static_cast<int>(group_by.size());
    std::vector<int> order(static_cast<size_t>(m));
    for (int e = 0; e < m; ++e) order[static_cast<size_t>(e)] = e;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (group_by[a] != group_by[b]) return group_by[a] < group_by[b];
        return companion[a] < companion[b];
    });
    EdgeDirection dir;
    dir.gather.resize(static_cast<size_t>(m));
    dir.plan.row_of_slot.resize(static_cast<size_t>(m));
    dir.plan.offsets.assign(static_cast<size_t>(n_nodes) + 1, 0);
    slot_of_edge.resize(static_cast<size_t>(m));
    for (int s = 0; s < m; ++s) {
        const int e = order[static_cast<size_t>(s)];
        dir.gather[static_cast<size_t>(s)] = companion[e];
        dir.plan.row_of_slot[static_cast<size_t>(s)] = group_by[e];
        slot_of_edge[static_cast<size_t>(e)] = s;
        dir.plan.offsets[static_cast<size_t>(group_by[e]) + 1]++;
    }
    for (int i = 0; i < n_nodes; ++i) dir.plan.offsets[static_cast<size_t>(i) + 1] += dir.plan.offsets[static_cast<size_t>(i)];
    return dir;
}

}  // namespace detail

// Builds a graph from an arbitrary directed edge list. Edges are sorted by
// (dst, src); duplicates are rejected.
inline Graph make_graph(int n_nodes, std::vector<int> src, std::vector<int> dst,
                        std::vector<double> positions, int spatial_dim,
                        std::vector<double> node_static = {}, int static_dim = 0) {
    if (n_nodes <= 0) throw std::invalid_argument("graph: need at least one node");
    if (src.size() != dst.size()) throw std::invalid_argument("graph: src/dst length mismatch");
    if (positions.size() != static_cast<size_t>(n_nodes) * spatial_dim)
        throw std::invalid_argument("graph: positions size mismatch");
    for (size_t e = 0; e < src.size(); ++e) {
        if (src[e] < 0 || src[e] >= n_nodes || dst[e] < 0 || dst[e] >= n_nodes)
            throw std::invalid_argument("graph: edge index out of range");
        if (src[e] == dst[e]) throw std::invalid_argument("graph: self-loop");
    }

    const int m = static_cast<int>(src.size());
    std::vector<int> order(static_cast<size_t>(m));
    for (int e = 0; e < m; ++e) order[static_cast<size_t>(e)] = e;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dst[a] != dst[b]) return dst[a] < dst[b];
        return src[a] < src[b];
    });

    Graph g;
    g.n_nodes = n_nodes;
    g.spatial_dim = spatial_dim;
    g.positions = std::move(positions);
    g.edge_src.resize(static_cast<size_t>(m));
    g.edge_dst.resize(static_cast<size_t>(m));
    for (int s = 0; s < m; ++s) {
        g.edge_src[static_cast<size_t>(s)] = src[order[static_cast<size_t>(s)]];
        g.edge_dst[static_cast<size_t>(s)] = dst[order[static_cast<size_t>(s)]];
        if (s > 0 && g.edge_dst[static_cast<size_t>(s)] == g.edge_dst[static_cast<size_t>(s) - 1] &&
            g.edge_src[static_cast<size_t>(s)] == g.edge_src[static_cast<size_t>(s) - 1])
            throw std::invalid_argument("graph: duplicate edge");
    }

    if (static_dim > 0) {
        if (node_static.size() != static_cast<size_t>(n_nodes) * static_dim)
            throw std::invalid_argument("graph: node_static size mismatch");
        g.node_static = std::move(node_static);
        g.static_dim = static_dim;
    } else {
        g.static_dim = kNodeTypeChannels;
        g.node_static.assign(static_cast<size_t>(n_nodes) * kNodeTypeChannels, 0.0);
        for (int i = 0; i < n_nodes; ++i) g.attr(i, kNodeTypeInterior) = 1.0;
    }

    g.edge_features = compute_edge_features(spatial_dim, g.positions, g.edge_src, g.edge_dst);

    std::vector<int> scratch;
    g.in_dir = detail::make_direction(n_nodes, g.edge_dst, g.edge_src, scratch);
    g.out_dir = detail::make_direction(n_nodes, g.edge_src, g.edge_dst, scratch);
    return g;
}

// rows x cols lattice on unit spacing, bidirectional edges, boundary nodes
// typed as boundary. Positions are (x, y) = (col, row).
inline Graph build_grid_graph(int rows, int cols, GridConnectivity conn = GridConnectivity::four) {
    if (rows < 2 || cols < 2) throw std::invalid_argument("grid: rows and cols must be >= 2");
    const int n = rows * cols;
    auto id = [cols](int r, int c) { return r * cols + c; };
    std::vector<int> src, dst;
    auto connect = [&](int a, int b) {
        src.push_back(a);
        dst.push_back(b);
        src.push_back(b);
        dst.push_back(a);
    };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) connect(id(r, c), id(r, c + 1));
            if (r + 1 < rows) connect(id(r, c), id(r + 1, c));
            if (conn == GridConnectivity::eight) {
                if (r + 1 < rows && c + 1 < cols) connect(id(r, c), id(r + 1, c + 1));
                if (r + 1 < rows && c - 1 >= 0) connect(id(r, c), id(r + 1, c - 1));
            }
        }
    std::vector<double> pos(static_cast<size_t>(n) * 2);
    std::vector<double> attrs(static_cast<size_t>(n) * kNodeTypeChannels, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int i = id(r, c);
            pos[static_cast<size_t>(i) * 2 + 0] = c;
            pos[static_cast<size_t>(i) * 2 + 1] = r;
            const bool boundary = r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
            attrs[static_cast<size_t>(i) * kNodeTypeChannels +
                  (boundary ? kNodeTypeBoundary : kNodeTypeInterior)] = 1.0;
        }
    return make_graph(n, std::move(src), std::move(dst), std::move(pos), 2, std::move(attrs),
                      kNodeTypeChannels);
}

// 0 - 1 - ... - (n-1) on a line; used by receptive-field and gradient tests.
inline Graph build_path_graph(int n) {
    if (n < 2) throw std::invalid_argument("path: need at least two nodes");
    std::vector<int> src, dst;
    for (int i = 0; i + 1 < n; ++i) {
        src.push_back(i);
        dst.push_back(i + 1);
        src.push_back(i + 1);
        dst.push_back(i);
    }
    std::vector<double> pos(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) pos[static_cast<size_t>(i)] = i;
    std::vector<double> attrs(static_cast<size_t>(n) * kNodeTypeChannels, 0.0);
    for (int i = 0; i < n; ++i)
        attrs[static_cast<size_t>(i) * kNodeTypeChannels +
              ((i == 0 || i == n - 1) ? kNodeTypeBoundary : kNodeTypeInterior)] = 1.0;
    return make_graph(n, std::move(src), std::move(dst), std::move(pos), 1, std::move(attrs),
                      kNodeTypeChannels);
}

// BFS hop distances from src (-1 when unreachable).
inline std::vector<int> graph_distances(const Graph& g, int src) {
    std::vector<std::vector<int>> adj(static_cast<size_t>(g.n_nodes));
    for (int e = 0; e < g.n_edges(); ++e) adj[static_cast<size_t>(g.edge_src[e])].push_back(g.edge_dst[e]);
    std::vector<int> dist(static_cast<size_t>(g.n_nodes), -1);
    std::queue<int> q;
    dist[static_cast<size_t>(src)] = 0;
    q.push(src);
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int v : adj[static_cast<size_t>(u)])
            if (dist[static_cast<size_t>(v)] < 0) {
                dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
                q.push(v);
            }
    }
    return dist;
}

template <typename Real>
Matrix<Real> edge_feature_matrix(const Graph& g) {
    // slot order must match in_dir (grouped by destination)
    Matrix<Real> m(g.n_edges(), g.edge_dim());
    for (int s = 0; s < g.n_edges(); ++s) {
        // edges are stored sorted by (dst, src) which is exactly in_dir order
        for (int c = 0; c < g.edge_dim(); ++c)
            m(s, c) = static_cast<Real>(g.edge_features[static_cast<size_t>(s) * g.edge_dim() + c]);
    }
    return m;
}

template <typename Real>
Matrix<Real> static_attr_matrix(const Graph& g) {
    Matrix<Real> m(g.n_nodes, g.static_dim);
    for (int i = 0; i < g.n_nodes; ++i)
        for (int c = 0; c < g.static_dim; ++c) m(i, c) = static_cast<Real>(g.attr(i, c));
    return m;
}

template <typename Real>
Matrix<Real> position_matrix(const Graph& g) {
    Matrix<Real> m(g.n_nodes, g.spatial_dim);
    for (int i = 0; i < g.n_nodes; ++i)
        for (int d = 0; d < g.spatial_dim; ++d) m(i, d) = static_cast<Real>(g.pos(i, d));
    return m;
}

}  // namespace igns
