#pragma once

// Undirected graphs with an explicit doubled (directed) edge list.
//
// Conventions, relied on throughout:
//  - undirected_edges holds canonical pairs (i, j) with i < j, sorted and
//    unique; edge id = position in this list.
//  - directed_edges holds both orientations: ids 2e and 2e+1 are (i, j) and
//    (j, i) of undirected edge e, so reversal is id ^ 1.
//  - neighbor_index[v] lists the directed edge ids whose source is v.
//  - The incidence matrix has one column per *undirected* edge (+1 at the
//    smaller endpoint, -1 at the larger), which is what makes B·Bᵀ the
//    standard Laplacian.

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dbgnn/matrix.hpp"
#include "dbgnn/rng.hpp"

namespace dbgnn {

struct Graph {
    int num_nodes = 0;
    std::vector<std::pair<int, int>> undirected_edges;
    std::vector<std::pair<int, int>> directed_edges;
    std::vector<std::vector<int>> neighbor_index;

    // set by make_grid (and make_ladder); 0 when the graph is not a grid
    int grid_rows = 0;
    int grid_cols = 0;

    int num_undirected() const { return static_cast<int>(undirected_edges.size()); }
    int num_directed() const { return static_cast<int>(directed_edges.size()); }
};

// Builds a Graph from an edge list; pairs are canonicalized, validated and
// sorted, so the same edge set always yields the same Graph.
inline Graph make_graph(int num_nodes, std::vector<std::pair<int, int>> edges) {
    if (num_nodes < 1) throw std::invalid_argument("graph needs at least one node");
    for (auto& [i, j] : edges) {
        if (i == j) throw std::invalid_argument("self-loop rejected");
        if (i < 0 || j < 0 || i >= num_nodes || j >= num_nodes)
            throw std::invalid_argument("edge endpoint out of range");
        if (i > j) std::swap(i, j);
    }
    std::sort(edges.begin(), edges.end());
    if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
        throw std::invalid_argument("duplicate edge rejected");

    Graph g;
    g.num_nodes = num_nodes;
    g.undirected_edges = std::move(edges);
    g.directed_edges.reserve(2 * g.undirected_edges.size());
    g.neighbor_index.assign(num_nodes, {});
    for (const auto& [i, j] : g.undirected_edges) {
        g.neighbor_index[i].push_back(g.num_directed());
        g.directed_edges.emplace_back(i, j);
        g.neighbor_index[j].push_back(g.num_directed());
        g.directed_edges.emplace_back(j, i);
    }
    return g;
}

// Rectangular lattice, 4-neighborhood, row-major node ids (node = r*cols + c).
inline Graph make_grid(int rows, int cols) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("grid needs positive dimensions");
    std::vector<std::pair<int, int>> edges;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int v = r * cols + c;
            if (c + 1 < cols) edges.emplace_back(v, v + 1);
            if (r + 1 < rows) edges.emplace_back(v, v + cols);
        }
    Graph g = make_graph(rows * cols, std::move(edges));
    g.grid_rows = rows;
    g.grid_cols = cols;
    return g;
}

// A path is the 1 x n grid; it keeps the grid metadata so column-0 seeding
// works (column 0 is node 0).
inline Graph make_path(int n) {
    if (n < 2) throw std::invalid_argument("path needs at least 2 nodes");
    return make_grid(1, n);
}

inline Graph make_ladder(int rungs) {
    if (rungs < 2) throw std::invalid_argument("ladder needs at least 2 rungs");
    return make_grid(2, rungs);
}

// Random spanning tree by random attachment, then extra distinct edges.
// Connected by construction; degrees are irregular.
inline Graph make_random_connected(int n, int extra_edges, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("random graph needs at least 2 nodes");
    const int max_extra = n * (n - 1) / 2 - (n - 1);
    if (extra_edges < 0 || extra_edges > max_extra)
        throw std::invalid_argument("extra edge count out of range");
    Rng rng(seed);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.integer(static_cast<std::uint64_t>(i) + 1)]);

    std::set<std::pair<int, int>> edges;
    for (int k = 1; k < n; ++k) {
        const int i = perm[k];
        const int j = perm[rng.integer(k)];
        edges.insert({std::min(i, j), std::max(i, j)});
    }
    while (static_cast<int>(edges.size()) < n - 1 + extra_edges) {
        const int i = static_cast<int>(rng.integer(n));
        const int j = static_cast<int>(rng.integer(n));
        if (i != j) edges.insert({std::min(i, j), std::max(i, j)});
    }
    return make_graph(n, {edges.begin(), edges.end()});
}

namespace detail {
inline bool connected(int n, const std::set<std::pair<int, int>>& edges) {
    std::vector<std::vector<int>> adj(n);
    for (const auto& [i, j] : edges) {
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                ++count;
                stack.push_back(v);
            }
    }
    return count == n;
}
}  // namespace detail

// Random connected d-regular graph via the pairing model: shuffle node stubs,
// reject pairings with self-loops, duplicates, or a disconnected result.
inline Graph make_random_regular(int n, int degree, std::uint64_t seed) {
    if (n < 2 || degree < 1 || degree >= n || (n * degree) % 2 != 0)
        throw std::invalid_argument("no d-regular graph with these parameters");
    Rng rng(seed);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<int> stubs;
        stubs.reserve(static_cast<std::size_t>(n) * degree);
        for (int v = 0; v < n; ++v)
            for (int k = 0; k < degree; ++k) stubs.push_back(v);
        for (std::size_t i = stubs.size() - 1; i > 0; --i)
            std::swap(stubs[i], stubs[rng.integer(i + 1)]);

        std::set<std::pair<int, int>> edges;
        bool ok = true;
        for (std::size_t k = 0; k + 1 < stubs.size(); k += 2) {
            const int i = stubs[k], j = stubs[k + 1];
            if (i == j || !edges.insert({std::min(i, j), std::max(i, j)}).second) {
                ok = false;
                break;
            }
        }
        if (ok && detail::connected(n, edges)) return make_graph(n, {edges.begin(), edges.end()});
    }
    throw std::runtime_error("pairing model failed to produce a regular graph");
}

// Hop distances from source; -1 for unreachable nodes.
inline std::vector<int> bfs_distances(const Graph& g, int source) {
    if (source < 0 || source >= g.num_nodes)
        throw std::invalid_argument("bfs source out of range");
    std::vector<int> dist(g.num_nodes, -1);
    dist[source] = 0;
    std::vector<int> frontier{source};
    while (!frontier.empty()) {
        std::vector<int> next;
        for (int u : frontier)
            for (int k : g.neighbor_index[u]) {
                const int v = g.directed_edges[k].second;
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    next.push_back(v);
                }
            }
        frontier = std::move(next);
    }
    return dist;
}

struct IncidenceMatrix {
    int rows = 0;  // nodes
    int cols = 0;  // undirected edges
    // column e has +1 at endpoint[e].first (smaller id), -1 at .second
    std::vector<std::pair<int, int>> endpoints;

    Matrix dense() const {
        Matrix b(rows, cols);
        for (int e = 0; e < cols; ++e) {
            b(endpoints[e].first, e) = 1.0;
            b(endpoints[e].second, e) = -1.0;
        }
        return b;
    }
};

inline IncidenceMatrix incidence(const Graph& g) {
    IncidenceMatrix b;
    b.rows = g.num_nodes;
    b.cols = g.num_undirected();
    b.endpoints = g.undirected_edges;
    return b;
}

// L = D - A; equals B·Bᵀ (tested, not assumed).
inline Matrix laplacian(const Graph& g) {
    Matrix l(g.num_nodes, g.num_nodes);
    for (const auto& [i, j] : g.undirected_edges) {
        l(i, i) += 1.0;
        l(j, j) += 1.0;
        l(i, j) -= 1.0;
        l(j, i) -= 1.0;
    }
    return l;
}

// One-down Laplacian Bᵀ·B on the undirected edge space.
inline Matrix one_down_laplacian(const Graph& g) {
    const Matrix b = incidence(g).dense();
    return matmul(b, b, /*trans_a=*/true, /*trans_b=*/false);
}

// Text format: first line "nodes <N>", then one "edge <i> <j>" line per
// undirected edge. Duplicates and self-loops are rejected by make_graph.
inline Graph parse_graph(std::istream& in) {
    std::string keyword;
    int n = 0;
    if (!(in >> keyword >> n) || keyword != "nodes")
        throw std::invalid_argument("graph text must start with 'nodes <N>'");
    std::vector<std::pair<int, int>> edges;
    int i = 0, j = 0;
    while (in >> keyword) {
        if (keyword != "edge" || !(in >> i >> j))
            throw std::invalid_argument("expected 'edge <i> <j>' line");
        edges.emplace_back(i, j);
    }
    return make_graph(n, std::move(edges));
}

inline Graph parse_graph(const std::string& text) {
    std::istringstream in(text);
    return parse_graph(in);
}

inline void format_graph(const Graph& g, std::ostream& out) {
    out << "nodes " << g.num_nodes << "\n";
    for (const auto& [i, j] : g.undirected_edges) out << "edge " << i << " " << j << "\n";
}

}  // namespace dbgnn
