#pragma once

// Dirichlet energy in both of its equivalent forms, regression metrics, and
// front tracking over activation records.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "dbgnn/graph.hpp"
#include "dbgnn/matrix.hpp"

namespace dbgnn {

// tr(xᵀ L x) / tr(xᵀ x). All-zero embeddings yield 0 with the degenerate
// flag set instead of NaN. Roundoff can push the quadratic form a hair below
// zero on near-constant embeddings; clamped, since the energy is >= 0.
inline double dirichlet_trace(const Graph& g, const Matrix& x, bool* degenerate = nullptr) {
    if (static_cast<int>(x.rows()) != g.num_nodes)
        throw std::invalid_argument("dirichlet_trace: row count must match node count");
    const Matrix l = laplacian(g);
    double num = 0.0, den = 0.0;
    const Matrix lx = matmul(l, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += x[i] * lx[i];
        den += x[i] * x[i];
    }
    if (degenerate) *degenerate = den == 0.0;
    if (den == 0.0) return 0.0;
    return std::max(num / den, 0.0);
}

// Sum over undirected edges of squared feature-row differences, over the
// total squared feature norm. Each unordered pair counts once; summing both
// orientations would double the numerator and break the trace identity.
inline double dirichlet_edges(const Graph& g, const Matrix& x, bool* degenerate = nullptr) {
    if (static_cast<int>(x.rows()) != g.num_nodes)
        throw std::invalid_argument("dirichlet_edges: row count must match node count");
    double num = 0.0, den = 0.0;
    for (const auto& [i, j] : g.undirected_edges)
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const double d = x(i, c) - x(j, c);
            num += d * d;
        }
    for (std::size_t i = 0; i < x.size(); ++i) den += x[i] * x[i];
    if (degenerate) *degenerate = den == 0.0;
    if (den == 0.0) return 0.0;
    return num / den;
}

struct DirichletSeries {
    std::vector<double> energy;
    std::vector<std::uint8_t> degenerate;

    void push(double e, bool deg) {
        energy.push_back(e);
        degenerate.push_back(deg ? 1 : 0);
    }
};

inline double r_squared(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw std::invalid_argument("r_squared: length mismatch");
    if (pred.size() < 2) throw std::invalid_argument("r_squared: needs at least 2 points");
    double mean = 0.0;
    for (double t : target) mean += t;
    mean /= static_cast<double>(target.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ss_res += (pred[i] - target[i]) * (pred[i] - target[i]);
        ss_tot += (target[i] - mean) * (target[i] - mean);
    }
    if (ss_tot == 0.0) throw std::invalid_argument("r_squared: target variance is zero");
    return 1.0 - ss_res / ss_tot;
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw std::invalid_argument("mae: length mismatch");
    if (pred.empty()) throw std::invalid_argument("mae: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

// First step at which each node's activation exceeds
// threshold_fraction x (global max over all steps and nodes).
// activation is steps x nodes; nodes never crossing stay disengaged.
inline std::vector<std::optional<int>> front_arrival_from_activation(const Matrix& activation,
                                                                     double threshold_fraction) {
    if (threshold_fraction <= 0.0 || threshold_fraction >= 1.0)
        throw std::invalid_argument("front_arrival: threshold_fraction must be in (0, 1)");
    const double global_max = max_abs(activation);
    const double bar = threshold_fraction * global_max;
    std::vector<std::optional<int>> arrival(activation.cols());
    if (global_max == 0.0) return arrival;
    for (std::size_t v = 0; v < activation.cols(); ++v)
        for (std::size_t t = 0; t < activation.rows(); ++t)
            if (activation(t, v) > bar) {
                arrival[v] = static_cast<int>(t);
                break;
            }
    return arrival;
}

// Least-squares slope of log(arrival step) vs log(node index), over nodes
// with index >= 1 and arrival step >= 1. Needs at least 4 such points to be
// meaningful; otherwise empty.
inline std::optional<double> front_loglog_slope(const std::vector<std::optional<int>>& arrival) {
    std::vector<double> lx, ly;
    for (std::size_t v = 1; v < arrival.size(); ++v)
        if (arrival[v] && *arrival[v] >= 1) {
            lx.push_back(std::log(static_cast<double>(v)));
            ly.push_back(std::log(static_cast<double>(*arrival[v])));
        }
    if (lx.size() < 4) return std::nullopt;
    const double n = static_cast<double>(lx.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sx += lx[k];
        sy += ly[k];
        sxx += lx[k] * lx[k];
        sxy += lx[k] * ly[k];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) return std::nullopt;
    return (n * sxy - sx * sy) / denom;
}

}  // namespace dbgnn
