#pragma once

// Forward-only time evolution on graphs: the linear node/edge recurrence,
// its nonlinear single-step layer, the message-passing baselines, weight
// initialization (including the oscillatory constraint), and trajectory
// recording with per-step diagnostics.
//
// Feature rows: node features are |N| x d_n, edge features are one row per
// *directed* edge (|2E| x d_e). The node update sums edge features over each
// node's outgoing directed edges. Weight matrices act on column vectors
// (W_ne is d_n x d_e etc.), so row-stored features multiply by transposes.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dbgnn/graph.hpp"
#include "dbgnn/matrix.hpp"
#include "dbgnn/metrics.hpp"
#include "dbgnn/rng.hpp"

namespace dbgnn {

struct NumericError : std::runtime_error {
    int step;
    explicit NumericError(const std::string& what, int step_index)
        : std::runtime_error(what + " at step " + std::to_string(step_index)), step(step_index) {}
};

struct FeatureState {
    Matrix node;  // |N| x d_n
    Matrix edge;  // |directed edges| x d_e
};

struct DBWeights {
    Matrix w_ne;      // d_n x d_e
    Matrix w_en;      // d_e x d_n
    Matrix w_beta_n;  // d_n x d_n
    Matrix w_beta_e;  // d_e x d_e
    bool oscillatory = false;
};

struct MPNNWeights {
    Matrix w_n;     // d_n x d_e
    Matrix w_e;     // d_e x d_n
    Matrix beta_n;  // d_n x d_n
};

enum class Nonlinearity { identity, relu, tanh };

inline Nonlinearity nonlinearity_from_name(const std::string& name) {
    if (name == "identity") return Nonlinearity::identity;
    if (name == "relu") return Nonlinearity::relu;
    if (name == "tanh") return Nonlinearity::tanh;
    throw std::invalid_argument("unknown nonlinearity: " + name);
}

inline std::string nonlinearity_name(Nonlinearity nl) {
    switch (nl) {
        case Nonlinearity::identity: return "identity";
        case Nonlinearity::relu: return "relu";
        case Nonlinearity::tanh: return "tanh";
    }
    throw std::logic_error("unreachable");
}

inline Matrix apply_nonlinearity(const Matrix& m, Nonlinearity nl) {
    switch (nl) {
        case Nonlinearity::identity: return m;
        case Nonlinearity::relu: return map(m, [](double v) { return v > 0.0 ? v : 0.0; });
        case Nonlinearity::tanh: return map(m, [](double v) { return std::tanh(v); });
    }
    throw std::logic_error("unreachable");
}

// Per-kind dropout rates; constructible from a single fraction when node and
// edge features share one rate.
struct DropoutRates {
    double node = 0.0;
    double edge = 0.0;
    DropoutRates() = default;
    DropoutRates(double rate) : node(rate), edge(rate) {}  // NOLINT: implicit on purpose
    DropoutRates(double node_rate, double edge_rate) : node(node_rate), edge(edge_rate) {}
};

namespace detail {

// x_i - x_j per directed edge (i, j); rows follow directed edge ids.
inline Matrix edge_differences(const Graph& g, const Matrix& x) {
    Matrix d(g.num_directed(), x.cols());
    for (int k = 0; k < g.num_directed(); ++k) {
        const auto& [i, j] = g.directed_edges[k];
        for (std::size_t c = 0; c < x.cols(); ++c) d(k, c) = x(i, c) - x(j, c);
    }
    return d;
}

// Sum of edge-feature rows over each node's outgoing directed edges.
inline Matrix scatter_to_sources(const Graph& g, const Matrix& e) {
    Matrix agg(g.num_nodes, e.cols());
    for (int k = 0; k < g.num_directed(); ++k) {
        const int src = g.directed_edges[k].first;
        for (std::size_t c = 0; c < e.cols(); ++c) agg(src, c) += e(k, c);
    }
    return agg;
}

inline Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
    Matrix m(rows, cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    return m;
}

}  // namespace detail

// One step of the linear node/edge recurrence; all right-hand sides use the
// incoming state.
inline FeatureState lindb_step(const Graph& g, const DBWeights& w, const FeatureState& s) {
    FeatureState out;
    const Matrix agg = detail::scatter_to_sources(g, s.edge);
    out.node = s.node + matmul(agg, w.w_ne, false, true) + matmul(s.node, w.w_beta_n, false, true);
    const Matrix diff = detail::edge_differences(g, s.node);
    out.edge = s.edge + matmul(diff, w.w_en, false, true) - matmul(s.edge, w.w_beta_e, false, true);
    return out;
}

// Message-passing baseline: messages are recomputed from the current node
// state each step, there is no edge-state evolution. The returned edge rows
// hold the messages for inspection.
inline FeatureState mpnn_linear_step(const Graph& g, const MPNNWeights& w, const FeatureState& s) {
    FeatureState out;
    const Matrix diff = detail::edge_differences(g, s.node);
    const Matrix msgs = matmul(diff, w.w_e, false, true);
    const Matrix agg = detail::scatter_to_sources(g, msgs);
    out.node = s.node + matmul(agg, w.w_n, false, true) + matmul(s.node, w.beta_n, false, true);
    out.edge = msgs;
    return out;
}

// Nonlinear message passing without the residual term: x <- relu(W_n sum(e) +
// beta_n x), messages optionally pass through relu as well.
inline FeatureState mpnn_sigma_step(const Graph& g, const MPNNWeights& w, const FeatureState& s,
                                    bool edge_nonlinearity) {
    FeatureState out;
    const Matrix diff = detail::edge_differences(g, s.node);
    Matrix msgs = matmul(diff, w.w_e, false, true);
    if (edge_nonlinearity) msgs = apply_nonlinearity(msgs, Nonlinearity::relu);
    const Matrix agg = detail::scatter_to_sources(g, msgs);
    out.node = apply_nonlinearity(
        matmul(agg, w.w_n, false, true) + matmul(s.node, w.beta_n, false, true),
        Nonlinearity::relu);
    out.edge = msgs;
    return out;
}

// Linear step, then dropout (train mode only, inverted scaling), then the
// elementwise nonlinearity. Evaluation mode consumes no randomness.
inline FeatureState db1s_step(const Graph& g, const DBWeights& w, const FeatureState& s,
                              DropoutRates dropout, bool train_mode, Rng& rng,
                              Nonlinearity nl = Nonlinearity::tanh) {
    if (dropout.node < 0.0 || dropout.node >= 1.0 || dropout.edge < 0.0 || dropout.edge >= 1.0)
        throw std::invalid_argument("dropout rate must be in [0, 1)");
    FeatureState out = lindb_step(g, w, s);
    if (train_mode) {
        if (dropout.node > 0.0)
            out.node = hadamard(out.node, detail::dropout_mask(out.node.rows(), out.node.cols(),
                                                               dropout.node, rng));
        if (dropout.edge > 0.0)
            out.edge = hadamard(out.edge, detail::dropout_mask(out.edge.rows(), out.edge.cols(),
                                                               dropout.edge, rng));
    }
    out.node = apply_nonlinearity(out.node, nl);
    out.edge = apply_nonlinearity(out.edge, nl);
    return out;
}

// Oscillatory mode samples W_en plus the strictly-upper triangles of the
// beta matrices and derives the rest (W_ne = -W_enᵀ, betas antisymmetric),
// which makes the linear update a pure rotation generator.
inline DBWeights init_weights(int d_n, int d_e, double spread, bool oscillatory, Rng& rng) {
    if (spread <= 0.0) throw std::invalid_argument("spread must be positive");
    DBWeights w;
    w.oscillatory = oscillatory;
    auto sample = [&](int r, int c) {
        Matrix m(r, c);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.normal(0.0, spread);
        return m;
    };
    auto sample_antisymmetric = [&](int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double v = rng.normal(0.0, spread);
                m(i, j) = v;
                m(j, i) = -v;
            }
        return m;
    };
    if (oscillatory) {
        w.w_en = sample(d_e, d_n);
        w.w_beta_n = sample_antisymmetric(d_n);
        w.w_beta_e = sample_antisymmetric(d_e);
        w.w_ne = transpose(w.w_en) * -1.0;
    } else {
        w.w_ne = sample(d_n, d_e);
        w.w_en = sample(d_e, d_n);
        w.w_beta_n = sample(d_n, d_n);
        w.w_beta_e = sample(d_e, d_e);
    }
    return w;
}

// Weight mapping used when the baselines run "with the same random weights".
inline MPNNWeights mpnn_from_db(const DBWeights& w) {
    MPNNWeights m;
    m.w_n = w.w_ne;
    m.w_e = w.w_en;
    m.beta_n = w.w_beta_n;
    return m;
}

enum class StepperKind { lindb, db1s, mpnn_linear, mpnn_sigma };

inline std::string stepper_name(StepperKind kind) {
    switch (kind) {
        case StepperKind::lindb: return "lindb";
        case StepperKind::db1s: return "db1s";
        case StepperKind::mpnn_linear: return "mpnn_linear";
        case StepperKind::mpnn_sigma: return "mpnn_sigma";
    }
    throw std::logic_error("unreachable");
}

inline StepperKind stepper_from_name(const std::string& name) {
    if (name == "lindb") return StepperKind::lindb;
    if (name == "db1s") return StepperKind::db1s;
    if (name == "mpnn_linear") return StepperKind::mpnn_linear;
    if (name == "mpnn_sigma") return StepperKind::mpnn_sigma;
    throw std::invalid_argument("unknown stepper: " + name);
}

struct Trajectory {
    std::vector<FeatureState> states;  // T + 1 entries, states[0] = s0
    Matrix activation;                 // (T + 1) x |N|, per-node feature row L2 norm
    DirichletSeries dirichlet;         // node-feature energy per step
};

struct EvolveOptions {
    DropoutRates dropout{};
    bool train_mode = false;
    Nonlinearity nonlinearity = Nonlinearity::tanh;  // db1s only
    bool edge_nonlinearity = true;                   // mpnn_sigma only
    Rng* rng = nullptr;                              // required for db1s in train mode
};

namespace detail {

template <typename StepFn>
Trajectory run_evolution(const Graph& g, const FeatureState& s0, int T, StepFn step) {
    if (T < 1) throw std::invalid_argument("evolve needs T >= 1");
    if (static_cast<int>(s0.node.rows()) != g.num_nodes ||
        static_cast<int>(s0.edge.rows()) != g.num_directed())
        throw std::invalid_argument("initial state does not match graph");
    Trajectory traj;
    traj.states.reserve(T + 1);
    traj.states.push_back(s0);
    traj.activation = Matrix(T + 1, g.num_nodes);
    for (int t = 0; t <= T; ++t) {
        if (t > 0) traj.states.push_back(step(traj.states.back()));
        const FeatureState& s = traj.states.back();
        if (!all_finite(s.node) || !all_finite(s.edge))
            throw NumericError("non-finite state", t);
        for (int v = 0; v < g.num_nodes; ++v) traj.activation(t, v) = row_norm(s.node, v);
        bool deg = false;
        const double de = dirichlet_edges(g, s.node, &deg);
        traj.dirichlet.push(de, deg);
    }
    return traj;
}

}  // namespace detail

inline Trajectory evolve(const Graph& g, StepperKind kind, const DBWeights& w,
                         const FeatureState& s0, int T, const EvolveOptions& opts = {}) {
    switch (kind) {
        case StepperKind::lindb:
            return detail::run_evolution(
                g, s0, T, [&](const FeatureState& s) { return lindb_step(g, w, s); });
        case StepperKind::db1s: {
            if (opts.train_mode && opts.rng == nullptr)
                throw std::invalid_argument("db1s in train mode needs an rng");
            Rng fallback(0);
            Rng& rng = opts.rng ? *opts.rng : fallback;
            return detail::run_evolution(g, s0, T, [&](const FeatureState& s) {
                return db1s_step(g, w, s, opts.dropout, opts.train_mode, rng, opts.nonlinearity);
            });
        }
        default:
            throw std::invalid_argument("stepper needs MPNN weights");
    }
}

inline Trajectory evolve(const Graph& g, StepperKind kind, const MPNNWeights& w,
                         const FeatureState& s0, int T, const EvolveOptions& opts = {}) {
    switch (kind) {
        case StepperKind::mpnn_linear:
            return detail::run_evolution(
                g, s0, T, [&](const FeatureState& s) { return mpnn_linear_step(g, w, s); });
        case StepperKind::mpnn_sigma:
            return detail::run_evolution(g, s0, T, [&](const FeatureState& s) {
                return mpnn_sigma_step(g, w, s, opts.edge_nonlinearity);
            });
        default:
            throw std::invalid_argument("stepper needs DB weights");
    }
}

inline std::vector<std::optional<int>> front_arrival(const Trajectory& traj,
                                                     double threshold_fraction) {
    return front_arrival_from_activation(traj.activation, threshold_fraction);
}

// All nodes of grid column 0 get standard-normal features; everything else,
// including all edge rows, starts at zero.
inline FeatureState spreading_initial_state(const Graph& g, int d_n, int d_e, Rng& rng) {
    if (g.grid_cols < 1) throw std::invalid_argument("spreading_initial_state needs a grid graph");
    FeatureState s;
    s.node = Matrix(g.num_nodes, d_n);
    s.edge = Matrix(g.num_directed(), d_e);
    for (int r = 0; r < g.grid_rows; ++r) {
        const int v = r * g.grid_cols;
        for (int c = 0; c < d_n; ++c) s.node(v, c) = rng.normal();
    }
    return s;
}

}  // namespace dbgnn
