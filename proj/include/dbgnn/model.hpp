#pragma once

// The trainable stack: linear encoders into the hidden node/edge spaces, K
// blocks of T shared-weight steps with additive input skips after each block,
// and an MLP decoder (one ReLU hidden layer of width d_n_hidden), optionally
// followed by mean pooling and a head MLP.
//
// The forward pass is recorded on a Tape even in evaluation mode, so training
// and inference share one wiring by construction. dbts_forward below is the
// plain-matrix block loop, kept tape-free for timing and for callers that
// only need the dynamics.
//
// Two block kinds are supported: the node/edge recurrence (db1s steps) and a
// message-passing baseline (mpnn_sigma steps). The baseline reuses the node
// pipeline unchanged; it has no persistent edge state, so the edge encoder
// and edge skips are absent from its parameter set.

#include <stdexcept>
#include <string>
#include <vector>

#include "dbgnn/autodiff.hpp"
#include "dbgnn/dynamics.hpp"
#include "dbgnn/graph.hpp"
#include "dbgnn/matrix.hpp"
#include "dbgnn/rng.hpp"

namespace dbgnn {

struct DBGNNConfig {
    StepperKind stepper = StepperKind::db1s;
    int k_blocks = 2;
    int t_steps = 16;
    int node_in = 1;
    int edge_in = 1;
    int node_hidden = 32;
    int edge_hidden = 32;
    int out_dim = 1;
    DropoutRates dropout{};
    Nonlinearity nonlinearity = Nonlinearity::tanh;
    bool edge_nonlinearity = true;  // mpnn_sigma blocks only
    bool oscillatory = false;
    double init_spread = 0.1;
    bool mean_pool = false;
    bool use_head = false;

    bool db_blocks() const { return stepper == StepperKind::db1s; }

    void validate() const {
        if (stepper != StepperKind::db1s && stepper != StepperKind::mpnn_sigma)
            throw std::invalid_argument("model stepper must be db1s or mpnn_sigma");
        if (k_blocks < 1 || t_steps < 1) throw std::invalid_argument("need K >= 1 and T >= 1");
        if (node_in < 1 || edge_in < 1 || node_hidden < 1 || edge_hidden < 1 || out_dim < 1)
            throw std::invalid_argument("feature dimensions must be positive");
        if (dropout.node < 0.0 || dropout.node >= 1.0 || dropout.edge < 0.0 ||
            dropout.edge >= 1.0)
            throw std::invalid_argument("dropout rate must be in [0, 1)");
        if (init_spread <= 0.0) throw std::invalid_argument("init_spread must be positive");
        if (use_head && !mean_pool) throw std::invalid_argument("head requires mean pooling");
    }
};

// All weight matrices act on column vectors (a d_in -> d_out map is stored
// d_out x d_in); row-stored features right-multiply by the transpose.
struct DBGNNModel {
    DBGNNConfig config;
    Matrix node_enc;  // d_n_hidden x d_n_in
    Matrix edge_enc;  // d_e_hidden x d_e_in
    std::vector<DBWeights> db_layers;
    std::vector<MPNNWeights> mpnn_layers;
    std::vector<Matrix> skip_node;  // per block, d_n_hidden x d_n_hidden
    std::vector<Matrix> skip_edge;  // per block, d_e_hidden x d_e_hidden
    Matrix dec_w1;   // d_n_hidden x d_n_hidden
    Matrix dec_b1;   // 1 x d_n_hidden
    Matrix dec_w2;   // d_out x d_n_hidden
    Matrix dec_b2;   // 1 x d_out
    Matrix head_w1;  // d_n_hidden x d_out (when use_head)
    Matrix head_b1;  // 1 x d_n_hidden
    Matrix head_w2;  // d_out x d_n_hidden
    Matrix head_b2;  // 1 x d_out
};

// Visits every trainable matrix in a fixed order (optimizer state, gradient
// checks, and checkpoints all index parameters by this order).
template <typename ModelT, typename F>
void for_each_param(ModelT& model, F&& f) {
    const DBGNNConfig& c = model.config;
    f(std::string("node_encoder"), model.node_enc);
    if (c.db_blocks()) f(std::string("edge_encoder"), model.edge_enc);
    for (int k = 0; k < c.k_blocks; ++k) {
        const std::string p = "layer" + std::to_string(k) + ".";
        if (c.db_blocks()) {
            f(p + "w_ne", model.db_layers[k].w_ne);
            f(p + "w_en", model.db_layers[k].w_en);
            f(p + "w_beta_n", model.db_layers[k].w_beta_n);
            f(p + "w_beta_e", model.db_layers[k].w_beta_e);
            f(p + "skip_node", model.skip_node[k]);
            f(p + "skip_edge", model.skip_edge[k]);
        } else {
            f(p + "w_n", model.mpnn_layers[k].w_n);
            f(p + "w_e", model.mpnn_layers[k].w_e);
            f(p + "beta_n", model.mpnn_layers[k].beta_n);
            f(p + "skip_node", model.skip_node[k]);
        }
    }
    f(std::string("decoder.w1"), model.dec_w1);
    f(std::string("decoder.b1"), model.dec_b1);
    f(std::string("decoder.w2"), model.dec_w2);
    f(std::string("decoder.b2"), model.dec_b2);
    if (c.use_head) {
        f(std::string("head.w1"), model.head_w1);
        f(std::string("head.b1"), model.head_b1);
        f(std::string("head.w2"), model.head_w2);
        f(std::string("head.b2"), model.head_b2);
    }
}

inline std::size_t num_params(const DBGNNModel& model) {
    std::size_t n = 0;
    for_each_param(model, [&](const std::string&, const Matrix& m) { n += m.size(); });
    return n;
}

// Sampling order: node encoder, edge encoder, then per block the dynamics
// weights (init_weights order) followed by that block's skip maps, then the
// decoder weights, then the head. Matrices fill row-major; biases start at
// zero. Everything draws at the same spread.
inline DBGNNModel init_model(const DBGNNConfig& config, Rng& rng) {
    config.validate();
    const double s = config.init_spread;
    auto sample = [&](int r, int c) {
        Matrix m(r, c);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.normal(0.0, s);
        return m;
    };
    DBGNNModel model;
    model.config = config;
    model.node_enc = sample(config.node_hidden, config.node_in);
    if (config.db_blocks()) model.edge_enc = sample(config.edge_hidden, config.edge_in);
    for (int k = 0; k < config.k_blocks; ++k) {
        if (config.db_blocks()) {
            model.db_layers.push_back(init_weights(config.node_hidden, config.edge_hidden, s,
                                                   config.oscillatory, rng));
            model.skip_node.push_back(sample(config.node_hidden, config.node_hidden));
            model.skip_edge.push_back(sample(config.edge_hidden, config.edge_hidden));
        } else {
            MPNNWeights w;
            w.w_n = sample(config.node_hidden, config.edge_hidden);
            w.w_e = sample(config.edge_hidden, config.node_hidden);
            w.beta_n = sample(config.node_hidden, config.node_hidden);
            model.mpnn_layers.push_back(std::move(w));
            model.skip_node.push_back(sample(config.node_hidden, config.node_hidden));
        }
    }
    model.dec_w1 = sample(config.node_hidden, config.node_hidden);
    model.dec_b1 = Matrix(1, config.node_hidden);
    model.dec_w2 = sample(config.out_dim, config.node_hidden);
    model.dec_b2 = Matrix(1, config.out_dim);
    if (config.use_head) {
        model.head_w1 = sample(config.node_hidden, config.out_dim);
        model.head_b1 = Matrix(1, config.node_hidden);
        model.head_w2 = sample(config.out_dim, config.node_hidden);
        model.head_b2 = Matrix(1, config.out_dim);
    }
    return model;
}

// One block: T db1s steps with a single shared weight set.
inline FeatureState dbts_forward(const Graph& g, const DBWeights& w, int T, DropoutRates dropout,
                                 const FeatureState& s, bool train_mode, Rng& rng,
                                 Nonlinearity nl = Nonlinearity::tanh) {
    if (T < 1) throw std::invalid_argument("dbts_forward needs T >= 1");
    FeatureState state = s;
    for (int t = 0; t < T; ++t) state = db1s_step(g, w, state, dropout, train_mode, rng, nl);
    return state;
}

// A recorded forward pass. params follows for_each_param order; output is the
// model output (per node, or 1 x d_out when pooling).
struct TapedForward {
    Tape tape;
    std::vector<Tape::Id> params;
    std::vector<std::string> param_names;
    Tape::Id node_in = -1;
    Tape::Id edge_in = -1;
    Tape::Id output = -1;
};

namespace detail {

inline Tape::Id apply_nl(Tape& t, Tape::Id id, Nonlinearity nl) {
    switch (nl) {
        case Nonlinearity::identity: return id;
        case Nonlinearity::relu: return t.relu(id);
        case Nonlinearity::tanh: return t.tanh_op(id);
    }
    throw std::logic_error("unreachable");
}

}  // namespace detail

inline TapedForward taped_forward(const DBGNNModel& model, const Graph& g, const Matrix& node_in,
                                  const Matrix& edge_in, bool train_mode, Rng& rng) {
    const DBGNNConfig& c = model.config;
    c.validate();
    if (static_cast<int>(node_in.rows()) != g.num_nodes ||
        static_cast<int>(node_in.cols()) != c.node_in)
        throw std::invalid_argument("node input shape does not match model");
    if (c.db_blocks() && (static_cast<int>(edge_in.rows()) != g.num_directed() ||
                          static_cast<int>(edge_in.cols()) != c.edge_in))
        throw std::invalid_argument("edge input shape does not match model");

    TapedForward tf;
    Tape& t = tf.tape;
    std::vector<Tape::Id> ids;
    for_each_param(model, [&](const std::string& name, const Matrix& m) {
        ids.push_back(t.input(m, true));
        tf.param_names.push_back(name);
    });
    tf.params = ids;
    std::size_t next = 0;
    auto take = [&]() { return ids.at(next++); };

    const Tape::Id node_enc = take();
    const Tape::Id edge_enc = c.db_blocks() ? take() : -1;
    tf.node_in = t.input(node_in, false);
    Tape::Id x = t.matmul_op(tf.node_in, node_enc, false, true);
    const Tape::Id x0 = x;
    Tape::Id e = -1, e0 = -1;
    if (c.db_blocks()) {
        tf.edge_in = t.input(edge_in, false);
        e = t.matmul_op(tf.edge_in, edge_enc, false, true);
        e0 = e;
    }

    for (int k = 0; k < c.k_blocks; ++k) {
        if (c.db_blocks()) {
            const Tape::Id w_ne = take(), w_en = take(), w_beta_n = take(), w_beta_e = take();
            const Tape::Id skip_n = take(), skip_e = take();
            for (int step = 0; step < c.t_steps; ++step) {
                const Tape::Id agg = t.node_scatter_sum(e, g);
                Tape::Id xn = t.add(t.add(x, t.matmul_op(agg, w_ne, false, true)),
                                    t.matmul_op(x, w_beta_n, false, true));
                const Tape::Id diff = t.edge_gather_diff(x, g);
                Tape::Id en = t.sub(t.add(e, t.matmul_op(diff, w_en, false, true)),
                                    t.matmul_op(e, w_beta_e, false, true));
                xn = t.dropout(xn, c.dropout.node, train_mode, rng);
                en = t.dropout(en, c.dropout.edge, train_mode, rng);
                x = detail::apply_nl(t, xn, c.nonlinearity);
                e = detail::apply_nl(t, en, c.nonlinearity);
            }
            x = t.add(x, t.matmul_op(x0, skip_n, false, true));
            e = t.add(e, t.matmul_op(e0, skip_e, false, true));
            if (!all_finite(t.value(x)) || !all_finite(t.value(e)))
                throw NumericError("non-finite block state", k);
        } else {
            const Tape::Id w_n = take(), w_e = take(), beta_n = take(), skip_n = take();
            for (int step = 0; step < c.t_steps; ++step) {
                const Tape::Id diff = t.edge_gather_diff(x, g);
                Tape::Id msgs = t.matmul_op(diff, w_e, false, true);
                if (c.edge_nonlinearity) msgs = t.relu(msgs);
                const Tape::Id agg = t.node_scatter_sum(msgs, g);
                x = t.relu(t.add(t.matmul_op(agg, w_n, false, true),
                                 t.matmul_op(x, beta_n, false, true)));
            }
            x = t.add(x, t.matmul_op(x0, skip_n, false, true));
            if (!all_finite(t.value(x))) throw NumericError("non-finite block state", k);
        }
    }

    const Tape::Id dec_w1 = take(), dec_b1 = take(), dec_w2 = take(), dec_b2 = take();
    Tape::Id h = t.relu(t.add_row_broadcast(t.matmul_op(x, dec_w1, false, true), dec_b1));
    Tape::Id y = t.add_row_broadcast(t.matmul_op(h, dec_w2, false, true), dec_b2);
    if (c.mean_pool) {
        y = t.mean_pool(y);
        if (c.use_head) {
            const Tape::Id hw1 = take(), hb1 = take(), hw2 = take(), hb2 = take();
            const Tape::Id hh = t.relu(t.add_row_broadcast(t.matmul_op(y, hw1, false, true), hb1));
            y = t.add_row_broadcast(t.matmul_op(hh, hw2, false, true), hb2);
        }
    }
    tf.output = y;
    if (!all_finite(t.value(y))) throw NumericError("non-finite model output", -1);
    return tf;
}

inline Matrix dbgnn_forward(const DBGNNModel& model, const Graph& g, const Matrix& node_in,
                            const Matrix& edge_in, bool train_mode, Rng& rng) {
    TapedForward tf = taped_forward(model, g, node_in, edge_in, train_mode, rng);
    return tf.tape.value(tf.output);
}

// Symmetrically normalized adjacency with self-loops.
inline Matrix make_ahat(const Graph& g) {
    const int n = g.num_nodes;
    Matrix a(n, n);
    for (const auto& [i, j] : g.undirected_edges) a(i, j) = a(j, i) = 1.0;
    for (int i = 0; i < n; ++i) a(i, i) = 1.0;
    std::vector<double> inv_sqrt_deg(n);
    for (int i = 0; i < n; ++i) {
        double d = 0.0;
        for (int j = 0; j < n; ++j) d += a(i, j);
        inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
    return a;
}

struct GCNBaseline {
    Matrix ahat;
    std::vector<Matrix> layer_weights;  // W_k maps d_prev -> hidden, stored d_prev x hidden
};

inline GCNBaseline init_gcn(const Graph& g, int in_dim, int hidden, int depth, double spread,
                            Rng& rng) {
    if (depth < 1) throw std::invalid_argument("gcn depth must be >= 1");
    GCNBaseline model;
    model.ahat = make_ahat(g);
    int d_prev = in_dim;
    for (int k = 0; k < depth; ++k) {
        Matrix w(d_prev, hidden);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, spread);
        model.layer_weights.push_back(std::move(w));
        d_prev = hidden;
    }
    return model;
}

// x <- ReLU(Ahat x W_k), no bias; returns the embedding after every layer.
inline std::vector<Matrix> gcn_forward(const GCNBaseline& model, const Graph& g,
                                       const Matrix& node_in, int depth) {
    if (depth < 1 || depth > static_cast<int>(model.layer_weights.size()))
        throw std::invalid_argument("gcn depth out of range");
    if (static_cast<int>(node_in.rows()) != g.num_nodes ||
        model.ahat.rows() != static_cast<std::size_t>(g.num_nodes))
        throw std::invalid_argument("gcn input does not match graph");
    std::vector<Matrix> embeddings;
    embeddings.reserve(depth);
    Matrix x = node_in;
    for (int k = 0; k < depth; ++k) {
        x = map(matmul(matmul(model.ahat, x), model.layer_weights[k]),
                [](double v) { return v > 0.0 ? v : 0.0; });
        embeddings.push_back(x);
    }
    return embeddings;
}

}  // namespace dbgnn
