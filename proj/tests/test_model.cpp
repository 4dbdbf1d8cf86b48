#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dbgnn/metrics.hpp"
#include "dbgnn/model.hpp"

using namespace dbgnn;

namespace {

// Scalar-feature model whose blocks do nothing except what the test dials in;
// encoders and decoder are exact identities (biases zero, inputs kept
// positive so the decoder relu passes through).
DBGNNModel identity_scaffold(int k_blocks, int t_steps) {
    DBGNNConfig c;
    c.k_blocks = k_blocks;
    c.t_steps = t_steps;
    c.node_in = c.edge_in = c.node_hidden = c.edge_hidden = c.out_dim = 1;
    c.nonlinearity = Nonlinearity::identity;
    DBGNNModel m;
    m.config = c;
    m.node_enc = Matrix(1, 1, 1.0);
    m.edge_enc = Matrix(1, 1, 1.0);
    for (int k = 0; k < k_blocks; ++k) {
        DBWeights w;
        w.w_ne = w.w_en = w.w_beta_n = w.w_beta_e = Matrix(1, 1);
        m.db_layers.push_back(w);
        m.skip_node.push_back(Matrix(1, 1));
        m.skip_edge.push_back(Matrix(1, 1));
    }
    m.dec_w1 = Matrix(1, 1, 1.0);
    m.dec_b1 = Matrix(1, 1);
    m.dec_w2 = Matrix(1, 1, 1.0);
    m.dec_b2 = Matrix(1, 1);
    return m;
}

}  // namespace

TEST_CASE("model configuration is validated", "[model]") {
    DBGNNConfig c;
    REQUIRE_NOTHROW(c.validate());
    c.stepper = StepperKind::lindb;
    REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
    c = DBGNNConfig{};
    c.k_blocks = 0;
    REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
    c = DBGNNConfig{};
    c.dropout = DropoutRates(1.0);
    REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
    c = DBGNNConfig{};
    c.use_head = true;  // head needs pooling
    REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
    c.mean_pool = true;
    REQUIRE_NOTHROW(c.validate());
    c = DBGNNConfig{};
    c.init_spread = 0.0;
    REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("parameter enumeration and counts", "[model]") {
    DBGNNConfig c;
    c.k_blocks = 2;
    c.node_in = 2;
    c.edge_in = 1;
    c.node_hidden = 4;
    c.edge_hidden = 3;
    c.out_dim = 2;
    Rng rng(1);
    const DBGNNModel m = init_model(c, rng);
    const std::size_t enc = 4 * 2 + 3 * 1;
    const std::size_t block = 4 * 3 + 3 * 4 + 4 * 4 + 3 * 3 + 4 * 4 + 3 * 3;
    const std::size_t dec = 4 * 4 + 4 + 2 * 4 + 2;
    REQUIRE(num_params(m) == enc + 2 * block + dec);

    std::vector<std::string> names;
    for_each_param(m, [&](const std::string& n, const Matrix&) { names.push_back(n); });
    REQUIRE(names.front() == "node_encoder");
    REQUIRE(names[1] == "edge_encoder");
    REQUIRE(names[2] == "layer0.w_ne");
    REQUIRE(names.back() == "decoder.b2");

    c.stepper = StepperKind::mpnn_sigma;
    Rng rng2(1);
    const DBGNNModel mp = init_model(c, rng2);
    names.clear();
    for_each_param(mp, [&](const std::string& n, const Matrix&) { names.push_back(n); });
    // the baseline has no persistent edge state: no edge encoder or edge skips
    for (const std::string& n : names) {
        REQUIRE(n.find("edge_encoder") == std::string::npos);
        REQUIRE(n.find("skip_edge") == std::string::npos);
    }
    REQUIRE(names[1] == "layer0.w_n");

    // biases start at zero, weights do not
    REQUIRE(max_abs(m.dec_b1) == 0.0);
    REQUIRE(max_abs(m.dec_b2) == 0.0);
    REQUIRE(max_abs(m.dec_w1) > 0.0);
}

TEST_CASE("initialization is seed deterministic", "[model]") {
    DBGNNConfig c;
    c.node_hidden = c.edge_hidden = 6;
    Rng a(9), b(9), d(10);
    const DBGNNModel ma = init_model(c, a);
    const DBGNNModel mb = init_model(c, b);
    const DBGNNModel md = init_model(c, d);
    bool same = true, differs = false;
    for_each_param(ma, [&](const std::string& n, const Matrix& p) {
        for_each_param(mb, [&](const std::string& n2, const Matrix& q) {
            if (n == n2 && max_abs_diff(p, q) != 0.0) same = false;
        });
        for_each_param(md, [&](const std::string& n2, const Matrix& q) {
            if (n == n2 && p.same_shape(q) && max_abs_diff(p, q) != 0.0) differs = true;
        });
    });
    REQUIRE(same);
    REQUIRE(differs);

    // oscillatory blocks inherit the constraint
    c.oscillatory = true;
    Rng e(3);
    const DBGNNModel mo = init_model(c, e);
    REQUIRE(max_abs_diff(mo.db_layers[0].w_ne, transpose(mo.db_layers[0].w_en) * -1.0) == 0.0);
}

TEST_CASE("identity wiring doubles the input through the skip", "[model]") {
    // zero dynamics leave x untouched; the skip adds the encoder output once
    DBGNNModel m = identity_scaffold(1, 1);
    m.skip_node[0] = Matrix(1, 1, 1.0);
    const Graph g = make_path(4);
    Matrix node_in(4, 1);
    node_in(0, 0) = 0.3;
    node_in(1, 0) = 0.7;
    node_in(2, 0) = 0.1;
    node_in(3, 0) = 0.9;
    Matrix edge_in(g.num_directed(), 1, 1.0);
    Rng rng(0);
    const Matrix out = dbgnn_forward(m, g, node_in, edge_in, false, rng);
    REQUIRE(out.rows() == 4);
    for (int v = 0; v < 4; ++v) REQUIRE(out(v, 0) == 2.0 * node_in(v, 0));
}

TEST_CASE("blocks run exactly K times T shared-weight steps", "[model]") {
    // with w_beta_n = 0.5 each step multiplies x by 1.5, so the number of
    // steps actually executed is read off the output growth
    for (const auto& [k_blocks, t_steps] : std::vector<std::pair<int, int>>{{4, 12}, {2, 16}}) {
        DBGNNModel m = identity_scaffold(k_blocks, t_steps);
        for (int k = 0; k < k_blocks; ++k) m.db_layers[k].w_beta_n = Matrix(1, 1, 0.5);
        const Graph g = make_path(3);
        Matrix node_in(3, 1, 1.0);
        Matrix edge_in(g.num_directed(), 1);
        Rng rng(0);
        const Matrix out = dbgnn_forward(m, g, node_in, edge_in, false, rng);
        const double measured = std::log(out(0, 0)) / std::log(1.5);
        REQUIRE(std::fabs(measured - k_blocks * t_steps) < 1e-9);
    }
}

TEST_CASE("information travels one hop per two steps", "[model]") {
    // node and edge features update simultaneously, so a node perturbation
    // needs two steps per hop; after K T total steps the receptive field is
    // floor(KT/2) and everything beyond it is untouched, exactly.
    for (const auto& [k_blocks, t_steps] : std::vector<std::pair<int, int>>{{1, 4}, {2, 2}}) {
        DBGNNConfig c;
        c.k_blocks = k_blocks;
        c.t_steps = t_steps;
        c.node_hidden = c.edge_hidden = 2;
        c.nonlinearity = Nonlinearity::identity;
        c.init_spread = 0.05;
        Rng rng(3);
        DBGNNModel m = init_model(c, rng);
        // decoder that reads one hidden coordinate but keeps its relu inert,
        // so untouched (all-zero) rows decode to exactly 0.0
        m.dec_w1 = Matrix::identity(2);
        m.dec_b1 = Matrix(1, 2, 100.0);
        m.dec_w2 = Matrix(1, 2);
        m.dec_w2(0, 0) = 1.0;
        m.dec_b2 = Matrix(1, 1, -100.0);
        const Graph g = make_path(9);
        Matrix node_in(9, 1);
        node_in(0, 0) = 1.0;  // all-zero baseline maps to all-zero output
        Matrix edge_in(g.num_directed(), 1);
        Rng fwd(0);
        const Matrix out = dbgnn_forward(m, g, node_in, edge_in, false, fwd);
        const int reach = (k_blocks * t_steps) / 2;
        for (int v = 0; v < 9; ++v) {
            if (v <= reach)
                REQUIRE(out(v, 0) != 0.0);
            else
                REQUIRE(out(v, 0) == 0.0);
        }
    }
}

TEST_CASE("outputs are equivariant under node relabeling", "[model]") {
    const Graph g = make_random_connected(8, 4, 5);
    DBGNNConfig c;
    c.node_hidden = c.edge_hidden = 4;
    c.node_in = 2;
    c.edge_in = 1;
    Rng rng(6);
    const DBGNNModel m = init_model(c, rng);

    Rng data(7);
    Matrix node_in(8, 2);
    for (std::size_t i = 0; i < node_in.size(); ++i) node_in[i] = data.normal();
    Matrix edge_in(g.num_directed(), 1);
    for (std::size_t i = 0; i < edge_in.size(); ++i) edge_in[i] = data.normal();

    const std::vector<int> perm{3, 5, 0, 7, 2, 6, 1, 4};  // perm[old] = new
    std::vector<std::pair<int, int>> mapped;
    for (const auto& [i, j] : g.undirected_edges) mapped.emplace_back(perm[i], perm[j]);
    const Graph g2 = make_graph(8, mapped);

    std::map<std::pair<int, int>, int> directed_id;
    for (int k = 0; k < g.num_directed(); ++k) directed_id[g.directed_edges[k]] = k;
    Matrix node_in2(8, 2);
    for (int v = 0; v < 8; ++v)
        for (int col = 0; col < 2; ++col) node_in2(perm[v], col) = node_in(v, col);
    Matrix edge_in2(g2.num_directed(), 1);
    std::vector<int> inv(8);
    for (int v = 0; v < 8; ++v) inv[perm[v]] = v;
    for (int k = 0; k < g2.num_directed(); ++k) {
        const auto& [a, b] = g2.directed_edges[k];
        edge_in2(k, 0) = edge_in(directed_id.at({inv[a], inv[b]}), 0);
    }

    Rng fa(0), fb(0);
    const Matrix out1 = dbgnn_forward(m, g, node_in, edge_in, false, fa);
    const Matrix out2 = dbgnn_forward(m, g2, node_in2, edge_in2, false, fb);
    for (int v = 0; v < 8; ++v) REQUIRE(std::fabs(out2(perm[v], 0) - out1(v, 0)) < 1e-10);
}

TEST_CASE("evaluation mode is deterministic, training dropout is seeded", "[model]") {
    DBGNNConfig c;
    c.node_hidden = c.edge_hidden = 4;
    c.dropout = DropoutRates(0.3);
    Rng rng(8);
    const DBGNNModel m = init_model(c, rng);
    const Graph g = make_path(5);
    Matrix node_in(5, 1, 0.5);
    Matrix edge_in(g.num_directed(), 1, 1.0);

    Rng a(1), b(2);
    const Matrix e1 = dbgnn_forward(m, g, node_in, edge_in, false, a);
    const Matrix e2 = dbgnn_forward(m, g, node_in, edge_in, false, b);
    REQUIRE(max_abs_diff(e1, e2) == 0.0);  // eval consumes no randomness

    Rng t1(3), t2(3), t3(4);
    const Matrix r1 = dbgnn_forward(m, g, node_in, edge_in, true, t1);
    const Matrix r2 = dbgnn_forward(m, g, node_in, edge_in, true, t2);
    const Matrix r3 = dbgnn_forward(m, g, node_in, edge_in, true, t3);
    REQUIRE(max_abs_diff(r1, r2) == 0.0);
    REQUIRE(max_abs_diff(r1, r3) > 0.0);
}

TEST_CASE("mean pooling averages node outputs, head runs on top", "[model]") {
    DBGNNConfig c;
    c.node_hidden = c.edge_hidden = 4;
    c.out_dim = 2;
    Rng rng(9);
    DBGNNModel per_node = init_model(c, rng);
    DBGNNModel pooled = per_node;
    pooled.config.mean_pool = true;

    const Graph g = make_path(6);
    Matrix node_in(6, 1, 0.4);
    node_in(2, 0) = -1.0;
    Matrix edge_in(g.num_directed(), 1, 1.0);
    Rng fa(0), fb(0);
    const Matrix out = dbgnn_forward(per_node, g, node_in, edge_in, false, fa);
    const Matrix pool = dbgnn_forward(pooled, g, node_in, edge_in, false, fb);
    REQUIRE(pool.rows() == 1);
    REQUIRE(pool.cols() == 2);
    for (int col = 0; col < 2; ++col) {
        double mean = 0.0;
        for (int v = 0; v < 6; ++v) mean += out(v, col);
        mean /= 6.0;
        REQUIRE(std::fabs(pool(0, col) - mean) < 1e-14);
    }

    DBGNNConfig hc = c;
    hc.mean_pool = true;
    hc.use_head = true;
    Rng rng2(10);
    const DBGNNModel headed = init_model(hc, rng2);
    Rng fc(0);
    const Matrix hout = dbgnn_forward(headed, g, node_in, edge_in, false, fc);
    REQUIRE(hout.rows() == 1);
    REQUIRE(hout.cols() == 2);
}

TEST_CASE("forward validates input shapes and flags blowup", "[model]") {
    DBGNNConfig c;
    Rng rng(11);
    DBGNNModel m = init_model(c, rng);
    const Graph g = make_path(4);
    Rng f(0);
    REQUIRE_THROWS_AS(dbgnn_forward(m, g, Matrix(3, 1), Matrix(g.num_directed(), 1), false, f),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(dbgnn_forward(m, g, Matrix(4, 2), Matrix(g.num_directed(), 1), false, f),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(dbgnn_forward(m, g, Matrix(4, 1), Matrix(3, 1), false, f),
                      std::invalid_argument);

    DBGNNModel hot = identity_scaffold(1, 40);
    hot.db_layers[0].w_beta_n = Matrix(1, 1, 1e20);
    Matrix node_in(4, 1, 1.0);
    REQUIRE_THROWS_AS(
        dbgnn_forward(hot, g, node_in, Matrix(g.num_directed(), 1), false, f), NumericError);
}

TEST_CASE("dbts block equals repeated single steps", "[model]") {
    const Graph g = make_random_connected(7, 3, 12);
    Rng rng(13);
    const DBWeights w = init_weights(3, 3, 0.1, false, rng);
    FeatureState s;
    s.node = Matrix(7, 3);
    s.edge = Matrix(g.num_directed(), 3);
    for (std::size_t i = 0; i < s.node.size(); ++i) s.node[i] = rng.normal();
    for (std::size_t i = 0; i < s.edge.size(); ++i) s.edge[i] = rng.normal();

    Rng ra(0), rb(0);
    const FeatureState one = dbts_forward(g, w, 1, 0.0, s, false, ra);
    const FeatureState step = db1s_step(g, w, s, 0.0, false, rb);
    REQUIRE(max_abs_diff(one.node, step.node) == 0.0);
    REQUIRE(max_abs_diff(one.edge, step.edge) == 0.0);

    Rng rc(0), rd(0);
    const FeatureState three = dbts_forward(g, w, 3, 0.0, s, false, rc);
    FeatureState manual = s;
    for (int t = 0; t < 3; ++t) manual = db1s_step(g, w, manual, 0.0, false, rd);
    REQUIRE(max_abs_diff(three.node, manual.node) == 0.0);

    Rng re(0);
    REQUIRE_THROWS_AS(dbts_forward(g, w, 0, 0.0, s, false, re), std::invalid_argument);

    // zero weights with the identity nonlinearity change nothing
    DBWeights zero;
    zero.w_ne = zero.w_en = Matrix(3, 3);
    zero.w_beta_n = zero.w_beta_e = Matrix(3, 3);
    Rng rf(0);
    const FeatureState same =
        dbts_forward(g, zero, 5, 0.0, s, false, rf, Nonlinearity::identity);
    REQUIRE(max_abs_diff(same.node, s.node) == 0.0);
    REQUIRE(max_abs_diff(same.edge, s.edge) == 0.0);
}

TEST_CASE("normalized adjacency with self loops", "[model]") {
    const Graph k2 = make_graph(2, {{0, 1}});
    const Matrix a2 = make_ahat(k2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) REQUIRE(std::fabs(a2(i, j) - 0.5) < 1e-15);

    const Matrix a3 = make_ahat(make_path(3));
    REQUIRE(std::fabs(a3(0, 0) - 0.5) < 1e-15);
    REQUIRE(std::fabs(a3(1, 1) - 1.0 / 3.0) < 1e-15);
    REQUIRE(std::fabs(a3(0, 1) - 1.0 / std::sqrt(6.0)) < 1e-15);
    REQUIRE(a3(0, 2) == 0.0);
}

TEST_CASE("gcn keeps constant features constant on regular graphs", "[model]") {
    const Graph c4 = make_graph(4, {{0, 1}, {0, 3}, {1, 2}, {2, 3}});
    Rng rng(14);
    const GCNBaseline gcn = init_gcn(c4, 2, 3, 10, 0.1, rng);
    const std::vector<Matrix> embs = gcn_forward(gcn, c4, Matrix(4, 2, 1.0), 10);
    REQUIRE(embs.size() == 10);
    for (const Matrix& x : embs) {
        for (std::size_t r = 1; r < x.rows(); ++r)
            for (std::size_t col = 0; col < x.cols(); ++col)
                REQUIRE(x(r, col) == x(0, col));
        REQUIRE(dirichlet_edges(c4, x) == 0.0);
    }
}

TEST_CASE("gcn dirichlet energy collapses with depth on regular graphs", "[model]") {
    const Graph g = make_random_regular(12, 4, 0);
    Rng rng(15);
    const GCNBaseline gcn = init_gcn(g, 8, 8, 60, 0.1, rng);
    Matrix x0(12, 8);
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = rng.normal();
    const std::vector<Matrix> embs = gcn_forward(gcn, g, x0, 60);

    std::vector<double> de;
    for (const Matrix& x : embs) de.push_back(dirichlet_edges(g, x));
    REQUIRE(de.back() < 1e-6 * de.front());
    for (std::size_t k = 10; k + 1 < de.size(); ++k)
        REQUIRE(de[k + 1] <= de[k] * (1.0 + 1e-9) + 1e-15);

    REQUIRE_THROWS_AS(gcn_forward(gcn, g, x0, 61), std::invalid_argument);
    REQUIRE_THROWS_AS(gcn_forward(gcn, g, Matrix(11, 8), 10), std::invalid_argument);
    Rng rng2(15);
    REQUIRE_THROWS_AS(init_gcn(g, 8, 8, 0, 0.1, rng2), std::invalid_argument);
}
