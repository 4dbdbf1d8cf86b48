#pragma once

// Reverse-mode tape over dense matrices. The primitive set covers exactly
// what the model forward needs; every op records a forward closure (so the
// tape can be replayed and verified) and a backward closure whose adjoints
// accumulate with +=, which is what makes shared-weight recurrences come out
// right: each of the T steps adds its contribution to the same parameter.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dbgnn/graph.hpp"
#include "dbgnn/matrix.hpp"
#include "dbgnn/rng.hpp"

namespace dbgnn {

class Tape {
public:
    using Id = int;

    Id input(Matrix value, bool requires_grad = false) {
        return alloc(std::move(value), requires_grad);
    }

    Id matmul_op(Id a, Id b, bool trans_a = false, bool trans_b = false) {
        const Id out = alloc(matmul(val(a), val(b), trans_a, trans_b), needs(a) || needs(b));
        record(
            [out, a, b, trans_a, trans_b](Tape& t) {
                t.nodes_[out].value = matmul(t.val(a), t.val(b), trans_a, trans_b);
            },
            [out, a, b, trans_a, trans_b](Tape& t) {
                const Matrix& dc = t.nodes_[out].grad;
                if (t.needs(a)) {
                    if (!trans_a)
                        t.nodes_[a].grad += trans_b ? matmul(dc, t.val(b))
                                                    : matmul(dc, t.val(b), false, true);
                    else
                        t.nodes_[a].grad += trans_b ? matmul(t.val(b), dc, true, true)
                                                    : matmul(t.val(b), dc, false, true);
                }
                if (t.needs(b)) {
                    if (!trans_b)
                        t.nodes_[b].grad += trans_a ? matmul(t.val(a), dc)
                                                    : matmul(t.val(a), dc, true, false);
                    else
                        t.nodes_[b].grad += trans_a ? matmul(dc, t.val(a), true, true)
                                                    : matmul(dc, t.val(a), true, false);
                }
            });
        return out;
    }

    Id add(Id a, Id b) {
        const Id out = alloc(val(a) + val(b), needs(a) || needs(b));
        record([out, a, b](Tape& t) { t.nodes_[out].value = t.val(a) + t.val(b); },
               [out, a, b](Tape& t) {
                   if (t.needs(a)) t.nodes_[a].grad += t.nodes_[out].grad;
                   if (t.needs(b)) t.nodes_[b].grad += t.nodes_[out].grad;
               });
        return out;
    }

    Id sub(Id a, Id b) {
        const Id out = alloc(val(a) - val(b), needs(a) || needs(b));
        record([out, a, b](Tape& t) { t.nodes_[out].value = t.val(a) - t.val(b); },
               [out, a, b](Tape& t) {
                   if (t.needs(a)) t.nodes_[a].grad += t.nodes_[out].grad;
                   if (t.needs(b)) t.nodes_[b].grad -= t.nodes_[out].grad;
               });
        return out;
    }

    Id scale(Id a, double c) {
        const Id out = alloc(val(a) * c, needs(a));
        record([out, a, c](Tape& t) { t.nodes_[out].value = t.val(a) * c; },
               [out, a, c](Tape& t) {
                   if (t.needs(a)) t.nodes_[a].grad += t.nodes_[out].grad * c;
               });
        return out;
    }

    // a is rows x d, row is 1 x d, broadcast over rows (bias add)
    Id add_row_broadcast(Id a, Id row) {
        const Id out = alloc(broadcast_rows(val(a), val(row)), needs(a) || needs(row));
        record(
            [out, a, row](Tape& t) {
                t.nodes_[out].value = broadcast_rows(t.val(a), t.val(row));
            },
            [out, a, row](Tape& t) {
                const Matrix& dc = t.nodes_[out].grad;
                if (t.needs(a)) t.nodes_[a].grad += dc;
                if (t.needs(row)) {
                    Matrix& dr = t.nodes_[row].grad;
                    for (std::size_t i = 0; i < dc.rows(); ++i)
                        for (std::size_t j = 0; j < dc.cols(); ++j) dr(0, j) += dc(i, j);
                }
            });
        return out;
    }

    Id relu(Id a) {
        const Id out =
            alloc(map(val(a), [](double v) { return v > 0.0 ? v : 0.0; }), needs(a));
        record(
            [out, a](Tape& t) {
                t.nodes_[out].value = map(t.val(a), [](double v) { return v > 0.0 ? v : 0.0; });
            },
            [out, a](Tape& t) {
                if (!t.needs(a)) return;
                const Matrix& in = t.val(a);
                const Matrix& dc = t.nodes_[out].grad;
                Matrix& da = t.nodes_[a].grad;
                for (std::size_t i = 0; i < in.size(); ++i)
                    if (in[i] > 0.0) da[i] += dc[i];
            });
        return out;
    }

    Id tanh_op(Id a) {
        const Id out = alloc(map(val(a), [](double v) { return std::tanh(v); }), needs(a));
        record(
            [out, a](Tape& t) {
                t.nodes_[out].value = map(t.val(a), [](double v) { return std::tanh(v); });
            },
            [out, a](Tape& t) {
                if (!t.needs(a)) return;
                const Matrix& y = t.nodes_[out].value;
                const Matrix& dc = t.nodes_[out].grad;
                Matrix& da = t.nodes_[a].grad;
                for (std::size_t i = 0; i < y.size(); ++i) da[i] += dc[i] * (1.0 - y[i] * y[i]);
            });
        return out;
    }

    // rows x_src - x_dst per directed edge; adjoint scatters back with signs
    Id edge_gather_diff(Id x, const Graph& g) {
        const Graph* gp = &g;
        const Id out = alloc(gather_diff(val(x), *gp), needs(x));
        record([out, x, gp](Tape& t) { t.nodes_[out].value = gather_diff(t.val(x), *gp); },
               [out, x, gp](Tape& t) {
                   if (!t.needs(x)) return;
                   const Matrix& dc = t.nodes_[out].grad;
                   Matrix& dx = t.nodes_[x].grad;
                   for (int k = 0; k < gp->num_directed(); ++k) {
                       const auto& [i, j] = gp->directed_edges[k];
                       for (std::size_t c = 0; c < dc.cols(); ++c) {
                           dx(i, c) += dc(k, c);
                           dx(j, c) -= dc(k, c);
                       }
                   }
               });
        return out;
    }

    // sum of edge rows onto their source node; adjoint gathers from sources
    Id node_scatter_sum(Id e, const Graph& g) {
        const Graph* gp = &g;
        const Id out = alloc(scatter_sum(val(e), *gp), needs(e));
        record([out, e, gp](Tape& t) { t.nodes_[out].value = scatter_sum(t.val(e), *gp); },
               [out, e, gp](Tape& t) {
                   if (!t.needs(e)) return;
                   const Matrix& dc = t.nodes_[out].grad;
                   Matrix& de = t.nodes_[e].grad;
                   for (int k = 0; k < gp->num_directed(); ++k) {
                       const int src = gp->directed_edges[k].first;
                       for (std::size_t c = 0; c < dc.cols(); ++c) de(k, c) += dc(src, c);
                   }
               });
        return out;
    }

    // The mask is sampled once here and captured, so replay and backward see
    // the same draw. Inverted scaling: eval mode is the identity (no op).
    Id dropout(Id a, double rate, bool train_mode, Rng& rng) {
        if (rate < 0.0 || rate >= 1.0)
            throw std::invalid_argument("dropout rate must be in [0, 1)");
        if (!train_mode || rate == 0.0) return a;
        Matrix mask(val(a).rows(), val(a).cols());
        const double keep_scale = 1.0 / (1.0 - rate);
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask[i] = rng.uniform() >= rate ? keep_scale : 0.0;
        const Id out = alloc(hadamard(val(a), mask), needs(a));
        record([out, a, mask](Tape& t) { t.nodes_[out].value = hadamard(t.val(a), mask); },
               [out, a, mask](Tape& t) {
                   if (!t.needs(a)) return;
                   t.nodes_[a].grad += hadamard(t.nodes_[out].grad, mask);
               });
        return out;
    }

    Id mean_pool(Id a) {
        const Id out = alloc(pool_mean(val(a)), needs(a));
        record([out, a](Tape& t) { t.nodes_[out].value = pool_mean(t.val(a)); },
               [out, a](Tape& t) {
                   if (!t.needs(a)) return;
                   const Matrix& dc = t.nodes_[out].grad;
                   Matrix& da = t.nodes_[a].grad;
                   const double inv = 1.0 / static_cast<double>(da.rows());
                   for (std::size_t i = 0; i < da.rows(); ++i)
                       for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += dc(0, j) * inv;
               });
        return out;
    }

    // ||pred - target||_F^2 / rows: mean over rows, sum over feature columns
    Id mse(Id pred, Matrix target) {
        if (!val(pred).same_shape(target)) throw std::invalid_argument("mse shape mismatch");
        const Id out = alloc(mse_value(val(pred), target), needs(pred));
        record(
            [out, pred, target](Tape& t) {
                t.nodes_[out].value = mse_value(t.val(pred), target);
            },
            [out, pred, target](Tape& t) {
                if (!t.needs(pred)) return;
                const double d = t.nodes_[out].grad(0, 0);
                const Matrix& p = t.val(pred);
                Matrix& dp = t.nodes_[pred].grad;
                const double scale = 2.0 * d / static_cast<double>(p.rows());
                for (std::size_t i = 0; i < p.size(); ++i) dp[i] += scale * (p[i] - target[i]);
            });
        return out;
    }

    Id huber(Id pred, Matrix target, double delta) {
        if (!val(pred).same_shape(target)) throw std::invalid_argument("huber shape mismatch");
        const Id out = alloc(huber_value(val(pred), target, delta), needs(pred));
        record(
            [out, pred, target, delta](Tape& t) {
                t.nodes_[out].value = huber_value(t.val(pred), target, delta);
            },
            [out, pred, target, delta](Tape& t) {
                if (!t.needs(pred)) return;
                const double d = t.nodes_[out].grad(0, 0);
                const Matrix& p = t.val(pred);
                Matrix& dp = t.nodes_[pred].grad;
                const double inv = d / static_cast<double>(p.rows());
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const double r = p[i] - target[i];
                    dp[i] += inv * (std::fabs(r) <= delta ? r : (r > 0.0 ? delta : -delta));
                }
            });
        return out;
    }

    // Clears adjoints, seeds d(loss)/d(loss) = 1, and runs recorded ops in
    // reverse. The loss must be scalar (1 x 1).
    void backward(Id loss) {
        if (val(loss).rows() != 1 || val(loss).cols() != 1)
            throw std::invalid_argument("backward needs a scalar loss");
        for (auto& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
        nodes_[loss].grad(0, 0) = 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward(*this);
    }

    // Reruns every forward closure in order; values are recomputed in place.
    void replay() {
        for (auto& op : ops_) op.forward(*this);
    }

    const Matrix& value(Id id) const { return nodes_[id].value; }
    const Matrix& gradient(Id id) const { return nodes_[id].grad; }
    std::size_t num_values() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
    };
    struct Op {
        std::function<void(Tape&)> forward;
        std::function<void(Tape&)> backward;
    };

    static Matrix broadcast_rows(const Matrix& m, const Matrix& r) {
        Matrix v = m;
        for (std::size_t i = 0; i < v.rows(); ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) += r(0, j);
        return v;
    }
    static Matrix gather_diff(const Matrix& m, const Graph& g) {
        Matrix d(g.num_directed(), m.cols());
        for (int k = 0; k < g.num_directed(); ++k) {
            const auto& [i, j] = g.directed_edges[k];
            for (std::size_t c = 0; c < m.cols(); ++c) d(k, c) = m(i, c) - m(j, c);
        }
        return d;
    }
    static Matrix scatter_sum(const Matrix& m, const Graph& g) {
        Matrix agg(g.num_nodes, m.cols());
        for (int k = 0; k < g.num_directed(); ++k) {
            const int src = g.directed_edges[k].first;
            for (std::size_t c = 0; c < m.cols(); ++c) agg(src, c) += m(k, c);
        }
        return agg;
    }
    static Matrix pool_mean(const Matrix& m) {
        Matrix p(1, m.cols());
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) p(0, j) += m(i, j);
        p *= 1.0 / static_cast<double>(m.rows());
        return p;
    }
    static Matrix mse_value(const Matrix& p, const Matrix& tg) {
        Matrix l(1, 1);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double r = p[i] - tg[i];
            l(0, 0) += r * r;
        }
        l(0, 0) /= static_cast<double>(p.rows());
        return l;
    }
    static Matrix huber_value(const Matrix& p, const Matrix& tg, double delta) {
        Matrix l(1, 1);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double r = std::fabs(p[i] - tg[i]);
            l(0, 0) += r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
        }
        l(0, 0) /= static_cast<double>(p.rows());
        return l;
    }

    const Matrix& val(Id id) const { return nodes_[id].value; }
    bool needs(Id id) const { return nodes_[id].requires_grad; }

    Id alloc(Matrix value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad});
        return static_cast<Id>(nodes_.size()) - 1;
    }
    void record(std::function<void(Tape&)> fwd, std::function<void(Tape&)> bwd) {
        ops_.push_back(Op{std::move(fwd), std::move(bwd)});
    }

    std::vector<Node> nodes_;
    std::vector<Op> ops_;
};

}  // namespace dbgnn
