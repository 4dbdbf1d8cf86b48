#pragma once

// Training machinery on top of the tape: batch gradients, Adam, the one-cycle
// schedule, synthetic node-regression tasks, the epoch loop, and a
// finite-difference gradient check over whole parameter blocks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbgnn/graph.hpp"
#include "dbgnn/matrix.hpp"
#include "dbgnn/metrics.hpp"
#include "dbgnn/model.hpp"
#include "dbgnn/rng.hpp"

namespace dbgnn {

struct TaskSample {
    Graph graph;
    Matrix node_in;  // |N| x 1
    Matrix edge_in;  // |E_dir| x 1
    Matrix target;   // |N| x 1
};

struct SyntheticTask {
    std::string kind;  // distance_regression | parity_source
    std::vector<TaskSample> samples;
    std::vector<int> train_idx, val_idx, test_idx;
};

// Node regression with one randomly placed source: the source node's input is
// 1 (all other nodes 0, all edge inputs 1); the target at node v is the hop
// distance to the source over n-1 (distance_regression) or (-1)^distance
// (parity_source). Graph families: "path" (size nodes) and "grid" (5 rows,
// size columns). Samples split 70/15/15 after a shuffle.
inline SyntheticTask make_longrange_task(const std::string& kind, const std::string& graph_family,
                                         int size, int n_graphs, std::uint64_t seed) {
    if (kind != "distance_regression" && kind != "parity_source")
        throw std::invalid_argument("unknown task kind: " + kind);
    if (size < 8) throw std::invalid_argument("task size must be >= 8");
    if (n_graphs < 1) throw std::invalid_argument("need at least one graph");
    Rng rng(seed);
    SyntheticTask task;
    task.kind = kind;
    for (int s = 0; s < n_graphs; ++s) {
        TaskSample sample;
        if (graph_family == "path")
            sample.graph = make_path(size);
        else if (graph_family == "grid")
            sample.graph = make_grid(5, size);
        else
            throw std::invalid_argument("unknown graph family: " + graph_family);
        const Graph& g = sample.graph;
        const int source = static_cast<int>(rng.integer(g.num_nodes));
        sample.node_in = Matrix(g.num_nodes, 1);
        sample.node_in(source, 0) = 1.0;
        sample.edge_in = Matrix(g.num_directed(), 1);
        sample.edge_in.fill(1.0);
        const std::vector<int> dist = bfs_distances(g, source);
        sample.target = Matrix(g.num_nodes, 1);
        for (int v = 0; v < g.num_nodes; ++v)
            sample.target(v, 0) = kind == "distance_regression"
                                      ? static_cast<double>(dist[v]) / (g.num_nodes - 1)
                                      : (dist[v] % 2 == 0 ? 1.0 : -1.0);
        task.samples.push_back(std::move(sample));
    }
    std::vector<int> order(n_graphs);
    for (int i = 0; i < n_graphs; ++i) order[i] = i;
    for (int i = n_graphs - 1; i > 0; --i)
        std::swap(order[i], order[rng.integer(static_cast<std::uint64_t>(i) + 1)]);
    const int n_train = (70 * n_graphs) / 100;
    const int n_val = (15 * n_graphs) / 100;
    task.train_idx.assign(order.begin(), order.begin() + n_train);
    task.val_idx.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    task.test_idx.assign(order.begin() + n_train + n_val, order.end());
    if (task.train_idx.empty()) task.train_idx.push_back(order.front());
    return task;
}

struct GradResult {
    std::vector<Matrix> grads;  // for_each_param order
    double loss = 0.0;
};

// Mean MSE loss and mean gradients over the batch; one tape per sample so
// dropout draws are independent across the batch.
inline GradResult grad(const DBGNNModel& model, const SyntheticTask& task,
                       const std::vector<int>& batch, bool train_mode, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    GradResult result;
    for (const int idx : batch) {
        const TaskSample& s = task.samples.at(idx);
        TapedForward tf = taped_forward(model, s.graph, s.node_in, s.edge_in, train_mode, rng);
        const Tape::Id loss_id = tf.tape.mse(tf.output, s.target);
        tf.tape.backward(loss_id);
        result.loss += tf.tape.value(loss_id)(0, 0);
        if (result.grads.empty())
            for (const Tape::Id p : tf.params) result.grads.push_back(tf.tape.gradient(p));
        else
            for (std::size_t i = 0; i < tf.params.size(); ++i)
                result.grads[i] += tf.tape.gradient(tf.params[i]);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    result.loss *= inv;
    for (Matrix& m : result.grads) m *= inv;
    return result;
}

struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Matrix> m1, m2;
};

inline OptimizerState init_optimizer(const DBGNNModel& model) {
    OptimizerState opt;
    for_each_param(model, [&](const std::string&, const Matrix& p) {
        opt.m1.emplace_back(p.rows(), p.cols());
        opt.m2.emplace_back(p.rows(), p.cols());
    });
    return opt;
}

// Standard Adam with bias correction; params are updated in place.
inline void adam_step(OptimizerState& opt, std::vector<Matrix*>& params,
                      const std::vector<Matrix>& grads, double lr) {
    if (params.size() != grads.size() || params.size() != opt.m1.size())
        throw std::invalid_argument("optimizer state does not match parameters");
    ++opt.step;
    const double bc1 = 1.0 - std::pow(opt.beta1, opt.step);
    const double bc2 = 1.0 - std::pow(opt.beta2, opt.step);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        const Matrix& g = grads[i];
        if (!p.same_shape(g) || !p.same_shape(opt.m1[i]))
            throw std::invalid_argument("gradient shape mismatch");
        Matrix& m = opt.m1[i];
        Matrix& v = opt.m2[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
            p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opt.eps);
        }
    }
}

struct LRSchedule {
    double max_lr = 6.1e-4;
    long total_steps = 1;
    double initial_div = 32.0;
    double final_div = 5.8e5;
    double warmup_frac = 0.3;
};

// Cosine rise from max_lr/initial_div to max_lr over the warmup fraction,
// cosine decay to max_lr/final_div afterwards.
inline double one_cycle_lr(const LRSchedule& s, long step) {
    if (step < 0 || step > s.total_steps) throw std::out_of_range("schedule step out of range");
    constexpr double pi = 3.14159265358979323846;
    const double lr_start = s.max_lr / s.initial_div;
    const double lr_final = s.max_lr / s.final_div;
    const double warm = s.warmup_frac * static_cast<double>(s.total_steps);
    if (warm > 0.0 && static_cast<double>(step) <= warm) {
        const double u = static_cast<double>(step) / warm;
        return lr_start + (s.max_lr - lr_start) * 0.5 * (1.0 - std::cos(pi * u));
    }
    const double u = (static_cast<double>(step) - warm) / (static_cast<double>(s.total_steps) - warm);
    return lr_final + (s.max_lr - lr_final) * 0.5 * (1.0 + std::cos(pi * u));
}

enum class MetricKind { r2, mae };

struct TrainConfig {
    int epochs = 200;
    long total_steps = 0;  // > 0: run exactly this many optimizer steps instead
    int batch_size = 32;
    double max_lr = 6.1e-4;
    double initial_div = 32.0;
    double final_div = 5.8e5;
    double warmup_frac = 0.3;
    bool use_one_cycle = true;
    MetricKind metric = MetricKind::r2;
    int early_stop_patience = 0;  // 0 disables
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double metric = 0.0;
    double lr = 0.0;
};

struct EvalResult {
    double loss = 0.0;
    double metric = 0.0;
};

inline EvalResult evaluate(const DBGNNModel& model, const SyntheticTask& task,
                           const std::vector<int>& indices, MetricKind metric) {
    if (indices.empty()) throw std::invalid_argument("empty evaluation split");
    Rng unused(0);
    EvalResult r;
    std::vector<double> preds, targets;
    for (const int idx : indices) {
        const TaskSample& s = task.samples.at(idx);
        const Matrix out = dbgnn_forward(model, s.graph, s.node_in, s.edge_in, false, unused);
        double sq = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out[i] - s.target[i];
            sq += d * d;
            preds.push_back(out[i]);
            targets.push_back(s.target[i]);
        }
        r.loss += sq / static_cast<double>(out.rows());
    }
    r.loss /= static_cast<double>(indices.size());
    r.metric = metric == MetricKind::r2 ? r_squared(preds, targets) : mae(preds, targets);
    return r;
}

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    DBGNNModel best_model;
    double val_metric = 0.0;   // best model on the validation split
    double test_metric = 0.0;  // best model on the test split
};

// Minibatch Adam with a one-cycle schedule over the full step budget. The
// model is trained in place; the report carries a snapshot of the best-val
// parameters and its split metrics.
inline TrainReport train(DBGNNModel& model, const SyntheticTask& task, const TrainConfig& config) {
    if (config.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (config.epochs < 1 && config.total_steps < 1)
        throw std::invalid_argument("nothing to train");
    Rng rng(config.seed);

    std::vector<int> train_order = task.train_idx;
    const long steps_per_epoch =
        (static_cast<long>(train_order.size()) + config.batch_size - 1) / config.batch_size;
    const long total_steps = config.total_steps > 0
                                 ? config.total_steps
                                 : steps_per_epoch * static_cast<long>(config.epochs);
    LRSchedule sched{config.max_lr, total_steps, config.initial_div, config.final_div,
                     config.warmup_frac};

    std::vector<Matrix*> params;
    for_each_param(model, [&](const std::string&, Matrix& p) { params.push_back(&p); });
    OptimizerState opt = init_optimizer(model);

    TrainReport report;
    report.best_val_loss = std::numeric_limits<double>::infinity();
    long step = 0;
    int stale_epochs = 0;
    for (int epoch = 1; step < total_steps; ++epoch) {
        for (std::size_t i = train_order.size(); i > 1; --i)
            std::swap(train_order[i - 1], train_order[rng.integer(i)]);
        double epoch_loss = 0.0;
        long epoch_batches = 0;
        double lr = 0.0;
        for (std::size_t off = 0; off < train_order.size() && step < total_steps;
             off += config.batch_size) {
            const std::size_t end = std::min(off + config.batch_size, train_order.size());
            const std::vector<int> batch(train_order.begin() + off, train_order.begin() + end);
            lr = config.use_one_cycle ? one_cycle_lr(sched, step) : config.max_lr;
            GradResult g = grad(model, task, batch, true, rng);
            adam_step(opt, params, g.grads, lr);
            epoch_loss += g.loss;
            ++epoch_batches;
            ++step;
        }
        const EvalResult val = evaluate(model, task, task.val_idx, config.metric);
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(epoch_batches);
        stats.val_loss = val.loss;
        stats.metric = val.metric;
        stats.lr = lr;
        report.epochs.push_back(stats);
        if (val.loss < report.best_val_loss) {
            report.best_val_loss = val.loss;
            report.best_epoch = epoch;
            report.best_model = model;
            stale_epochs = 0;
        } else if (config.early_stop_patience > 0 && ++stale_epochs >= config.early_stop_patience) {
            break;
        }
    }
    if (report.epochs.empty()) throw std::logic_error("training ran no steps");
    report.val_metric = evaluate(report.best_model, task, task.val_idx, config.metric).metric;
    report.test_metric = evaluate(report.best_model, task, task.test_idx, config.metric).metric;
    return report;
}

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

// MSE loss of one forward pass in evaluation mode (deterministic, which is
// what makes central differences meaningful).
inline double loss_eval(const DBGNNModel& model, const Graph& g, const Matrix& node_in,
                        const Matrix& edge_in, const Matrix& target) {
    Rng unused(0);
    TapedForward tf = taped_forward(model, g, node_in, edge_in, false, unused);
    const Tape::Id loss_id = tf.tape.mse(tf.output, target);
    return tf.tape.value(loss_id)(0, 0);
}

// Central finite differences for every scalar parameter, reported per block.
// rel err = |analytic - fd| / max(|analytic|, |fd|, floor). The floor guards
// against pure FD roundoff (about eps*loss/h) dominating parameters whose
// true gradient is near zero, e.g. behind mostly-dead relu paths.
inline std::vector<GradCheckEntry> gradcheck(DBGNNModel& model, const Graph& g,
                                             const Matrix& node_in, const Matrix& edge_in,
                                             const Matrix& target, double h = 1e-5,
                                             double tol = 1e-4, double floor = 1e-8) {
    Rng unused(0);
    TapedForward tf = taped_forward(model, g, node_in, edge_in, false, unused);
    const Tape::Id loss_id = tf.tape.mse(tf.output, target);
    tf.tape.backward(loss_id);
    std::vector<Matrix> analytic;
    for (const Tape::Id p : tf.params) analytic.push_back(tf.tape.gradient(p));

    std::vector<Matrix*> params;
    for_each_param(model, [&](const std::string&, Matrix& p) { params.push_back(&p); });
    std::vector<GradCheckEntry> entries;
    for (std::size_t b = 0; b < params.size(); ++b) {
        GradCheckEntry entry;
        entry.name = tf.param_names[b];
        Matrix& p = *params[b];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double saved = p[j];
            p[j] = saved + h;
            const double up = loss_eval(model, g, node_in, edge_in, target);
            p[j] = saved - h;
            const double down = loss_eval(model, g, node_in, edge_in, target);
            p[j] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic[b][j];
            const double rel =
                std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), floor});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        entry.pass = entry.max_rel_err < tol;
        entries.push_back(std::move(entry));
    }
    return entries;
}

}  // namespace dbgnn
