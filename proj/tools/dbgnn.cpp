// Experiment harness. Five subcommands (spectrum, spread, dirichlet, train,
// gradcheck) driven by JSON configs; presets provide ready-made setups. Every
// run writes its artifacts plus a manifest echoing the fully resolved config,
// and feeding that manifest back through --config reproduces the artifacts
// byte for byte.
//
// Exit codes: 0 success, 1 claim/assertion failure, 2 usage or config error,
// 3 numeric failure.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dbgnn/dirac.hpp"
#include "dbgnn/dynamics.hpp"
#include "dbgnn/graph.hpp"
#include "dbgnn/io.hpp"
#include "dbgnn/matrix.hpp"
#include "dbgnn/metrics.hpp"
#include "dbgnn/model.hpp"
#include "dbgnn/rng.hpp"
#include "dbgnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dbgnn;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ClaimFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The default config doubles as the schema: overlay keys must exist in the
// default and carry the same JSON type.
json merge_config(const json& base, const json& user, const std::string& path = "") {
    if (!user.is_object()) throw ConfigError("config at '" + path + "' must be an object");
    json out = base;
    for (const auto& [key, value] : user.items()) {
        if (!base.contains(key)) throw ConfigError("unknown config key: " + path + key);
        const json& b = base.at(key);
        if (b.is_object()) {
            out[key] = merge_config(b, value, path + key + ".");
        } else if ((b.is_number() && value.is_number() && !value.is_boolean()) ||
                   (b.is_boolean() && value.is_boolean()) ||
                   (b.is_string() && value.is_string()) || (b.is_array() && value.is_array())) {
            out[key] = value;
        } else {
            throw ConfigError("wrong type for config key: " + path + key);
        }
    }
    return out;
}

json default_graph_spec(const std::string& family) {
    return json{{"family", family}, {"n", 32},          {"rows", 5}, {"cols", 20},
                {"extra_edges", 8}, {"degree", 4},      {"file", ""}};
}

// Random families draw from the run seed so --seed N moves the whole run.
Graph build_graph(const json& spec, std::uint64_t seed) {
    const std::string family = spec.at("family").get<std::string>();
    if (family == "single_edge") return make_graph(2, {{0, 1}});
    if (family == "path") return make_path(spec.at("n").get<int>());
    if (family == "grid") return make_grid(spec.at("rows").get<int>(), spec.at("cols").get<int>());
    if (family == "ladder") return make_ladder(spec.at("n").get<int>());
    if (family == "random_connected")
        return make_random_connected(spec.at("n").get<int>(), spec.at("extra_edges").get<int>(),
                                     seed);
    if (family == "random_regular")
        return make_random_regular(spec.at("n").get<int>(), spec.at("degree").get<int>(), seed);
    if (family == "file") return parse_graph(read_text_file(spec.at("file").get<std::string>()));
    throw ConfigError("unknown graph family: " + family);
}

// Collects artifacts and their hashes; the manifest is written last so it can
// list every file of the run.
struct Run {
    fs::path out_dir;
    std::map<std::string, std::string> hashes;

    explicit Run(const std::string& out) : out_dir(out) { fs::create_directories(out_dir); }

    void write(const std::string& name, const std::string& content) {
        write_text_file((out_dir / name).string(), content);
        hashes[name] = fnv1a64_hex(content);
        std::cout << "wrote " << (out_dir / name).string() << "\n";
    }

    void finish(const std::string& subcommand, const json& resolved) {
        write_manifest((out_dir / "manifest.json").string(), subcommand, resolved, hashes);
        std::cout << "wrote " << (out_dir / "manifest.json").string() << "\n";
    }
};

int thread_cap() {
    if (const char* env = std::getenv("DBGNN_THREADS")) return std::max(1, std::atoi(env));
    return std::max(1u, std::thread::hardware_concurrency());
}

// Deterministic fan-out: every job writes only to its own slot.
template <typename Fn>
void parallel_jobs(int n, Fn fn) {
    const int workers = std::min(thread_cap(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& t : pool) t.join();
}

DBGNNConfig model_config_from_json(const json& m, int node_in, int edge_in, int out_dim) {
    DBGNNConfig c;
    c.stepper = stepper_from_name(m.at("stepper").get<std::string>());
    c.k_blocks = m.at("k_blocks").get<int>();
    c.t_steps = m.at("t_steps").get<int>();
    c.node_hidden = m.at("node_hidden").get<int>();
    c.edge_hidden = m.at("edge_hidden").get<int>();
    c.dropout = DropoutRates(m.at("node_dropout").get<double>(),
                             m.at("edge_dropout").get<double>());
    c.nonlinearity = nonlinearity_from_name(m.at("nonlinearity").get<std::string>());
    c.oscillatory = m.at("oscillatory").get<bool>();
    c.init_spread = m.at("init_spread").get<double>();
    c.node_in = node_in;
    c.edge_in = edge_in;
    c.out_dim = out_dim;
    c.validate();
    return c;
}

// ---------------------------------------------------------------- spectrum

json spectrum_defaults() {
    return json{{"graph", default_graph_spec("single_edge")},
                {"b", 1.0},
                {"beta", 0.5},
                {"seed", 0},
                {"out", "out_spectrum"}};
}

int cmd_spectrum(const json& cfg) {
    const Graph g = build_graph(cfg.at("graph"), cfg.at("seed").get<std::uint64_t>());
    const double b = cfg.at("b").get<double>();
    const double beta = cfg.at("beta").get<double>();
    const DiracOperator op = assemble(g, b, beta);
    const Spectrum spec = eigendecompose(op);
    const SpectralReport report = verify_spectral_claims(spec, beta, g.num_nodes,
                                                         g.num_undirected());

    Run run(cfg.at("out").get<std::string>());
    Csv csv;
    csv.header = {"index", "eigenvalue"};
    for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i)
        csv.row({std::to_string(i), format_double(spec.eigenvalues[i])});
    run.write("spectrum.csv", csv.str());

    double trace = 0.0;
    for (std::size_t i = 0; i < op.m.rows(); ++i) trace += op.m(i, i);
    json claims{{"b", b},
                {"beta", beta},
                {"n_nodes", g.num_nodes},
                {"n_edges", g.num_undirected()},
                {"pos_count", report.pos_count},
                {"neg_count", report.neg_count},
                {"min_abs_nonkernel", report.min_abs_nonkernel},
                {"gap_holds", report.gap_holds},
                {"trace", trace},
                {"trace_expected", beta * (g.num_nodes - g.num_undirected())}};
    run.write("claims.json", claims.dump(1) + "\n");
    run.finish("spectrum", cfg);
    if (!report.gap_holds) throw ClaimFailure("spectral gap claim failed");
    return 0;
}

// ------------------------------------------------------------------ spread

json spread_defaults() {
    return json{{"graph", default_graph_spec("grid")},
                {"d_n", 4},
                {"d_e", 4},
                {"spread", 0.1},
                {"oscillatory", true},
                {"nonlinearity", "relu"},
                {"steps", 120},
                {"steppers", json::array({"lindb", "db1s", "mpnn_linear", "mpnn_sigma",
                                          "mpnn_sigma_msgrelu"})},
                {"seed", 7},
                {"out", "out_spread"}};
}

int cmd_spread(const json& cfg) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const Graph g = build_graph(cfg.at("graph"), seed);
    const int d_n = cfg.at("d_n").get<int>();
    const int d_e = cfg.at("d_e").get<int>();
    const int steps = cfg.at("steps").get<int>();
    if (d_n < 1 || d_e < 1 || steps < 1) throw ConfigError("d_n, d_e, steps must be positive");

    Rng weight_rng(seed);
    const DBWeights w = init_weights(d_n, d_e, cfg.at("spread").get<double>(),
                                     cfg.at("oscillatory").get<bool>(), weight_rng);
    Rng init_rng(seed + 1);
    const FeatureState s0 = spreading_initial_state(g, d_n, d_e, init_rng);
    const Nonlinearity nl = nonlinearity_from_name(cfg.at("nonlinearity").get<std::string>());

    Run run(cfg.at("out").get<std::string>());
    for (const auto& name_json : cfg.at("steppers")) {
        const std::string name = name_json.get<std::string>();
        EvolveOptions opts;
        Trajectory traj;
        if (name == "lindb") {
            traj = evolve(g, StepperKind::lindb, w, s0, steps);
        } else if (name == "db1s") {
            opts.nonlinearity = nl;
            traj = evolve(g, StepperKind::db1s, w, s0, steps, opts);
        } else if (name == "mpnn_linear") {
            traj = evolve(g, StepperKind::mpnn_linear, mpnn_from_db(w), s0, steps);
        } else if (name == "mpnn_sigma" || name == "mpnn_sigma_msgrelu") {
            opts.edge_nonlinearity = name == "mpnn_sigma_msgrelu";
            traj = evolve(g, StepperKind::mpnn_sigma, mpnn_from_db(w), s0, steps, opts);
        } else {
            throw ConfigError("unknown stepper variant: " + name);
        }
        Csv csv;
        csv.header = {"step", "node_id", "activation"};
        for (std::size_t t = 0; t < traj.activation.rows(); ++t)
            for (int v = 0; v < g.num_nodes; ++v)
                csv.row({std::to_string(t), std::to_string(v),
                         format_double(traj.activation(t, v))});
        run.write("spread_" + name + ".csv", csv.str());
        run.write("spread_" + name + ".svg", svg_heatmap(transpose(traj.activation)));
    }
    run.finish("spread", cfg);
    return 0;
}

// --------------------------------------------------------------- dirichlet

json dirichlet_defaults() {
    json spec = default_graph_spec("random_regular");
    spec["n"] = 20;
    return json{{"graph", spec},        {"hidden", 16},      {"d_in", 1},
                {"spread", 0.1},        {"oscillatory", true}, {"nonlinearity", "tanh"},
                {"db_steps", 1000},     {"gcn_layers", 100}, {"n_seeds", 5},
                {"seed", 0},            {"out", "out_dirichlet"}};
}

struct DirichletSeed {
    std::vector<double> db;
    std::vector<double> gcn;
};

// One seed of the untrained comparison: encode a random input, run the
// node/edge recurrence for db_steps, and a GCN of gcn_layers, tracking the
// normalized DE of the node embeddings. Matches the A4-pilot wiring.
DirichletSeed dirichlet_one_seed(const Graph& g, const json& cfg, std::uint64_t seed, int s) {
    const int hidden = cfg.at("hidden").get<int>();
    const int d_in = cfg.at("d_in").get<int>();
    const double spread = cfg.at("spread").get<double>();
    const int db_steps = cfg.at("db_steps").get<int>();
    const int gcn_layers = cfg.at("gcn_layers").get<int>();
    const Nonlinearity nl = nonlinearity_from_name(cfg.at("nonlinearity").get<std::string>());

    Rng data_rng(seed + 1000 + s);
    Matrix node_in(g.num_nodes, d_in);
    for (std::size_t i = 0; i < node_in.size(); ++i) node_in[i] = data_rng.normal();
    Matrix edge_in(g.num_directed(), d_in);
    edge_in.fill(1.0);

    Rng weight_rng(seed + s);
    Matrix enc_n(hidden, d_in), enc_e(hidden, d_in);
    for (std::size_t i = 0; i < enc_n.size(); ++i) enc_n[i] = weight_rng.normal(0.0, spread);
    for (std::size_t i = 0; i < enc_e.size(); ++i) enc_e[i] = weight_rng.normal(0.0, spread);
    const DBWeights w =
        init_weights(hidden, hidden, spread, cfg.at("oscillatory").get<bool>(), weight_rng);

    FeatureState s0;
    s0.node = matmul(node_in, enc_n, false, true);
    s0.edge = matmul(edge_in, enc_e, false, true);
    EvolveOptions opts;
    opts.nonlinearity = nl;
    const Trajectory traj = evolve(g, StepperKind::db1s, w, s0, db_steps, opts);

    DirichletSeed out;
    out.db.assign(traj.dirichlet.energy.begin() + 1, traj.dirichlet.energy.end());

    Rng gcn_rng(seed + 2000 + s);
    const GCNBaseline gcn = init_gcn(g, d_in, hidden, gcn_layers, spread, gcn_rng);
    for (const Matrix& x : gcn_forward(gcn, g, node_in, gcn_layers)) {
        bool degenerate = false;
        out.gcn.push_back(dirichlet_edges(g, x, &degenerate));
    }
    return out;
}

int cmd_dirichlet(const json& cfg) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const Graph g = build_graph(cfg.at("graph"), seed);
    const int n_seeds = cfg.at("n_seeds").get<int>();
    if (n_seeds < 1) throw ConfigError("n_seeds must be positive");

    std::vector<DirichletSeed> results(n_seeds);
    parallel_jobs(n_seeds, [&](int s) { results[s] = dirichlet_one_seed(g, cfg, seed, s); });

    Run run(cfg.at("out").get<std::string>());
    Csv db_csv;
    db_csv.header = {"step", "dirichlet_energy", "seed"};
    for (int s = 0; s < n_seeds; ++s)
        for (std::size_t t = 0; t < results[s].db.size(); ++t)
            db_csv.row({std::to_string(t + 1), format_double(results[s].db[t]),
                        std::to_string(s)});
    run.write("dirichlet_db.csv", db_csv.str());
    Csv gcn_csv;
    gcn_csv.header = {"step", "dirichlet_energy", "seed"};
    for (int s = 0; s < n_seeds; ++s)
        for (std::size_t t = 0; t < results[s].gcn.size(); ++t)
            gcn_csv.row({std::to_string(t + 1), format_double(results[s].gcn[t]),
                         std::to_string(s)});
    run.write("dirichlet_gcn.csv", gcn_csv.str());
    run.finish("dirichlet", cfg);
    return 0;
}

// ------------------------------------------------------------------- train

json train_defaults() {
    json task{{"kind", "distance_regression"}, {"family", "path"}, {"size", 32},
              {"n_graphs", 128}};
    json model{{"stepper", "db1s"},   {"k_blocks", 2},      {"t_steps", 16},
               {"node_hidden", 32},   {"edge_hidden", 32},  {"node_dropout", 0.0},
               {"edge_dropout", 0.0}, {"nonlinearity", "tanh"}, {"oscillatory", true},
               {"init_spread", 0.1}};
    json train{{"epochs", 200},     {"total_steps", 0},   {"batch_size", 8},
               {"max_lr", 6.1e-4},  {"initial_div", 32.0}, {"final_div", 5.8e5},
               {"warmup_frac", 0.3}, {"metric", "r2"},     {"early_stop_patience", 0}};
    return json{{"task", task},     {"model", model}, {"train", train},
                {"de_trace", false}, {"seed", 1},     {"out", "out_train"}};
}

int cmd_train(const json& cfg) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const json& tj = cfg.at("task");
    SyntheticTask task = make_longrange_task(
        tj.at("kind").get<std::string>(), tj.at("family").get<std::string>(),
        tj.at("size").get<int>(), tj.at("n_graphs").get<int>(), seed);

    const DBGNNConfig mc = model_config_from_json(cfg.at("model"), 1, 1, 1);
    Rng model_rng(seed + 1);
    DBGNNModel model = init_model(mc, model_rng);

    const json& tr = cfg.at("train");
    TrainConfig tc;
    tc.epochs = tr.at("epochs").get<int>();
    tc.total_steps = tr.at("total_steps").get<long>();
    tc.batch_size = tr.at("batch_size").get<int>();
    tc.max_lr = tr.at("max_lr").get<double>();
    tc.initial_div = tr.at("initial_div").get<double>();
    tc.final_div = tr.at("final_div").get<double>();
    tc.warmup_frac = tr.at("warmup_frac").get<double>();
    const std::string metric = tr.at("metric").get<std::string>();
    if (metric != "r2" && metric != "mae") throw ConfigError("metric must be r2 or mae");
    tc.metric = metric == "r2" ? MetricKind::r2 : MetricKind::mae;
    tc.early_stop_patience = tr.at("early_stop_patience").get<int>();
    tc.seed = seed + 2;

    const TrainReport report = train(model, task, tc);

    Run run(cfg.at("out").get<std::string>());
    Csv csv;
    csv.header = {"epoch", "train_loss", "val_loss", "metric", "lr"};
    for (const EpochStats& e : report.epochs)
        csv.row({std::to_string(e.epoch), format_double(e.train_loss),
                 format_double(e.val_loss), format_double(e.metric), format_double(e.lr)});
    run.write("train_log.csv", csv.str());

    save_checkpoint(report.best_model, (run.out_dir / "checkpoint.json").string());
    run.hashes["checkpoint.json"] =
        fnv1a64_hex(read_text_file((run.out_dir / "checkpoint.json").string()));
    std::cout << "wrote " << (run.out_dir / "checkpoint.json").string() << "\n";

    json summary{{"best_epoch", report.best_epoch},
                 {"best_val_loss", report.best_val_loss},
                 {"val_metric", report.val_metric},
                 {"test_metric", report.test_metric},
                 {"epochs_run", report.epochs.size()}};
    run.write("summary.json", summary.dump(1) + "\n");

    if (cfg.at("de_trace").get<bool>()) {
        if (!mc.db_blocks()) throw ConfigError("de_trace needs db1s blocks");
        const TaskSample& sample = task.samples.at(task.val_idx.front());
        FeatureState s0;
        s0.node = matmul(sample.node_in, report.best_model.node_enc, false, true);
        s0.edge = matmul(sample.edge_in, report.best_model.edge_enc, false, true);
        EvolveOptions opts;
        opts.nonlinearity = mc.nonlinearity;
        const Trajectory traj =
            evolve(sample.graph, StepperKind::db1s, report.best_model.db_layers[0], s0, 1000,
                   opts);
        Csv de;
        de.header = {"step", "dirichlet_energy"};
        for (std::size_t t = 1; t < traj.dirichlet.energy.size(); ++t)
            de.row({std::to_string(t), format_double(traj.dirichlet.energy[t])});
        run.write("de_trace.csv", de.str());
    }
    run.finish("train", cfg);
    std::cout << "val_metric " << format_double(report.val_metric) << " test_metric "
              << format_double(report.test_metric) << "\n";
    return 0;
}

// --------------------------------------------------------------- gradcheck

json gradcheck_defaults() {
    json spec = default_graph_spec("random_connected");
    spec["n"] = 10;
    spec["extra_edges"] = 5;
    json model{{"stepper", "db1s"},   {"k_blocks", 2},      {"t_steps", 4},
               {"node_hidden", 8},    {"edge_hidden", 8},   {"node_dropout", 0.0},
               {"edge_dropout", 0.0}, {"nonlinearity", "tanh"}, {"oscillatory", false},
               {"init_spread", 0.1}};
    return json{{"graph", spec}, {"model", model}, {"h", 1e-5},
                {"tol", 1e-4},   {"seed", 11},     {"out", "out_gradcheck"}};
}

int cmd_gradcheck(const json& cfg) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const Graph g = build_graph(cfg.at("graph"), seed);
    const DBGNNConfig mc = model_config_from_json(cfg.at("model"), 1, 1, 1);
    Rng model_rng(seed + 1);
    DBGNNModel model = init_model(mc, model_rng);

    Rng data_rng(seed + 2);
    Matrix node_in(g.num_nodes, 1), edge_in(g.num_directed(), 1), target(g.num_nodes, 1);
    for (std::size_t i = 0; i < node_in.size(); ++i) node_in[i] = data_rng.normal();
    edge_in.fill(1.0);
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = data_rng.normal();

    const auto entries = gradcheck(model, g, node_in, edge_in, target, cfg.at("h").get<double>(),
                                   cfg.at("tol").get<double>());
    Run run(cfg.at("out").get<std::string>());
    Csv csv;
    csv.header = {"param_block", "max_rel_err", "pass"};
    bool all_pass = true;
    for (const auto& e : entries) {
        csv.row({e.name, format_double(e.max_rel_err), e.pass ? "1" : "0"});
        all_pass = all_pass && e.pass;
        std::cout << e.name << " " << format_double(e.max_rel_err) << (e.pass ? " pass" : " FAIL")
                  << "\n";
    }
    run.write("gradcheck.csv", csv.str());
    run.finish("gradcheck", cfg);
    if (!all_pass) throw ClaimFailure("gradient check failed");
    return 0;
}

// -------------------------------------------------------------- dispatch

json preset_config(const std::string& subcommand, const std::string& preset) {
    if (subcommand == "spread") {
        json cfg = spread_defaults();
        if (preset == "fig3" || preset.empty()) return cfg;
        if (preset == "fig1") {
            cfg["graph"]["family"] = "path";
            cfg["graph"]["n"] = 64;
            cfg["d_n"] = 1;
            cfg["d_e"] = 1;
            cfg["steps"] = 192;
            cfg["steppers"] = json::array({"lindb", "mpnn_linear"});
            return cfg;
        }
        if (preset == "fig5") {
            cfg["oscillatory"] = false;
            return cfg;
        }
        if (preset == "fig6") {
            cfg["graph"]["family"] = "ladder";
            cfg["graph"]["n"] = 30;
            return cfg;
        }
    } else if (subcommand == "train") {
        json cfg = train_defaults();
        if (preset == "smoke" || preset.empty()) {
            cfg["task"]["n_graphs"] = 32;
            cfg["train"]["epochs"] = 200;
            cfg["train"]["max_lr"] = 3e-3;
            return cfg;
        }
        if (preset == "longrange") {
            cfg["task"]["n_graphs"] = 128;
            cfg["train"]["total_steps"] = 2000;
            cfg["train"]["max_lr"] = 3e-3;
            cfg["model"]["init_spread"] = 0.2;
            return cfg;
        }
    } else if (subcommand == "spectrum") {
        if (preset == "single_edge" || preset.empty()) return spectrum_defaults();
        if (preset == "p3") {
            json cfg = spectrum_defaults();
            cfg["graph"]["family"] = "path";
            cfg["graph"]["n"] = 3;
            return cfg;
        }
    } else if (subcommand == "dirichlet") {
        if (preset == "fig2" || preset.empty()) return dirichlet_defaults();
    } else if (subcommand == "gradcheck") {
        if (preset == "default" || preset.empty()) return gradcheck_defaults();
    }
    throw ConfigError("unknown preset '" + preset + "' for subcommand " + subcommand);
}

int dispatch(const std::string& subcommand, const std::string& config_path,
             const std::string& preset, long long seed_flag, const std::string& out_flag) {
    json cfg = preset_config(subcommand, preset);
    if (!config_path.empty()) {
        json user = json::parse(read_text_file(config_path), nullptr, true, true);
        // a manifest from a previous run is accepted directly
        if (user.is_object() && user.contains("format") &&
            user.at("format") == kManifestFormat) {
            if (user.at("subcommand").get<std::string>() != subcommand)
                throw ConfigError("manifest is for subcommand " +
                                  user.at("subcommand").get<std::string>());
            user = user.at("config");
        }
        cfg = merge_config(cfg, user);
    }
    if (seed_flag >= 0) cfg["seed"] = seed_flag;
    if (!out_flag.empty()) cfg["out"] = out_flag;

    if (subcommand == "spectrum") return cmd_spectrum(cfg);
    if (subcommand == "spread") return cmd_spread(cfg);
    if (subcommand == "dirichlet") return cmd_dirichlet(cfg);
    if (subcommand == "train") return cmd_train(cfg);
    if (subcommand == "gradcheck") return cmd_gradcheck(cfg);
    throw ConfigError("unknown subcommand: " + subcommand);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph dynamics and training experiment harness"};
    app.require_subcommand(1);
    app.fallthrough();  // flags may follow the subcommand name

    std::string config_path, preset, out_flag;
    long long seed_flag = -1;
    app.add_option("--config", config_path, "JSON config (or a manifest from a previous run)")
        ->expected(1);
    app.add_option("--preset", preset, "named preset configuration")->expected(1);
    app.add_option("--seed", seed_flag, "override the run seed")->expected(1);
    app.add_option("--out", out_flag, "output directory")->expected(1);

    std::vector<std::string> names{"spectrum", "spread", "dirichlet", "train", "gradcheck"};
    for (const auto& n : names) app.add_subcommand(n);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::Error& e) {
        app.exit(e);
        return 2;
    }

    try {
        const std::string sub = app.get_subcommands().front()->get_name();
        return dispatch(sub, config_path, preset, seed_flag, out_flag);
    } catch (const ClaimFailure& e) {
        std::cerr << "claim failure: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
