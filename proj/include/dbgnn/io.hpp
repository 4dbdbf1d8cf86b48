#pragma once

// File artifacts: CSV tables, grayscale SVG heatmaps, FNV-1a content hashes,
// model checkpoints, and run manifests. Doubles are always written with
// %.17g so values round-trip exactly and reruns diff byte-for-byte.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbgnn/matrix.hpp"
#include "dbgnn/model.hpp"

namespace dbgnn {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

// Rows are built by the caller in the documented column order; str() is the
// exact file content.
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void row(std::vector<std::string> cells) {
        if (cells.size() != header.size()) throw std::invalid_argument("csv row width mismatch");
        rows.push_back(std::move(cells));
    }

    std::string str() const {
        std::ostringstream out;
        for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << "\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
            out << "\n";
        }
        return out.str();
    }
};

inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 14695981039346656037ull;
    for (const unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string fnv1a64_hex(const std::string& data) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(data)));
    return buf;
}

// One cell per matrix entry, linear grayscale, larger values darker. Row
// index runs down the y axis, column index along x.
inline std::string svg_heatmap(const Matrix& values, int cell_px = 4) {
    if (cell_px < 1) throw std::invalid_argument("cell size must be positive");
    double lo = values.size() ? values[0] : 0.0, hi = lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    const double range = hi - lo;
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << values.cols() * cell_px
        << "\" height=\"" << values.rows() * cell_px << "\">\n";
    for (std::size_t r = 0; r < values.rows(); ++r)
        for (std::size_t c = 0; c < values.cols(); ++c) {
            const double u = range > 0.0 ? (values(r, c) - lo) / range : 0.5;
            const int gray = 255 - static_cast<int>(u * 255.0 + 0.5);
            char color[8];
            std::snprintf(color, sizeof(color), "#%02x%02x%02x", gray, gray, gray);
            out << "<rect x=\"" << c * cell_px << "\" y=\"" << r * cell_px << "\" width=\""
                << cell_px << "\" height=\"" << cell_px << "\" fill=\"" << color << "\"/>\n";
        }
    out << "</svg>\n";
    return out.str();
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> data(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) data[i] = m[i];
    j["data"] = std::move(data);
    return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.size()) throw std::runtime_error("matrix payload size mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = data[i];
    return m;
}

inline nlohmann::json config_to_json(const DBGNNConfig& c) {
    return nlohmann::json{{"stepper", stepper_name(c.stepper)},
                          {"k_blocks", c.k_blocks},
                          {"t_steps", c.t_steps},
                          {"node_in", c.node_in},
                          {"edge_in", c.edge_in},
                          {"node_hidden", c.node_hidden},
                          {"edge_hidden", c.edge_hidden},
                          {"out_dim", c.out_dim},
                          {"node_dropout", c.dropout.node},
                          {"edge_dropout", c.dropout.edge},
                          {"nonlinearity", nonlinearity_name(c.nonlinearity)},
                          {"edge_nonlinearity", c.edge_nonlinearity},
                          {"oscillatory", c.oscillatory},
                          {"init_spread", c.init_spread},
                          {"mean_pool", c.mean_pool},
                          {"use_head", c.use_head}};
}

inline DBGNNConfig config_from_json(const nlohmann::json& j) {
    DBGNNConfig c;
    c.stepper = stepper_from_name(j.at("stepper").get<std::string>());
    c.k_blocks = j.at("k_blocks").get<int>();
    c.t_steps = j.at("t_steps").get<int>();
    c.node_in = j.at("node_in").get<int>();
    c.edge_in = j.at("edge_in").get<int>();
    c.node_hidden = j.at("node_hidden").get<int>();
    c.edge_hidden = j.at("edge_hidden").get<int>();
    c.out_dim = j.at("out_dim").get<int>();
    c.dropout.node = j.at("node_dropout").get<double>();
    c.dropout.edge = j.at("edge_dropout").get<double>();
    c.nonlinearity = nonlinearity_from_name(j.at("nonlinearity").get<std::string>());
    c.edge_nonlinearity = j.at("edge_nonlinearity").get<bool>();
    c.oscillatory = j.at("oscillatory").get<bool>();
    c.init_spread = j.at("init_spread").get<double>();
    c.mean_pool = j.at("mean_pool").get<bool>();
    c.use_head = j.at("use_head").get<bool>();
    c.validate();
    return c;
}

namespace detail {

// Same structure as init_model, all weights zero; used as the checkpoint
// loading skeleton.
inline DBGNNModel zero_model(const DBGNNConfig& config) {
    config.validate();
    DBGNNModel m;
    m.config = config;
    m.node_enc = Matrix(config.node_hidden, config.node_in);
    if (config.db_blocks()) m.edge_enc = Matrix(config.edge_hidden, config.edge_in);
    for (int k = 0; k < config.k_blocks; ++k) {
        if (config.db_blocks()) {
            DBWeights w;
            w.oscillatory = config.oscillatory;
            w.w_ne = Matrix(config.node_hidden, config.edge_hidden);
            w.w_en = Matrix(config.edge_hidden, config.node_hidden);
            w.w_beta_n = Matrix(config.node_hidden, config.node_hidden);
            w.w_beta_e = Matrix(config.edge_hidden, config.edge_hidden);
            m.db_layers.push_back(std::move(w));
            m.skip_node.emplace_back(config.node_hidden, config.node_hidden);
            m.skip_edge.emplace_back(config.edge_hidden, config.edge_hidden);
        } else {
            MPNNWeights w;
            w.w_n = Matrix(config.node_hidden, config.edge_hidden);
            w.w_e = Matrix(config.edge_hidden, config.node_hidden);
            w.beta_n = Matrix(config.node_hidden, config.node_hidden);
            m.mpnn_layers.push_back(std::move(w));
            m.skip_node.emplace_back(config.node_hidden, config.node_hidden);
        }
    }
    m.dec_w1 = Matrix(config.node_hidden, config.node_hidden);
    m.dec_b1 = Matrix(1, config.node_hidden);
    m.dec_w2 = Matrix(config.out_dim, config.node_hidden);
    m.dec_b2 = Matrix(1, config.out_dim);
    if (config.use_head) {
        m.head_w1 = Matrix(config.node_hidden, config.out_dim);
        m.head_b1 = Matrix(1, config.node_hidden);
        m.head_w2 = Matrix(config.out_dim, config.node_hidden);
        m.head_b2 = Matrix(1, config.out_dim);
    }
    return m;
}

}  // namespace detail

inline constexpr const char* kCheckpointFormat = "dbgnn-ckpt-v1";

inline void save_checkpoint(const DBGNNModel& model, const std::string& path) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["config"] = config_to_json(model.config);
    nlohmann::json params = nlohmann::json::object();
    for_each_param(model, [&](const std::string& name, const Matrix& m) {
        params[name] = matrix_to_json(m);
    });
    j["params"] = std::move(params);
    write_text_file(path, j.dump(1) + "\n");
}

inline DBGNNModel load_checkpoint(const std::string& path) {
    const nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    if (j.at("format").get<std::string>() != kCheckpointFormat)
        throw std::runtime_error("unsupported checkpoint format");
    DBGNNModel model = detail::zero_model(config_from_json(j.at("config")));
    const nlohmann::json& params = j.at("params");
    std::size_t consumed = 0;
    for_each_param(model, [&](const std::string& name, Matrix& m) {
        const Matrix loaded = matrix_from_json(params.at(name));
        if (!loaded.same_shape(m))
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        m = loaded;
        ++consumed;
    });
    if (consumed != params.size()) throw std::runtime_error("checkpoint has extra parameters");
    return model;
}

inline constexpr const char* kManifestFormat = "dbgnn-manifest-v1";

// The manifest echoes the fully resolved config, so feeding it back through
// --config reproduces the run. Artifact hashes let reruns be compared without
// keeping the originals.
inline void write_manifest(const std::string& path, const std::string& subcommand,
                           const nlohmann::json& resolved_config,
                           const std::map<std::string, std::string>& artifact_hashes) {
    nlohmann::json j;
    j["format"] = kManifestFormat;
    j["subcommand"] = subcommand;
    j["config"] = resolved_config;
    j["artifacts"] = artifact_hashes;
    write_text_file(path, j.dump(1) + "\n");
}

}  // namespace dbgnn
