#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "dbgnn/io.hpp"
#include "dbgnn/rng.hpp"

using namespace dbgnn;

namespace {

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + needle.size()))
        ++n;
    return n;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("io_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("doubles round-trip through their text form", "[io]") {
    REQUIRE(format_double(0.5) == "0.5");
    REQUIRE(format_double(2.0) == "2");
    REQUIRE(format_double(-0.0) == "-0");
    for (const double v : {1.0 / 3.0, 1e300, -7.3e-12, 0.1 + 0.2}) {
        REQUIRE(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("text files round-trip and missing paths throw", "[io]") {
    TempFile f("text.txt");
    const std::string content = "line one\nline two\n";
    write_text_file(f.path, content);
    REQUIRE(read_text_file(f.path) == content);
    REQUIRE_THROWS_AS(read_text_file("io_test_no_such_file"), std::runtime_error);
}

TEST_CASE("csv emits exact bytes and rejects ragged rows", "[io]") {
    Csv csv;
    csv.header = {"step", "value"};
    csv.row({"0", "1.5"});
    csv.row({"1", format_double(1.0 / 3.0)});
    REQUIRE(csv.str() == "step,value\n0,1.5\n1,0.33333333333333331\n");
    REQUIRE_THROWS_AS(csv.row({"only one"}), std::invalid_argument);
}

TEST_CASE("content hash matches published fnv1a-64 vectors", "[io]") {
    REQUIRE(fnv1a64("") == 14695981039346656037ull);
    REQUIRE(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    REQUIRE(fnv1a64("foobar") == 0x85944171f73967e8ull);
    REQUIRE(fnv1a64_hex("") == "cbf29ce484222325");
    REQUIRE(fnv1a64_hex("foobar").size() == 16);
    REQUIRE(fnv1a64_hex("x") != fnv1a64_hex("y"));
}

TEST_CASE("heatmaps are deterministic grayscale grids", "[io]") {
    Matrix m(2, 3);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<double>(i);
    const std::string svg = svg_heatmap(m, 4);
    REQUIRE(svg.find("width=\"12\" height=\"8\"") != std::string::npos);
    REQUIRE(count_occurrences(svg, "<rect") == 6);
    REQUIRE(svg.find("#ffffff") != std::string::npos);  // the minimum
    REQUIRE(svg.find("#000000") != std::string::npos);  // the maximum
    REQUIRE(svg_heatmap(m, 4) == svg);

    const std::string flat = svg_heatmap(Matrix(2, 2, 3.7), 1);
    REQUIRE(count_occurrences(flat, "#7f7f7f") == 4);  // degenerate range maps to mid gray
    REQUIRE_THROWS_AS(svg_heatmap(m, 0), std::invalid_argument);
}

TEST_CASE("matrices round-trip through json bitwise", "[io]") {
    Rng rng(31);
    Matrix m(3, 4);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.normal() * 1e-7;
    m(0, 0) = 1.0 / 3.0;
    const Matrix back = matrix_from_json(matrix_to_json(m));
    REQUIRE(back.rows() == 3);
    REQUIRE(back.cols() == 4);
    REQUIRE(max_abs_diff(back, m) == 0.0);

    nlohmann::json bad = matrix_to_json(m);
    bad["data"] = std::vector<double>{1.0, 2.0};
    REQUIRE_THROWS_AS(matrix_from_json(bad), std::runtime_error);
}

TEST_CASE("model configs round-trip through json", "[io]") {
    DBGNNConfig c;
    c.stepper = StepperKind::mpnn_sigma;
    c.k_blocks = 3;
    c.t_steps = 5;
    c.node_in = 2;
    c.edge_in = 3;
    c.node_hidden = 7;
    c.edge_hidden = 6;
    c.out_dim = 4;
    c.dropout = DropoutRates(0.1, 0.2);
    c.nonlinearity = Nonlinearity::relu;
    c.edge_nonlinearity = false;
    c.oscillatory = true;
    c.init_spread = 0.25;
    c.mean_pool = true;
    c.use_head = true;
    const DBGNNConfig back = config_from_json(config_to_json(c));
    REQUIRE(back.stepper == StepperKind::mpnn_sigma);
    REQUIRE(back.k_blocks == 3);
    REQUIRE(back.t_steps == 5);
    REQUIRE(back.node_in == 2);
    REQUIRE(back.edge_in == 3);
    REQUIRE(back.node_hidden == 7);
    REQUIRE(back.edge_hidden == 6);
    REQUIRE(back.out_dim == 4);
    REQUIRE(back.dropout.node == 0.1);
    REQUIRE(back.dropout.edge == 0.2);
    REQUIRE(back.nonlinearity == Nonlinearity::relu);
    REQUIRE(back.edge_nonlinearity == false);
    REQUIRE(back.oscillatory == true);
    REQUIRE(back.init_spread == 0.25);
    REQUIRE(back.mean_pool == true);
    REQUIRE(back.use_head == true);

    nlohmann::json invalid = config_to_json(c);
    invalid["k_blocks"] = 0;
    REQUIRE_THROWS_AS(config_from_json(invalid), std::invalid_argument);
}

TEST_CASE("checkpoints restore every parameter bitwise", "[io]") {
    DBGNNConfig c;
    c.k_blocks = 2;
    c.t_steps = 3;
    c.node_in = 2;
    c.node_hidden = 5;
    c.edge_hidden = 4;
    c.out_dim = 2;
    c.mean_pool = true;
    c.use_head = true;
    Rng rng(41);
    const DBGNNModel model = init_model(c, rng);

    TempFile f("ckpt.json");
    save_checkpoint(model, f.path);
    const DBGNNModel back = load_checkpoint(f.path);
    REQUIRE(back.config.k_blocks == 2);
    REQUIRE(back.config.use_head);
    std::vector<const Matrix*> orig, restored;
    for_each_param(model, [&](const std::string&, const Matrix& p) { orig.push_back(&p); });
    for_each_param(back, [&](const std::string&, const Matrix& p) { restored.push_back(&p); });
    REQUIRE(orig.size() == restored.size());
    for (std::size_t i = 0; i < orig.size(); ++i)
        REQUIRE(max_abs_diff(*orig[i], *restored[i]) == 0.0);

    nlohmann::json j = nlohmann::json::parse(read_text_file(f.path));
    j["format"] = "something-else";
    TempFile bad("ckpt_bad.json");
    write_text_file(bad.path, j.dump());
    REQUIRE_THROWS_AS(load_checkpoint(bad.path), std::runtime_error);

    j["format"] = kCheckpointFormat;
    j["params"]["node_encoder"]["rows"] = 1;  // payload intact, shape transposed away
    j["params"]["node_encoder"]["cols"] = 10;
    write_text_file(bad.path, j.dump());
    REQUIRE_THROWS_WITH(load_checkpoint(bad.path), Catch::Matchers::ContainsSubstring("shape"));

    j = nlohmann::json::parse(read_text_file(f.path));
    j["params"]["leftover"] = matrix_to_json(Matrix(1, 1));
    write_text_file(bad.path, j.dump());
    REQUIRE_THROWS_WITH(load_checkpoint(bad.path), Catch::Matchers::ContainsSubstring("extra"));
}

TEST_CASE("manifests echo the resolved run", "[io]") {
    TempFile f("manifest.json");
    nlohmann::json cfg;
    cfg["graph"] = "path";
    cfg["size"] = 40;
    write_manifest(f.path, "spread", cfg, {{"fronts.csv", "cbf29ce484222325"}});
    const nlohmann::json j = nlohmann::json::parse(read_text_file(f.path));
    REQUIRE(j.at("format").get<std::string>() == kManifestFormat);
    REQUIRE(j.at("subcommand").get<std::string>() == "spread");
    REQUIRE(j.at("config").at("size").get<int>() == 40);
    REQUIRE(j.at("artifacts").at("fronts.csv").get<std::string>() == "cbf29ce484222325");
}
