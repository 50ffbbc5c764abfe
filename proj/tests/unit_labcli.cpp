#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mtlab/labcli/cli.hpp"
#include "mtlab/labcli/config.hpp"
#include "mtlab/labcli/csv.hpp"
#include "mtlab/labcli/records.hpp"
#include "mtlab/labcli/runner.hpp"
#include "mtlab/labcli/svg.hpp"
#include "mtlab/common/numformat.hpp"
#include "mtlab/mtlnet/serialize.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace mtlab;
using namespace mtlab::labcli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("mtlab-test-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

const char* kSmallConfig = R"({
  "dataset": {
    "tasks": [
      {"id": 0, "head": "classification", "output_dim": 4, "name": "cls"},
      {"id": 1, "head": "regression", "output_dim": 2, "name": "reg"},
      {"id": 2, "head": "unit_vector", "output_dim": 3, "name": "dir"}
    ],
    "input_dim": 10, "train_size": 48, "test_size": 16,
    "rho": 0.8, "latent_dim": 6, "seed": 3
  },
  "models": {"sharing_levels": [0, 2], "widths": [8, 8]},
  "train": {"epochs": 6, "lr": 0.05, "batch_size": 24, "seeds": [0, 1]},
  "attack": {
    "drivers": ["pgd"],
    "combiners": ["single-0", "total", "balanced"],
    "epsilons": ["0", "8/255"],
    "n_iter": 5
  },
  "fat": {"defenses": ["balanced"], "inner_steps": 3, "epochs": 6, "eval_iters": 5},
  "diagnose": {"epsilon": "8/255", "n_iter": 5}
})";

ExperimentConfig small_config(const fs::path& out) {
    ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::parse(kSmallConfig));
    cfg.out_dir = out.string();
    return cfg;
}

} // namespace

TEST_CASE("epsilon specs accept plain numbers and fraction text") {
    EpsilonSpec a = EpsilonSpec::parse(nlohmann::json::parse("\"8/255\""));
    CHECK(a.value == 8.0 / 255.0);
    CHECK(a.text == "8/255");

    EpsilonSpec b = EpsilonSpec::parse(nlohmann::json(0.05));
    CHECK(b.value == 0.05);
    CHECK(b.text == "0.05");

    EpsilonSpec c = EpsilonSpec::parse(nlohmann::json("0.125"));
    CHECK(c.value == 0.125);

    CHECK_THROWS_AS(EpsilonSpec::parse(nlohmann::json("8/0")), std::invalid_argument);
    CHECK_THROWS_AS(EpsilonSpec::parse(nlohmann::json("abc")), std::invalid_argument);
    CHECK_THROWS_AS(EpsilonSpec::parse(nlohmann::json(-0.5)), std::invalid_argument);
}

TEST_CASE("the config hash ignores key order and tracks content") {
    std::uint64_t empty = fnv1a64("");
    CHECK(empty == 14695981039346656037ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);

    nlohmann::json j = nlohmann::json::parse(kSmallConfig);
    ExperimentConfig a = ExperimentConfig::from_json(j);

    // same content, shuffled top-level key order
    nlohmann::json shuffled;
    shuffled["train"] = j["train"];
    shuffled["models"] = j["models"];
    shuffled["fat"] = j["fat"];
    shuffled["attack"] = j["attack"];
    shuffled["diagnose"] = j["diagnose"];
    shuffled["dataset"] = j["dataset"];
    ExperimentConfig b = ExperimentConfig::from_json(shuffled);
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);

    // sharing levels resolve to explicit layouts, so both spellings agree
    nlohmann::json explicit_layouts = j;
    explicit_layouts["models"].erase("sharing_levels");
    explicit_layouts["models"]["layouts"] = {mtlnet::format_layout(a.layouts[0]),
                                             mtlnet::format_layout(a.layouts[1])};
    explicit_layouts["models"]["names"] = {"0L", "2L"};
    CHECK(ExperimentConfig::from_json(explicit_layouts).hash() == a.hash());

    // content changes move the hash
    nlohmann::json changed = j;
    changed["attack"]["n_iter"] = 6;
    CHECK(ExperimentConfig::from_json(changed).hash() != a.hash());

    // the output directory is location, not identity
    ExperimentConfig moved = a;
    moved.out_dir = "elsewhere";
    CHECK(moved.hash() == a.hash());
}

TEST_CASE("config validation rejects malformed grids") {
    nlohmann::json base = nlohmann::json::parse(kSmallConfig);

    nlohmann::json bad = base;
    bad["attack"]["epsilons"] = {"8/255", "1/255"}; // not increasing
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), std::invalid_argument);

    bad = base;
    bad["attack"]["epsilons"] = {"1/255", "1/255"};
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), std::invalid_argument);

    bad = base;
    bad["train"]["seeds"] = {1, 1};
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), std::invalid_argument);

    bad = base;
    bad["attack"]["combiners"] = {"total", "total"};
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), std::invalid_argument);

    bad = base;
    bad["attack"]["combiners"] = {"single-7"};
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), std::invalid_argument);

    bad = base;
    bad["models"]["widths"] = {8}; // sharing level 2 no longer fits the depth
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), std::invalid_argument);
    bad["models"]["sharing_levels"] = {0, 1};
    CHECK_NOTHROW(ExperimentConfig::from_json(bad));
    bad["models"].erase("sharing_levels");
    bad["models"]["layouts"] = {"[[{0, 1, 2}], [{0}, {1}, {2}]]"}; // depth 2 vs widths 1
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), std::invalid_argument);

    bad = base;
    bad["fat"]["model"] = "9L";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), std::invalid_argument);

    bad = base;
    bad.erase("dataset");
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), std::invalid_argument);
}

TEST_CASE("csv tables survive a parse round trip with quoting") {
    CsvTable t;
    t.header = {"name", "value", "note"};
    t.add_row({"plain", "1.5", "ok"});
    t.add_row({"comma,inside", "-0.25", "quote \" inside"});
    t.add_row({"line\nbreak", format_double(1.0 / 3.0), ""});

    std::string text = to_csv(t);
    CsvTable back = parse_csv(text);
    CHECK(back == t);
    CHECK(to_csv(back) == text);
    CHECK(parse_double(back.rows[2][1]) == 1.0 / 3.0);

    CHECK_THROWS_AS(parse_csv("a,b\nc"), std::invalid_argument);      // ragged
    CHECK_THROWS_AS(parse_csv("a,\"b\nc"), std::invalid_argument);    // unterminated
    CHECK_THROWS_AS(parse_csv(""), std::invalid_argument);            // empty
    CHECK_THROWS_AS([&] { CsvTable bad; bad.header = {"a"}; bad.add_row({"x", "y"}); }(),
                    std::invalid_argument);
}

TEST_CASE("line plots are deterministic and contain every series") {
    std::vector<Series> series = {{"alpha & beta", {0, 1, 2}, {0.0, 0.5, 0.25}},
                                  {"<gamma>", {0, 1, 2}, {0.1, 0.1, 0.9}}};
    std::string svg = line_plot_svg("test & plot", "x", "y", series);
    CHECK(svg == line_plot_svg("test & plot", "x", "y", series));
    CHECK(svg.find("<polyline") != std::string::npos);
    std::size_t count = 0;
    for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos;
         pos = svg.find("<polyline", pos + 1))
        ++count;
    CHECK(count == 2);
    CHECK(svg.find("alpha &amp; beta") != std::string::npos);
    CHECK(svg.find("&lt;gamma&gt;") != std::string::npos);
    CHECK(svg.find("test &amp; plot") != std::string::npos);

    CHECK_THROWS_AS(line_plot_svg("t", "x", "y", {}), std::invalid_argument);
}

TEST_CASE("run records stay sorted, resumable, and hash-guarded") {
    fs::path dir = fresh_dir("records");
    RunRecords records;
    records.config_hash = "abc";
    records.tool_version = kToolVersion;

    CellResult cell;
    cell.cell_id = make_cell_id("2L", 1, "pgd", "total", "8/255", 5);
    cell.model = "2L";
    cell.seed = 1;
    cell.driver = "pgd";
    cell.combiner = "total";
    cell.epsilon_text = "8/255";
    cell.epsilon = 8.0 / 255.0;
    cell.n_iter = 5;
    cell.before = {{0, {{"accuracy", true, 0.5}}}};
    cell.after = {{0, {{"accuracy", true, 0.25}}}};
    cell.arp = 50.0;

    CellResult other = cell;
    other.cell_id = make_cell_id("0L", 1, "pgd", "total", "8/255", 5);
    other.model = "0L";

    records.upsert(cell);
    records.upsert(other);
    CHECK(records.cells.front().model == "0L"); // sorted by id
    REQUIRE(records.find(cell.cell_id) != nullptr);
    CHECK(records.find("nope") == nullptr);

    // re-adding the identical cell is a no-op; a conflicting one is an error
    CHECK_NOTHROW(records.upsert(cell));
    CellResult conflict = cell;
    conflict.arp = 1.0;
    CHECK_THROWS_AS(records.upsert(conflict), std::runtime_error);

    save_records(dir / "records.json", records);
    RunRecords loaded = load_records(dir / "records.json", "abc");
    CHECK(loaded.to_json() == records.to_json());
    CHECK_THROWS_AS(load_records(dir / "records.json", "different"), std::runtime_error);
}

TEST_CASE("the grid pipeline trains, attacks, sweeps, and resumes deterministically") {
    fs::path out = fresh_dir("pipeline");
    ExperimentConfig cfg = small_config(out);
    RunPaths paths = RunPaths::for_config(cfg);

    // attacking before training reports the missing checkpoint
    CHECK_THROWS_WITH_AS(run_attack(cfg, nullptr, 1),
                         doctest::Contains("missing checkpoint"), std::runtime_error);

    REQUIRE(run_train(cfg, nullptr) == 0);
    for (const char* name : {"0L", "2L"})
        for (std::uint64_t seed : {0ull, 1ull})
            CHECK(fs::exists(paths.model_file(name, seed)));

    // a rerun keeps the checkpoints byte for byte
    std::string checkpoint = slurp(paths.model_file("2L", 1));
    REQUIRE(run_train(cfg, nullptr) == 0);
    CHECK(slurp(paths.model_file("2L", 1)) == checkpoint);

    REQUIRE(run_attack(cfg, nullptr, 1) == 0);
    std::string records_text = slurp(paths.records_file());
    std::string table_text = slurp(paths.tables_dir() / "attack_arp.csv");

    // zero-budget cells do no damage at all
    CsvTable table = parse_csv(table_text);
    REQUIRE(table.header.size() == 7);
    int zero_rows = 0;
    for (const auto& row : table.rows)
        if (row[3] == "0") {
            for (std::size_t c = 4; c < row.size(); ++c)
                CHECK(parse_double(row[c]) == 0.0);
            ++zero_rows;
        }
    CHECK(zero_rows == 4); // 2 models x 2 seeds

    // a second attack run recomputes nothing and changes nothing
    REQUIRE(run_attack(cfg, nullptr, 1) == 0);
    CHECK(slurp(paths.records_file()) == records_text);

    // wiping the records and redoing the grid reproduces the bytes exactly
    fs::remove(paths.records_file());
    REQUIRE(run_attack(cfg, nullptr, 1) == 0);
    CHECK(slurp(paths.records_file()) == records_text);
    CHECK(slurp(paths.tables_dir() / "attack_arp.csv") == table_text);

    // parallel workers produce the same bytes as one worker
    fs::remove(paths.records_file());
    REQUIRE(run_attack(cfg, nullptr, 3) == 0);
    CHECK(slurp(paths.records_file()) == records_text);

    REQUIRE(run_sweep(cfg, nullptr, 1) == 0);
    CsvTable sweep = parse_csv(slurp(paths.tables_dir() / "sweep_pgd.csv"));
    REQUIRE(sweep.header == std::vector<std::string>{"epsilon", "single-0", "total",
                                                     "balanced"});
    REQUIRE(sweep.rows.size() == 2);
    for (std::size_t c = 1; c < sweep.rows[0].size(); ++c)
        CHECK(parse_double(sweep.rows[0][c]) == 0.0); // eps 0 row
    std::string plot = slurp(paths.plots_dir() / "sweep_pgd.svg");
    std::size_t curves = 0;
    for (std::size_t pos = plot.find("<polyline"); pos != std::string::npos;
         pos = plot.find("<polyline", pos + 1))
        ++curves;
    CHECK(curves == 3); // drivers x combiners = 1 x 3

    REQUIRE(run_diagnose(cfg, nullptr, 1) == 0);
    CsvTable transfer = parse_csv(slurp(paths.tables_dir() / "transferability.csv"));
    REQUIRE(transfer.header ==
            std::vector<std::string>{"model", "single-0", "single-1", "single-2"});
    REQUIRE(transfer.rows.size() == 3); // two models + correlation row
    CHECK(transfer.rows.back().front() == "spearman-vs-position");
    for (std::size_t c = 1; c < transfer.rows[0].size(); ++c) {
        const std::string& cell = transfer.rows[0][c];
        if (cell != "undefined")
            CHECK(parse_double(cell) >= 0.0);
    }
    CHECK(fs::exists(paths.tables_dir() / "dominance.csv"));
    CsvTable align = parse_csv(slurp(paths.tables_dir() / "alignment.csv"));
    CHECK(align.rows.size() == 2 * 2 * 3); // models x seeds x task pairs

    REQUIRE(run_advtrain(cfg, nullptr) == 0);
    CHECK(fs::exists(paths.robust_model_file("balanced", 0)));
    CsvTable robust = parse_csv(slurp(paths.tables_dir() / "robustness.csv"));
    REQUIRE(robust.header ==
            std::vector<std::string>{"defense", "clean_cost", "single-0", "total",
                                     "balanced"});
    REQUIRE(robust.rows.size() == 2); // clean + one defense
    CHECK(robust.rows[0][0] == "clean");
    CHECK(parse_double(robust.rows[0][1]) == 0.0);
    CHECK(robust.rows[1][0] == "balanced");

    REQUIRE(run_report(cfg, nullptr) == 0);
    std::string report = slurp(paths.tables_dir() / "report.md");
    CHECK(report.find("verified against their snapshots") != std::string::npos);
    CHECK(report.find(cfg.hash()) != std::string::npos);
}

TEST_CASE("the command line wires configs, overrides, and errors") {
    fs::path dir = fresh_dir("cli");
    fs::path config_file = dir / "lab.json";
    {
        std::ofstream out(config_file);
        out << kSmallConfig;
    }
    fs::path out_dir = dir / "runs";

    auto call = [&](std::vector<std::string> args) {
        std::vector<const char*> argv = {"mtlab"};
        for (const std::string& a : args)
            argv.push_back(a.c_str());
        return run_cli(static_cast<int>(argv.size()), argv.data());
    };

    // --seed collapses the grid to one training seed
    CHECK(call({"train", "--config", config_file.string(), "--out", out_dir.string(),
                "--seed", "5"}) == 0);
    ExperimentConfig cfg = small_config(out_dir);
    cfg.dataset.seed = 5;
    cfg.train_seeds = {5};
    RunPaths paths = RunPaths::for_config(cfg);
    CHECK(fs::exists(paths.model_file("0L", 5)));
    CHECK(fs::exists(paths.model_file("2L", 5)));
    CHECK(!fs::exists(paths.model_file("0L", 0)));

    CHECK(call({"attack", "--config", config_file.string(), "--out", out_dir.string(),
                "--seed", "5", "--jobs", "2"}) == 0);
    CHECK(fs::exists(paths.tables_dir() / "attack_arp.csv"));

    // errors: no subcommand, missing config file, bad config content
    CHECK(call({"--config", config_file.string()}) != 0);
    CHECK(call({"train", "--config", (dir / "nope.json").string()}) != 0);
    fs::path broken = dir / "broken.json";
    {
        std::ofstream out(broken);
        out << "{\"dataset\": {}}";
    }
    CHECK(call({"train", "--config", broken.string()}) != 0);
}
