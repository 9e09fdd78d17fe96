#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(CREDLAB_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) out[entry.path().filename().string()] = slurp(entry.path());
    return out;
}

fs::path write_config(const fs::path& dir, const std::string& out_dir) {
    fs::create_directories(dir);
    const fs::path path = dir / "run.json";
    std::ofstream cfg(path);
    cfg << R"({
  // integration-test run
  "seed": 7,
  "out": ")" << out_dir
        << R"(",
  "data": {"synthetic": {"n_borrowers": 2000, "n_quarters": 10, "base_default_rate": 0.34,
                         "persistence": [0.776, 0.927], "nonlinearity_strength": 2.0}},
  "split": {"mode": "temporal", "train_quarters": [0, 1], "test_quarters": [9], "gap_quarters": 8},
  "models": ["hybrid", "logistic"],
  "dnn": {"hidden": [16, 8], "batch_size": 128, "max_epochs": 25, "patience": 10, "learning_rate": 0.01},
  "gbt": {"n_trees": 60, "max_depth": 4, "learning_rate": 0.1, "early_stopping_rounds": 30},
  "explain": {"n_repeats": 2, "sample_size": 400, "background_size": 30, "n_permutations": 40, "n_instances": 10}
})";
    return path;
}

}  // namespace

TEST_CASE("full pipeline emits every report") {
    const auto start = std::chrono::steady_clock::now();
    const fs::path base = fs::temp_directory_path() / "credlab_cli_full";
    fs::remove_all(base);
    const fs::path config = write_config(base, (base / "out").string());

    REQUIRE(run("synth --config " + config.string()) == 0);
    REQUIRE(run("train --config " + config.string()) == 0);
    REQUIRE(run("evaluate --config " + config.string()) == 0);
    REQUIRE(run("explain --config " + config.string()) == 0);
    REQUIRE(run("value --config " + config.string()) == 0);

    for (const char* name :
         {"panel.csv", "scaling.json", "model_dnn.json", "model_gbt.json", "model_logistic.json",
          "history_dnn.csv", "history_gbt.csv", "metrics_windows.csv", "mean_forecast.csv",
          "metrics_windows_current.csv", "roc_hybrid.csv", "calibration_hybrid.csv",
          "band_crosstab.csv", "rank_correlation.csv", "transition.json", "weight_sweep.csv",
          "permutation_importance.csv", "shap_values.csv", "shap_summary.csv",
          "shap_categories.csv", "shap_groups.json", "va_surface.csv", "comparative_va.csv",
          "aggregate_risk.csv", "borrower_savings.csv", "synth_manifest.json",
          "train_manifest.json", "evaluate_manifest.json", "explain_manifest.json",
          "value_manifest.json"}) {
        CAPTURE(name);
        CHECK(fs::exists(base / "out" / name));
    }
    // 20,000-row panel end to end stays well inside five minutes.
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(elapsed < 300.0);
    fs::remove_all(base);
}

TEST_CASE("pooled split mode runs end to end") {
    const fs::path base = fs::temp_directory_path() / "credlab_cli_pooled";
    fs::remove_all(base);
    fs::create_directories(base);
    const fs::path config = base / "run.json";
    {
        std::ofstream cfg(config);
        cfg << R"({
  "seed": 3,
  "out": ")" << (base / "out").string() << R"(",
  "data": {"synthetic": {"n_borrowers": 600, "n_quarters": 4, "base_default_rate": 0.34,
                         "persistence": [0.776, 0.927], "nonlinearity_strength": 2.0}},
  "split": {"mode": "pooled", "fractions": [0.6, 0.2, 0.2]},
  "models": ["gbt"],
  "gbt": {"n_trees": 40, "max_depth": 3, "learning_rate": 0.1}
})";
    }
    REQUIRE(run("train --config " + config.string()) == 0);
    REQUIRE(run("evaluate --config " + config.string()) == 0);
    CHECK(fs::exists(base / "out" / "metrics_windows.csv"));
    fs::remove_all(base);
}

TEST_CASE("identical config and seed give byte-identical outputs") {
    const fs::path base = fs::temp_directory_path() / "credlab_cli_determinism";
    fs::remove_all(base);
    const fs::path config = write_config(base, (base / "ignored").string());

    for (const char* dir : {"a", "b"}) {
        const std::string out = (base / dir).string();
        REQUIRE(run("synth --config " + config.string() + " --out " + out) == 0);
        REQUIRE(run("train --config " + config.string() + " --out " + out) == 0);
        REQUIRE(run("evaluate --config " + config.string() + " --out " + out) == 0);
        REQUIRE(run("explain --config " + config.string() + " --out " + out) == 0);
        REQUIRE(run("value --config " + config.string() + " --out " + out) == 0);
    }
    const auto a = dir_contents(base / "a");
    const auto b = dir_contents(base / "b");
    REQUIRE(a.size() == b.size());
    for (const auto& [name, content] : a) {
        CAPTURE(name);
        REQUIRE(b.count(name) == 1);
        CHECK(content == b.at(name));
    }
    fs::remove_all(base);
}

TEST_CASE("evaluate before train reports a model error") {
    const fs::path base = fs::temp_directory_path() / "credlab_cli_missing";
    fs::remove_all(base);
    const fs::path config = write_config(base, (base / "out").string());
    CHECK(run("evaluate --config " + config.string()) == 4);
    fs::remove_all(base);
}

TEST_CASE("invalid config exits with the config code") {
    const fs::path base = fs::temp_directory_path() / "credlab_cli_badcfg";
    fs::create_directories(base);
    const fs::path config = base / "bad.json";
    {
        std::ofstream cfg(config);
        cfg << R"({"seed": 1, "out": ")" << (base / "out").string()
            << R"(", "data": {"synthetic": {"n_quarters": 4}}})";  // n_borrowers missing
    }
    CHECK(run("synth --config " + config.string()) == 2);
    CHECK(run("synth --config " + (base / "nonexistent.json").string()) == 2);

    // Both data sources at once is rejected.
    {
        std::ofstream cfg(config);
        cfg << R"({"seed": 1, "out": ")" << (base / "out").string()
            << R"(", "data": {"synthetic": {"n_borrowers": 10, "n_quarters": 4}, "csv": "x.csv"}})";
    }
    CHECK(run("train --config " + config.string()) == 2);
    fs::remove_all(base);
}

TEST_CASE("train consumes the synthesized CSV") {
    const fs::path base = fs::temp_directory_path() / "credlab_cli_csv";
    fs::remove_all(base);
    const fs::path out = base / "out";
    const fs::path config = write_config(base, out.string());
    REQUIRE(run("synth --config " + config.string()) == 0);

    // Second config that reads the emitted CSV instead of regenerating.
    const fs::path config2 = base / "run_csv.json";
    {
        std::ofstream cfg(config2);
        cfg << R"({
  "seed": 7,
  "out": ")" << out.string()
            << R"(",
  "data": {"csv": ")" << (out / "panel.csv").string()
            << R"("},
  "split": {"mode": "temporal", "train_quarters": [0, 1], "test_quarters": [9], "gap_quarters": 8},
  "models": ["gbt"],
  "gbt": {"n_trees": 30, "max_depth": 3, "learning_rate": 0.1}
})";
    }
    REQUIRE(run("train --config " + config2.string()) == 0);
    REQUIRE(run("evaluate --config " + config2.string() + " --model gbt") == 0);
    CHECK(fs::exists(out / "roc_gbt.csv"));
    fs::remove_all(base);
}

TEST_CASE("missing data file exits with the data code") {
    const fs::path base = fs::temp_directory_path() / "credlab_cli_nodata";
    fs::create_directories(base);
    const fs::path config = base / "run.json";
    {
        std::ofstream cfg(config);
        cfg << R"({"seed": 1, "out": ")" << (base / "out").string()
            << R"(", "data": {"csv": "does_not_exist.csv"}, "models": ["gbt"]})";
    }
    CHECK(run("train --config " + config.string()) == 3);
    fs::remove_all(base);
}
