// credlab: configuration-driven pipeline for the consumer-default lab.
// Subcommands: synth | train | evaluate | explain | value.
// Exit codes: 0 success, 2 config error, 3 data error, 4 model error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "credlab/csv.hpp"
#include "credlab/data.hpp"
#include "credlab/economics.hpp"
#include "credlab/ensemble.hpp"
#include "credlab/errors.hpp"
#include "credlab/interpret.hpp"
#include "credlab/metrics.hpp"
#include "credlab/network.hpp"
#include "credlab/rng.hpp"
#include "credlab/serialize.hpp"
#include "credlab/trees.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace credlab;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Options {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string model;
};

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(ss.str())));
    return buf;
}

// Field access with full-path error messages.
const json* find_path(const json& root, const std::string& path) {
    const json* at = &root;
    std::stringstream ss(path);
    std::string key;
    while (std::getline(ss, key, '.')) {
        if (!at->is_object() || !at->contains(key)) return nullptr;
        at = &at->at(key);
    }
    return at;
}

template <typename T>
T require_field(const json& root, const std::string& path) {
    const json* j = find_path(root, path);
    if (j == nullptr) throw ConfigError("config field missing: " + path);
    try {
        return j->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field has the wrong type: " + path);
    }
}

template <typename T>
T field_or(const json& root, const std::string& path, T fallback) {
    const json* j = find_path(root, path);
    if (j == nullptr) return fallback;
    try {
        return j->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field has the wrong type: " + path);
    }
}

struct RunContext {
    json config;
    std::string config_hash;
    std::uint64_t seed = 0;
    fs::path out;
};

RunContext make_context(const Options& opts) {
    RunContext ctx;
    ctx.config = load_config(opts.config_path);
    ctx.config_hash = file_hash(opts.config_path);
    ctx.seed = opts.seed ? *opts.seed : field_or<std::uint64_t>(ctx.config, "seed", 0);
    const std::string out =
        !opts.out_dir.empty() ? opts.out_dir : field_or<std::string>(ctx.config, "out", "");
    if (out.empty()) throw ConfigError("config field missing: out (or pass --out)");
    ctx.out = out;
    fs::create_directories(ctx.out);
    return ctx;
}

SyntheticPanelConfig synth_config_from(const json& config, std::uint64_t seed) {
    SyntheticPanelConfig sc;
    sc.n_borrowers = require_field<int>(config, "data.synthetic.n_borrowers");
    sc.n_quarters = require_field<int>(config, "data.synthetic.n_quarters");
    sc.base_default_rate = field_or<double>(config, "data.synthetic.base_default_rate", 0.34);
    const auto persistence =
        field_or<std::vector<double>>(config, "data.synthetic.persistence", {0.776, 0.927});
    if (persistence.size() != 2)
        throw ConfigError("config field data.synthetic.persistence: expected [p_stay_current, p_stay_default]");
    sc.p_stay_current = persistence[0];
    sc.p_stay_default = persistence[1];
    sc.nonlinearity_strength =
        field_or<double>(config, "data.synthetic.nonlinearity_strength", 1.0);
    sc.rate_ramp = field_or<double>(config, "data.synthetic.rate_ramp", 0.0);
    sc.seed = derive_seed(seed, "panel");
    sc.validate();
    return sc;
}

ObservationTable load_panel(const RunContext& ctx) {
    const bool has_synth = find_path(ctx.config, "data.synthetic") != nullptr;
    const bool has_csv = find_path(ctx.config, "data.csv") != nullptr;
    if (has_synth == has_csv)
        throw ConfigError("config field data: exactly one of data.synthetic or data.csv required");
    if (has_synth) return synthesize_panel(synth_config_from(ctx.config, ctx.seed));
    const std::string path = require_field<std::string>(ctx.config, "data.csv");
    return ingest_csv(path, synthetic_schema());
}

SplitSpec split_spec_from(const json& config, std::uint64_t seed) {
    SplitSpec spec;
    const std::string mode = field_or<std::string>(config, "split.mode", "temporal");
    if (mode == "temporal")
        spec.mode = SplitMode::Temporal;
    else if (mode == "pooled")
        spec.mode = SplitMode::Pooled;
    else
        throw ConfigError("config field split.mode: expected temporal|pooled");
    const auto train_q = field_or<std::vector<int>>(config, "split.train_quarters", {0});
    const auto test_q = field_or<std::vector<int>>(config, "split.test_quarters", {8});
    spec.train_quarters.insert(train_q.begin(), train_q.end());
    spec.test_quarters.insert(test_q.begin(), test_q.end());
    spec.gap_quarters = field_or<int>(config, "split.gap_quarters", 8);
    spec.validation_fraction = field_or<double>(config, "split.validation_fraction", 0.2);
    const auto fractions =
        field_or<std::vector<double>>(config, "split.fractions", {0.6, 0.2, 0.2});
    if (fractions.size() != 3)
        throw ConfigError("config field split.fractions: expected [train, validation, test]");
    spec.fractions[0] = fractions[0];
    spec.fractions[1] = fractions[1];
    spec.fractions[2] = fractions[2];
    spec.seed = derive_seed(seed, "split");
    return spec;
}

std::vector<std::string> models_from(const RunContext& ctx, const Options& opts) {
    std::vector<std::string> models;
    if (!opts.model.empty())
        models.push_back(opts.model);
    else
        models = field_or<std::vector<std::string>>(ctx.config, "models", {"hybrid"});
    const std::set<std::string> known = {"dnn", "gbt", "cart", "forest", "logistic", "hybrid"};
    for (const auto& m : models)
        if (!known.count(m)) throw ConfigError("config field models: unknown model " + m);
    return models;
}

void write_manifest(const RunContext& ctx, const std::string& command,
                    const std::vector<std::string>& outputs) {
    json manifest;
    manifest["command"] = command;
    manifest["config_hash"] = ctx.config_hash;
    manifest["seed"] = ctx.seed;
    manifest["version"] = kVersion;
    manifest["outputs"] = outputs;
    std::ofstream out(ctx.out / (command + "_manifest.json"));
    out << manifest.dump(2) << '\n';
}

std::string fmt(double v) { return csv::format_double(v); }
std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

std::string window_label(const std::set<int>& quarters) {
    if (quarters.empty()) return "";
    const int lo = *quarters.begin(), hi = *quarters.rbegin();
    if (lo == hi) return "Q" + std::to_string(lo);
    return "Q" + std::to_string(lo) + "-Q" + std::to_string(hi);
}

// --------------------------------------------------------------------------
// Model bundle: train/load/predict for every supported model name.
// --------------------------------------------------------------------------

struct TrainedModels {
    std::optional<NetworkModel> dnn;
    std::optional<NetworkModel> logistic;
    std::optional<TreeEnsembleModel> gbt;
    std::optional<TreeEnsembleModel> cart;
    std::optional<TreeEnsembleModel> forest;
    double hybrid_weight = 0.5;
    ScalingParams scaling;
};

NetworkArchitecture dnn_arch_from(const json& config, TrainConfig& train_cfg) {
    NetworkArchitecture arch;
    const std::string preset = field_or<std::string>(config, "dnn.preset", "");
    if (!preset.empty()) {
        const DnnPreset p = dnn_preset(preset);
        arch = p.arch;
        train_cfg = p.train;
    } else {
        arch.hidden_sizes = field_or<std::vector<int>>(config, "dnn.hidden", {32, 16});
        arch.activation =
            activation_from_string(field_or<std::string>(config, "dnn.activation", "relu"));
        arch.dropout_rate = field_or<double>(config, "dnn.dropout", 0.0);
        arch.use_batchnorm = field_or<bool>(config, "dnn.batchnorm", false);
    }
    train_cfg.batch_size = field_or<int>(config, "dnn.batch_size", train_cfg.batch_size);
    train_cfg.max_epochs = field_or<int>(config, "dnn.max_epochs", train_cfg.max_epochs);
    train_cfg.patience = field_or<int>(config, "dnn.patience", train_cfg.patience);
    train_cfg.learning_rate =
        field_or<double>(config, "dnn.learning_rate", train_cfg.learning_rate);
    return arch;
}

GbtConfig gbt_config_from(const json& config, std::uint64_t seed) {
    GbtConfig gc;
    const std::string preset = field_or<std::string>(config, "gbt.preset", "");
    if (!preset.empty()) gc = gbt_preset(preset);
    gc.n_trees = field_or<int>(config, "gbt.n_trees", gc.n_trees);
    gc.max_depth = field_or<int>(config, "gbt.max_depth", gc.max_depth);
    gc.learning_rate = field_or<double>(config, "gbt.learning_rate", gc.learning_rate);
    gc.max_bins = field_or<int>(config, "gbt.max_bins", gc.max_bins);
    gc.min_child_weight = field_or<double>(config, "gbt.min_child_weight", gc.min_child_weight);
    gc.early_stopping_rounds =
        field_or<int>(config, "gbt.early_stopping_rounds", gc.early_stopping_rounds);
    gc.seed = derive_seed(seed, "gbt");
    return gc;
}

void write_epoch_history(const TrainHistory& history, const std::string& path) {
    csv::Writer w(path);
    w.write_row({"epoch", "train_loss", "validation_loss"});
    for (const auto& e : history.epochs)
        w.write_row({std::to_string(e.epoch), fmt(e.train_loss), fmt(e.validation_loss)});
}

void write_round_history(const GbtHistory& history, const std::string& path) {
    csv::Writer w(path);
    w.write_row({"round", "train_loss", "validation_loss"});
    for (std::size_t r = 0; r < history.train_loss.size(); ++r)
        w.write_row({std::to_string(r), fmt(history.train_loss[r]),
                     r < history.validation_loss.size() ? fmt(history.validation_loss[r]) : ""});
}

std::set<std::string> expand_models(const std::vector<std::string>& models) {
    std::set<std::string> need(models.begin(), models.end());
    if (need.count("hybrid")) {
        need.insert("dnn");
        need.insert("gbt");
    }
    return need;
}

TrainedModels load_models(const RunContext& ctx, const std::set<std::string>& need) {
    TrainedModels loaded;
    loaded.hybrid_weight = field_or<double>(ctx.config, "hybrid.weight_dnn", 0.5);
    bool have_scaling = false;
    auto path_of = [&](const std::string& name) {
        const fs::path p = ctx.out / ("model_" + name + ".json");
        if (!fs::exists(p))
            throw ModelError("missing model file " + p.string() + " (run `credlab train` first)");
        return p.string();
    };
    for (const auto& name : need) {
        if (name == "hybrid") continue;
        if (name == "dnn") {
            auto [model, scaling] = load_network(path_of(name));
            loaded.dnn = std::move(model);
            loaded.scaling = scaling;
            have_scaling = true;
        } else if (name == "logistic") {
            auto [model, scaling] = load_network(path_of(name));
            loaded.logistic = std::move(model);
            loaded.scaling = scaling;
            have_scaling = true;
        } else {
            auto [model, scaling] = load_tree_ensemble(path_of(name));
            if (name == "gbt") loaded.gbt = std::move(model);
            if (name == "cart") loaded.cart = std::move(model);
            if (name == "forest") loaded.forest = std::move(model);
            loaded.scaling = scaling;
            have_scaling = true;
        }
    }
    if (!have_scaling) throw ModelError("no models requested");
    return loaded;
}

PredictFn predictor_for(TrainedModels& models, const std::string& name) {
    if (name == "dnn" || name == "logistic") {
        const NetworkModel* net = name == "dnn" ? &*models.dnn : &*models.logistic;
        return [net](const Eigen::MatrixXd& rows) { return predict_probabilities(*net, rows); };
    }
    if (name == "hybrid") {
        const NetworkModel* net = &*models.dnn;
        const TreeEnsembleModel* gbt = &*models.gbt;
        const double w = models.hybrid_weight;
        return [net, gbt, w](const Eigen::MatrixXd& rows) {
            return blend(predict_probabilities(*net, rows), predict_tree_probabilities(*gbt, rows), w);
        };
    }
    const TreeEnsembleModel* trees = nullptr;
    if (name == "gbt") trees = &*models.gbt;
    if (name == "cart") trees = &*models.cart;
    if (name == "forest") trees = &*models.forest;
    if (trees == nullptr) throw ModelError("model not loaded: " + name);
    return [trees](const Eigen::MatrixXd& rows) { return predict_tree_probabilities(*trees, rows); };
}

PredictionSet predictions_for(TrainedModels& models, const std::string& name,
                              const ObservationTable& scaled_table) {
    PredictionSet out;
    out.probabilities = predictor_for(models, name)(scaled_table.rows);
    out.labels = scaled_table.labels;
    out.quarter = scaled_table.quarter;
    out.current_flag = scaled_table.current_flag;
    return out;
}

// --------------------------------------------------------------------------
// Subcommands
// --------------------------------------------------------------------------

int cmd_synth(const Options& opts) {
    const RunContext ctx = make_context(opts);
    const SyntheticPanelConfig sc = synth_config_from(ctx.config, ctx.seed);
    const ObservationTable panel = synthesize_panel(sc);
    const std::string panel_path = (ctx.out / "panel.csv").string();
    emit_csv(panel, panel_path);
    write_manifest(ctx, "synth", {"panel.csv"});
    std::cout << "wrote " << panel_path << " (" << panel.n_rows() << " rows)\n";
    return 0;
}

int cmd_train(const Options& opts) {
    const RunContext ctx = make_context(opts);
    const ObservationTable panel = load_panel(ctx);
    const SplitResult split = make_split(panel, split_spec_from(ctx.config, ctx.seed));
    const ScalingParams scaling = compute_scaling(split.train);
    const ObservationTable train_scaled = apply_scaling(split.train, scaling);
    const ObservationTable val_scaled = apply_scaling(split.validation, scaling);

    save_scaling(scaling, (ctx.out / "scaling.json").string());
    std::vector<std::string> outputs = {"scaling.json"};

    const std::set<std::string> need = expand_models(models_from(ctx, opts));
    for (const auto& name : need) {
        if (name == "hybrid") continue;
        std::cout << "training " << name << "...\n";
        if (name == "dnn" || name == "logistic") {
            TrainConfig tc;
            NetworkArchitecture arch;
            if (name == "dnn") {
                arch = dnn_arch_from(ctx.config, tc);
            } else {
                tc.batch_size = field_or<int>(ctx.config, "logistic.batch_size", 512);
                tc.max_epochs = field_or<int>(ctx.config, "logistic.max_epochs", 300);
                tc.patience = field_or<int>(ctx.config, "logistic.patience", 50);
                tc.learning_rate = field_or<double>(ctx.config, "logistic.learning_rate", 0.01);
            }
            tc.seed = derive_seed(ctx.seed, "train-" + name);
            NetworkModel model =
                init_network(arch, train_scaled.n_features(), derive_seed(ctx.seed, "init-" + name));
            const TrainHistory history = train(model, train_scaled, val_scaled, tc);
            save_network(model, scaling, (ctx.out / ("model_" + name + ".json")).string());
            write_epoch_history(history, (ctx.out / ("history_" + name + ".csv")).string());
        } else if (name == "gbt") {
            const auto [model, history] =
                fit_gbt(train_scaled, val_scaled, gbt_config_from(ctx.config, ctx.seed));
            save_tree_ensemble(model, scaling, (ctx.out / "model_gbt.json").string());
            write_round_history(history, (ctx.out / "history_gbt.csv").string());
        } else if (name == "cart") {
            const TreeEnsembleModel model =
                fit_cart(train_scaled, field_or<int>(ctx.config, "cart.max_depth", 7),
                         field_or<int>(ctx.config, "cart.min_leaf", 5));
            save_tree_ensemble(model, scaling, (ctx.out / "model_cart.json").string());
        } else if (name == "forest") {
            RfConfig rc;
            rc.n_trees = field_or<int>(ctx.config, "forest.n_trees", 100);
            rc.max_depth = field_or<int>(ctx.config, "forest.max_depth", 12);
            rc.min_leaf = field_or<int>(ctx.config, "forest.min_leaf", 1);
            rc.seed = derive_seed(ctx.seed, "forest");
            const TreeEnsembleModel model = fit_random_forest(train_scaled, rc);
            save_tree_ensemble(model, scaling, (ctx.out / "model_forest.json").string());
        }
        outputs.push_back("model_" + name + ".json");
    }
    write_manifest(ctx, "train", outputs);
    return 0;
}

int cmd_evaluate(const Options& opts) {
    const RunContext ctx = make_context(opts);
    const ObservationTable panel = load_panel(ctx);
    const SplitSpec split_spec = split_spec_from(ctx.config, ctx.seed);
    const SplitResult split = make_split(panel, split_spec);
    const std::vector<std::string> models = models_from(ctx, opts);
    TrainedModels loaded = load_models(ctx, expand_models(models));
    const ObservationTable test_scaled = apply_scaling(split.test, loaded.scaling);
    const double threshold = field_or<double>(ctx.config, "evaluate.threshold", 0.5);

    const std::string train_label = split_spec.mode == SplitMode::Temporal
                                        ? window_label(split_spec.train_quarters)
                                        : "pooled";
    const std::string test_label = split_spec.mode == SplitMode::Temporal
                                       ? window_label(split_spec.test_quarters)
                                       : "pooled";

    std::vector<std::string> outputs;
    std::map<std::string, PredictionSet> preds;
    for (const auto& name : models) preds[name] = predictions_for(loaded, name, test_scaled);

    // One pooled row per model plus a per-quarter breakdown when the test
    // window spans several quarters.
    auto window_runs = [&](const std::string& model_name) {
        std::vector<WindowRun> runs = {{train_label, test_label, preds[model_name]}};
        const PredictionSet& p = preds[model_name];
        std::map<int, PredictionSet> by_quarter;
        for (std::size_t i = 0; i < p.probabilities.size(); ++i) {
            PredictionSet& q = by_quarter[p.quarter[i]];
            q.probabilities.push_back(p.probabilities[i]);
            q.labels.push_back(p.labels[i]);
            q.quarter.push_back(p.quarter[i]);
            q.current_flag.push_back(p.current_flag[i]);
        }
        if (by_quarter.size() > 1)
            for (auto& [quarter, set] : by_quarter)
                runs.push_back({train_label, "Q" + std::to_string(quarter), std::move(set)});
        return runs;
    };

    {
        csv::Writer w((ctx.out / "metrics_windows.csv").string());
        w.write_row({"model", "training_window", "testing_window", "auc", "precision", "recall",
                     "f_measure", "accuracy", "loss"});
        json rows = json::array();
        for (const auto& name : models) {
            for (const WindowReport& r : metrics_over_windows(window_runs(name), threshold)) {
                w.write_row({name, r.train_window, r.test_window, fmt_opt(r.auc),
                             fmt_opt(r.precision), fmt_opt(r.recall), fmt_opt(r.f_measure),
                             fmt_opt(r.accuracy), fmt(r.loss)});
                auto opt = [](const std::optional<double>& v) {
                    return v ? json(*v) : json(nullptr);
                };
                rows.push_back({{"model", name},
                                {"training_window", r.train_window},
                                {"testing_window", r.test_window},
                                {"auc", opt(r.auc)},
                                {"precision", opt(r.precision)},
                                {"recall", opt(r.recall)},
                                {"f_measure", opt(r.f_measure)},
                                {"accuracy", opt(r.accuracy)},
                                {"loss", r.loss}});
            }
        }
        std::ofstream jf(ctx.out / "metrics_windows.json");
        jf << rows.dump(2) << '\n';
        outputs.push_back("metrics_windows.csv");
        outputs.push_back("metrics_windows.json");
    }
    {
        csv::Writer w((ctx.out / "mean_forecast.csv").string());
        w.write_row({"model", "training_window", "testing_window", "data", "predicted",
                     "delinquents", "non_delinquents"});
        for (const auto& name : models) {
            for (const WindowReport& r : metrics_over_windows(window_runs(name), threshold))
                w.write_row({name, r.train_window, r.test_window, fmt(r.data_rate),
                             fmt(r.predicted_rate), fmt(r.mean_forecast_delinquent),
                             fmt(r.mean_forecast_non_delinquent)});
        }
        outputs.push_back("mean_forecast.csv");
    }
    if (field_or<bool>(ctx.config, "evaluate.current_only", true)) {
        csv::Writer w((ctx.out / "metrics_windows_current.csv").string());
        w.write_row({"model", "training_window", "testing_window", "auc", "precision", "recall",
                     "f_measure", "accuracy", "loss"});
        for (const auto& name : models) {
            for (const WindowReport& r : metrics_over_windows_current(window_runs(name), threshold))
                w.write_row({name, r.train_window, r.test_window, fmt_opt(r.auc),
                             fmt_opt(r.precision), fmt_opt(r.recall), fmt_opt(r.f_measure),
                             fmt_opt(r.accuracy), fmt(r.loss)});
        }
        outputs.push_back("metrics_windows_current.csv");
    }
    for (const auto& name : models) {
        const auto [curve, auc] = roc_auc(preds[name]);
        csv::Writer w((ctx.out / ("roc_" + name + ".csv")).string());
        w.write_row({"fpr", "tpr"});
        for (std::size_t i = 0; i < curve.fpr.size(); ++i)
            w.write_row({fmt(curve.fpr[i]), fmt(curve.tpr[i])});
        outputs.push_back("roc_" + name + ".csv");
    }
    {
        const int bins = field_or<int>(ctx.config, "evaluate.calibration_bins", 20);
        for (const auto& name : models) {
            const auto table = bin_by_quantile(preds[name], std::min(bins, preds[name].size()));
            csv::Writer w((ctx.out / ("calibration_" + name + ".csv")).string());
            w.write_row({"bin", "mean_prediction", "realized_rate", "count"});
            for (const auto& b : table)
                w.write_row({std::to_string(b.bin), fmt(b.mean_prediction), fmt(b.realized_rate),
                             std::to_string(b.count)});
            outputs.push_back("calibration_" + name + ".csv");
        }
    }
    if (!split.test.credit_score.empty()) {
        const std::string primary = models.front();
        const BandCrossTab tab =
            band_crosstab(preds[primary], split.test.credit_score, default_risk_bands());
        csv::Writer w((ctx.out / "band_crosstab.csv").string());
        w.write_row({"score_band", "score_band_share", "prediction_band", "share",
                     "realized_rate", "predicted_rate", "band_realized", "band_predicted"});
        for (int s = 0; s < tab.spec.n_bands(); ++s) {
            for (int k = 0; k < tab.spec.n_bands(); ++k) {
                const CrossTabCell& cell = tab.cells[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)];
                w.write_row({tab.spec.band_names[static_cast<std::size_t>(s)],
                             fmt(tab.score_band_share[static_cast<std::size_t>(s)]),
                             std::to_string(k + 1),
                             cell.empty ? "" : fmt(cell.share),
                             cell.empty ? "" : fmt(cell.realized_rate),
                             cell.empty ? "" : fmt(cell.predicted_rate),
                             fmt(tab.score_band_realized[static_cast<std::size_t>(s)]),
                             fmt(tab.score_band_predicted[static_cast<std::size_t>(s)])});
            }
        }
        outputs.push_back("band_crosstab.csv");

        // Rank correlations in the score-comparison layout.
        csv::Writer rc((ctx.out / "rank_correlation.csv").string());
        rc.write_row({"metric", "credit_score", "predicted_probability"});
        const double score_rank =
            score_rank_correlation(split.test.credit_score, split.test.labels);
        std::set<double> unique_scores(split.test.credit_score.begin(),
                                       split.test.credit_score.end());
        const int n_bins = std::min<int>(static_cast<int>(unique_scores.size()),
                                         preds[primary].size());
        const double pred_rank =
            rank_correlation(bin_by_quantile(preds[primary], n_bins));
        rc.write_row({"rank_correlation", fmt(score_rank), fmt(pred_rank)});
        PredictionSet score_preds;
        for (std::size_t i = 0; i < split.test.credit_score.size(); ++i) {
            // Rescale scores into [0,1] risk order (higher score = lower risk).
            score_preds.probabilities.push_back(1.0 - (split.test.credit_score[i] - 300.0) / 550.0);
            score_preds.labels.push_back(split.test.labels[i]);
        }
        rc.write_row({"gini", fmt(gini(score_preds)), fmt(gini(preds[primary]))});
        outputs.push_back("rank_correlation.csv");
    }
    {
        const TransitionMatrix tm = compute_transition_matrix(panel);
        save_transition_matrix(tm, (ctx.out / "transition.json").string());
        outputs.push_back("transition.json");
    }
    if (loaded.dnn && loaded.gbt) {
        const auto grid = field_or<std::vector<double>>(ctx.config, "evaluate.weight_grid",
                                                        default_weight_grid());
        const PredictionSet dnn_preds = predictions_for(loaded, "dnn", test_scaled);
        const PredictionSet gbt_preds = predictions_for(loaded, "gbt", test_scaled);
        const WeightSweepResult sweep = weight_sweep(dnn_preds, gbt_preds, grid);
        csv::Writer w((ctx.out / "weight_sweep.csv").string());
        w.write_row({"weight_dnn", "loss"});
        for (const auto& row : sweep.rows) w.write_row({fmt(row.weight_dnn), fmt(row.loss)});
        outputs.push_back("weight_sweep.csv");
    }
    write_manifest(ctx, "evaluate", outputs);
    return 0;
}

int cmd_explain(const Options& opts) {
    const RunContext ctx = make_context(opts);
    const ObservationTable panel = load_panel(ctx);
    const SplitResult split = make_split(panel, split_spec_from(ctx.config, ctx.seed));
    const std::string model_name = !opts.model.empty()
                                       ? opts.model
                                       : field_or<std::string>(ctx.config, "explain.model", "hybrid");
    TrainedModels loaded = load_models(ctx, expand_models({model_name}));
    const ObservationTable test_scaled = apply_scaling(split.test, loaded.scaling);
    const ObservationTable train_scaled = apply_scaling(split.train, loaded.scaling);
    const PredictFn fn = predictor_for(loaded, model_name);
    std::vector<std::string> outputs;

    const int n_repeats = field_or<int>(ctx.config, "explain.n_repeats", 10);
    const int sample_size = std::min<int>(
        field_or<int>(ctx.config, "explain.sample_size", 100000), test_scaled.n_rows());
    const double group_threshold = field_or<double>(ctx.config, "explain.group_threshold", 0.7);

    const FeatureGrouping grouping = group_features(train_scaled, group_threshold);
    {
        json groups_json = json::array();
        for (const auto& g : grouping.groups) {
            json members = json::array();
            for (int f : g.features)
                members.push_back(panel.schema.names[static_cast<std::size_t>(f)]);
            groups_json.push_back({{"label", g.label}, {"features", members}});
        }
        std::ofstream out(ctx.out / "shap_groups.json");
        out << groups_json.dump(2) << '\n';
        outputs.push_back("shap_groups.json");
    }
    {
        const ImportanceReport report = permutation_importance(
            fn, test_scaled, n_repeats, sample_size, derive_seed(ctx.seed, "perm"),
            field_or<double>(ctx.config, "evaluate.threshold", 0.5), grouping.groups);
        csv::Writer w((ctx.out / "permutation_importance.csv").string());
        w.write_row({"feature", "loss", "accuracy"});
        w.write_row({"baseline", fmt(report.baseline_loss), fmt(report.baseline_accuracy)});
        for (const auto& e : report.entries)
            w.write_row({e.name, fmt(e.loss_after), fmt(e.accuracy_after)});
        outputs.push_back("permutation_importance.csv");
    }
    {
        const int background_size =
            std::min(field_or<int>(ctx.config, "explain.background_size", 100),
                     train_scaled.n_rows());
        const int n_instances =
            std::min(field_or<int>(ctx.config, "explain.n_instances", 100), test_scaled.n_rows());
        const int n_permutations = field_or<int>(ctx.config, "explain.n_permutations", 200);
        const Eigen::MatrixXd background =
            sample_background(train_scaled, background_size, derive_seed(ctx.seed, "background"));
        Rng pick(derive_seed(ctx.seed, "instances"));
        std::vector<int> rows = pick.sample_without_replacement(test_scaled.n_rows(), n_instances);
        std::sort(rows.begin(), rows.end());
        Eigen::MatrixXd instances(n_instances, test_scaled.n_features());
        for (int i = 0; i < n_instances; ++i)
            instances.row(i) = test_scaled.rows.row(rows[static_cast<std::size_t>(i)]);

        std::vector<ShapExplanation> explanations;
        if (model_name == "hybrid") {
            // Component explanations averaged per instance and feature.
            const PredictFn dnn_fn = predictor_for(loaded, "dnn");
            const PredictFn gbt_fn = predictor_for(loaded, "gbt");
            const auto dnn_expl = shapley_sampled(dnn_fn, instances, background, n_permutations,
                                                  derive_seed(ctx.seed, "shap-dnn"));
            const auto gbt_expl = shapley_sampled(gbt_fn, instances, background, n_permutations,
                                                  derive_seed(ctx.seed, "shap-gbt"));
            for (std::size_t i = 0; i < dnn_expl.size(); ++i)
                explanations.push_back(
                    hybrid_shap(dnn_expl[i], gbt_expl[i], loaded.hybrid_weight));
        } else {
            explanations = shapley_sampled(fn, instances, background, n_permutations,
                                           derive_seed(ctx.seed, "shap"));
        }

        csv::Writer w((ctx.out / "shap_values.csv").string());
        std::vector<std::string> header = {"instance", "base_value", "prediction"};
        for (const auto& name : panel.schema.names) header.push_back(name);
        w.write_row(header);
        for (std::size_t i = 0; i < explanations.size(); ++i) {
            std::vector<std::string> row = {std::to_string(rows[i]),
                                            fmt(explanations[i].base_value),
                                            fmt(explanations[i].prediction)};
            for (double phi : explanations[i].phi) row.push_back(fmt(phi));
            w.write_row(row);
        }
        outputs.push_back("shap_values.csv");

        const auto ranked = aggregate_shap(explanations, panel.schema, grouping,
                                           ShapAggregation::MeanAbs);
        csv::Writer rw((ctx.out / "shap_summary.csv").string());
        rw.write_row({"label", "mean_abs_shap", "rank"});
        for (const auto& row : ranked)
            rw.write_row({row.label, fmt(row.value), std::to_string(row.rank)});
        outputs.push_back("shap_summary.csv");

        // Score-factor category shares normalized to 1.
        FeatureGrouping categories;
        std::map<std::string, FeatureGroup> by_label;
        for (int f = 0; f < panel.schema.size(); ++f) {
            if (panel.schema.groups.empty()) break;
            const std::string& label = panel.schema.groups[static_cast<std::size_t>(f)];
            if (label.empty()) continue;
            by_label[label].label = label;
            by_label[label].features.push_back(f);
        }
        if (!by_label.empty()) {
            for (auto& [label, group] : by_label) categories.groups.push_back(group);
            const auto shares = aggregate_shap(explanations, panel.schema, categories,
                                               ShapAggregation::SumAbs, true);
            csv::Writer cw((ctx.out / "shap_categories.csv").string());
            cw.write_row({"category", "n_features", "share"});
            for (const auto& row : shares)
                cw.write_row({row.label, std::to_string(row.features.size()), fmt(row.share)});
            outputs.push_back("shap_categories.csv");
        }
    }
    write_manifest(ctx, "explain", outputs);
    return 0;
}

int cmd_value(const Options& opts) {
    const RunContext ctx = make_context(opts);
    const ObservationTable panel = load_panel(ctx);
    const SplitResult split = make_split(panel, split_spec_from(ctx.config, ctx.seed));
    const std::string model_name =
        !opts.model.empty() ? opts.model : field_or<std::string>(ctx.config, "value.model", "hybrid");
    const std::string comparison =
        field_or<std::string>(ctx.config, "value.comparison_model", "logistic");
    TrainedModels loaded = load_models(ctx, expand_models({model_name, comparison}));
    const ObservationTable test_scaled = apply_scaling(split.test, loaded.scaling);
    const double threshold = field_or<double>(ctx.config, "evaluate.threshold", 0.5);
    std::vector<std::string> outputs;

    const PredictionSet preds = predictions_for(loaded, model_name, test_scaled);
    const ConfusionMatrix cm = confusion_at_threshold(preds, threshold);
    const auto r_grid = field_or<std::vector<double>>(
        ctx.config, "value.r_grid", {0.02, 0.04, 0.06, 0.08, 0.10, 0.12, 0.15, 0.20});
    const auto runup_grid = field_or<std::vector<double>>(
        ctx.config, "value.runup_grid", {1.05, 1.1, 1.2, 1.3, 1.5, 2.0, 3.0});
    const int years = field_or<int>(ctx.config, "value.amortization_years", 3);

    {
        const ValueAddedSurface surface = value_added_surface(cm, r_grid, runup_grid, years);
        csv::Writer w((ctx.out / "va_surface.csv").string());
        w.write_row({"r", "runup", "va"});
        for (std::size_t i = 0; i < r_grid.size(); ++i)
            for (std::size_t j = 0; j < runup_grid.size(); ++j)
                w.write_row({fmt(r_grid[i]), fmt(runup_grid[j]), fmt(surface.va[i][j])});
        outputs.push_back("va_surface.csv");

        csv::Writer m((ctx.out / "va_surface_matrix.csv").string());
        std::vector<std::string> header = {"r\\runup"};
        for (double runup : runup_grid) header.push_back(fmt(runup));
        m.write_row(header);
        for (std::size_t i = 0; i < r_grid.size(); ++i) {
            std::vector<std::string> row = {fmt(r_grid[i])};
            for (std::size_t j = 0; j < runup_grid.size(); ++j) row.push_back(fmt(surface.va[i][j]));
            m.write_row(row);
        }
        outputs.push_back("va_surface_matrix.csv");
    }
    {
        const PredictionSet other = predictions_for(loaded, comparison, test_scaled);
        const ConfusionMatrix cm_other = confusion_at_threshold(other, threshold);
        csv::Writer w((ctx.out / "comparative_va.csv").string());
        w.write_row({"r", "runup", "va_" + model_name, "va_" + comparison, "difference"});
        for (double r : r_grid) {
            for (double runup : runup_grid) {
                ValueAddedParams p;
                p.interest_rate = r;
                p.runup = runup;
                p.amortization_years = years;
                const auto va_a = value_added(cm, p);
                const auto va_b = value_added(cm_other, p);
                w.write_row({fmt(r), fmt(runup), fmt_opt(va_a), fmt_opt(va_b),
                             va_a && va_b ? fmt(*va_a - *va_b) : ""});
            }
        }
        outputs.push_back("comparative_va.csv");
    }
    {
        const AggregateRateSeries series = aggregate_default_rate(preds);
        csv::Writer w((ctx.out / "aggregate_risk.csv").string());
        w.write_row({"quarter", "predicted_rate", "realized_rate"});
        for (const auto& pt : series.points)
            w.write_row({std::to_string(pt.quarter), fmt(pt.predicted_rate), fmt(pt.realized_rate)});
        json corr;
        corr["correlation"] =
            series.correlation ? json(*series.correlation) : json(nullptr);
        std::ofstream cf(ctx.out / "aggregate_risk_correlation.json");
        cf << corr.dump(2) << '\n';
        outputs.push_back("aggregate_risk.csv");
        outputs.push_back("aggregate_risk_correlation.json");
    }
    if (!split.test.credit_score.empty() && !split.test.balance.empty()) {
        SavingsSpec spec = default_savings_spec();
        spec.seed = derive_seed(ctx.seed, "savings");
        const SavingsTable table =
            borrower_savings(split.test.balance, split.test.credit_score, preds, spec);
        csv::Writer w((ctx.out / "borrower_savings.csv").string());
        w.write_row({"prediction_band", "score_band", "mean_rate_diff", "mean_saving", "count"});
        for (int p = 0; p < spec.bands.n_bands(); ++p) {
            for (int s = 0; s < spec.bands.n_bands(); ++s) {
                const SavingsCell& cell = table.cells[static_cast<std::size_t>(p)][static_cast<std::size_t>(s)];
                w.write_row({std::to_string(p + 1), spec.bands.band_names[static_cast<std::size_t>(s)],
                             cell.empty ? "" : fmt(cell.mean_rate_diff),
                             cell.empty ? "" : fmt(cell.mean_saving), std::to_string(cell.count)});
            }
        }
        w.write_row({"total", "", "", fmt(table.cumulative_total), ""});
        outputs.push_back("borrower_savings.csv");
    }
    write_manifest(ctx, "value", outputs);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"credlab: consumer default prediction laboratory"};
    app.require_subcommand(1);
    Options opts;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "run configuration file")->required();
        cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
        cmd->add_option("--seed", opts.seed, "global seed (overrides config)");
        cmd->add_option("--model", opts.model,
                        "model selector: dnn|gbt|cart|forest|logistic|hybrid");
    };
    CLI::App* synth = app.add_subcommand("synth", "synthesize a credit panel");
    CLI::App* train_cmd = app.add_subcommand("train", "train configured models");
    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluation reports");
    CLI::App* explain = app.add_subcommand("explain", "interpretation reports");
    CLI::App* value = app.add_subcommand("value", "economic value reports");
    for (CLI::App* cmd : {synth, train_cmd, evaluate, explain, value}) add_common(cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(opts);
        if (train_cmd->parsed()) return cmd_train(opts);
        if (evaluate->parsed()) return cmd_evaluate(opts);
        if (explain->parsed()) return cmd_explain(opts);
        if (value->parsed()) return cmd_value(opts);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << '\n';
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
