#include <cmath>

#include "credlab/ensemble.hpp"
#include "credlab/errors.hpp"
#include "credlab/rng.hpp"
#include "doctest.h"

using namespace credlab;

namespace {

PredictionSet make_preds(std::vector<double> p, std::vector<int> y) {
    PredictionSet out;
    out.probabilities = std::move(p);
    out.labels = std::move(y);
    return out;
}

}  // namespace

TEST_CASE("blend is the weighted arithmetic mean") {
    CHECK(blend({0.2}, {0.6}, 0.5)[0] == doctest::Approx(0.4));
    CHECK(blend({1.0}, {0.0}, 0.3)[0] == doctest::Approx(0.3));
    const std::vector<double> dnn = {0.1, 0.9, 0.4};
    CHECK(blend(dnn, {0.5, 0.5, 0.5}, 1.0) == dnn);
    CHECK_THROWS_AS(blend({0.1}, {0.1, 0.2}, 0.5), ModelError);
    CHECK_THROWS_AS(blend({0.1}, {0.2}, 1.5), ConfigError);
}

TEST_CASE("hybrid predictions stay between the components") {
    Rng rng(88);
    std::vector<double> a, b;
    for (int i = 0; i < 200; ++i) {
        a.push_back(rng.uniform());
        b.push_back(rng.uniform());
    }
    const std::vector<double> mix = blend(a, b, 0.37);
    for (std::size_t i = 0; i < mix.size(); ++i) {
        CHECK(mix[i] >= std::min(a[i], b[i]) - 1e-15);
        CHECK(mix[i] <= std::max(a[i], b[i]) + 1e-15);
    }
}

TEST_CASE("weight sweep endpoints equal the component losses") {
    Rng rng(89);
    PredictionSet dnn, gbt;
    for (int i = 0; i < 300; ++i) {
        const int y = rng.bernoulli(0.4) ? 1 : 0;
        dnn.labels.push_back(y);
        gbt.labels.push_back(y);
        dnn.probabilities.push_back(std::min(1.0, std::max(0.0, 0.5 + 0.3 * (y - 0.5) + 0.2 * rng.normal())));
        gbt.probabilities.push_back(std::min(1.0, std::max(0.0, 0.5 + 0.3 * (y - 0.5) + 0.2 * rng.normal())));
    }
    const WeightSweepResult sweep = weight_sweep(dnn, gbt, {0.0, 0.5, 1.0});
    CHECK(sweep.rows[0].loss == doctest::Approx(cross_entropy(gbt)));
    CHECK(sweep.rows[2].loss == doctest::Approx(cross_entropy(dnn)));
    CHECK(sweep.rows[1].loss ==
          doctest::Approx(cross_entropy(blend(dnn.probabilities, gbt.probabilities, 0.5),
                                        dnn.labels))
              .epsilon(1e-12));
    CHECK_THROWS_AS(weight_sweep(dnn, gbt, {}), ConfigError);
}

TEST_CASE("identical components make the sweep flat") {
    PredictionSet p = make_preds({0.2, 0.8, 0.6}, {0, 1, 1});
    const WeightSweepResult sweep = weight_sweep(p, p, default_weight_grid());
    for (const auto& row : sweep.rows) CHECK(row.loss == doctest::Approx(sweep.rows[0].loss));
    CHECK(default_weight_grid().size() == 9);
    CHECK(default_weight_grid().front() == doctest::Approx(0.1));
    CHECK(default_weight_grid().back() == doctest::Approx(0.9));
}

TEST_CASE("decorrelated component errors reward an interior weight") {
    Rng rng(90);
    PredictionSet dnn, gbt;
    for (int i = 0; i < 5000; ++i) {
        const int y = rng.bernoulli(0.5) ? 1 : 0;
        dnn.labels.push_back(y);
        gbt.labels.push_back(y);
        const double signal = y == 1 ? 0.72 : 0.28;
        // Independent noise per component creates diversification gains.
        auto noisy = [&](double s) {
            return std::min(0.99, std::max(0.01, s + 0.22 * rng.normal()));
        };
        dnn.probabilities.push_back(noisy(signal));
        gbt.probabilities.push_back(noisy(signal));
    }
    const WeightSweepResult sweep =
        weight_sweep(dnn, gbt, {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
    const double end_min = std::min(sweep.rows.front().loss, sweep.rows.back().loss);
    CHECK(sweep.best_loss < end_min);
    CHECK(sweep.best_weight > 0.0);
    CHECK(sweep.best_weight < 1.0);
}

TEST_CASE("hybrid_predict blends trained component models") {
    SyntheticPanelConfig pc;
    pc.n_borrowers = 400;
    pc.n_quarters = 2;
    pc.seed = 91;
    const ObservationTable panel = synthesize_panel(pc);
    const ScalingParams scaling = compute_scaling(panel);
    const ObservationTable scaled = apply_scaling(panel, scaling);

    NetworkArchitecture arch;
    arch.hidden_sizes = {8};
    NetworkModel dnn = init_network(arch, scaled.n_features(), 1);
    TrainConfig tc;
    tc.batch_size = 128;
    tc.max_epochs = 10;
    tc.patience = 10;
    tc.seed = 1;
    train(dnn, scaled, scaled, tc);
    GbtConfig gc;
    gc.n_trees = 20;
    gc.max_depth = 3;
    const auto [gbt, history] = fit_gbt(scaled, scaled, gc);

    HybridModel hybrid;
    hybrid.dnn = &dnn;
    hybrid.gbt = &gbt;
    hybrid.weight_dnn = 0.3;
    const PredictionSet mix = hybrid_predict(hybrid, scaled);
    const PredictionSet dp = predict_proba(dnn, scaled);
    const PredictionSet gp = predict_tree(gbt, scaled);
    for (int i = 0; i < scaled.n_rows(); ++i) {
        const auto iu = static_cast<std::size_t>(i);
        CHECK(mix.probabilities[iu] ==
              doctest::Approx(0.3 * dp.probabilities[iu] + 0.7 * gp.probabilities[iu])
                  .epsilon(1e-12));
    }
    CHECK(mix.quarter == scaled.quarter);

    // Schema mismatch is rejected.
    Eigen::MatrixXd wrong(2, scaled.n_features() + 1);
    wrong.setZero();
    CHECK_THROWS_AS(hybrid_probabilities(hybrid, wrong), ModelError);
}
