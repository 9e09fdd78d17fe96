#include <cmath>

#include "credlab/errors.hpp"
#include "credlab/metrics.hpp"
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

double trapezoid_area(const RocCurve& curve) {
    double area = 0;
    for (std::size_t i = 0; i + 1 < curve.fpr.size(); ++i)
        area += (curve.fpr[i + 1] - curve.fpr[i]) * (curve.tpr[i + 1] + curve.tpr[i]) / 2.0;
    return area;
}

// Independent accuracy-ratio construction from the tie-aware CAP curve.
double lorenz_gini(const PredictionSet& preds) {
    std::vector<std::size_t> order(preds.probabilities.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return preds.probabilities[a] > preds.probabilities[b];
    });
    double total_pos = 0;
    for (int y : preds.labels) total_pos += y;
    const auto n = static_cast<double>(order.size());
    double area = 0, x_prev = 0, y_prev = 0, captured = 0, seen = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        double group_pos = 0;
        while (j < order.size() &&
               preds.probabilities[order[j]] == preds.probabilities[order[i]]) {
            group_pos += preds.labels[order[j]];
            ++j;
        }
        captured += group_pos;
        seen += static_cast<double>(j - i);
        const double x = seen / n, y = captured / total_pos;
        area += (x - x_prev) * (y + y_prev) / 2.0;
        x_prev = x;
        y_prev = y;
        i = j;
    }
    const double pi = total_pos / n;
    return (2.0 * area - 1.0) / (1.0 - pi);
}

}  // namespace

TEST_CASE("reference confusion shares reproduce the stated accuracy") {
    ConfusionMatrix cm;
    cm.tn = 61.23;
    cm.fn = 7.15;
    cm.fp = 6.02;
    cm.tp = 25.60;
    const MetricsReport r = compute_metrics(cm);
    REQUIRE(r.accuracy.has_value());
    CHECK(*r.accuracy == doctest::Approx(0.8683).epsilon(1e-12));
}

TEST_CASE("confusion thresholds are strict and bounded") {
    const PredictionSet preds = make_preds({0.2, 0.5, 0.7, 1.0}, {0, 1, 1, 1});
    const ConfusionMatrix at_half = confusion_at_threshold(preds, 0.5);
    // 0.5 is not > 0.5: boundary values are negatives.
    CHECK(at_half.tp == 2);
    CHECK(at_half.fn == 1);
    const ConfusionMatrix at_one = confusion_at_threshold(preds, 1.0);
    CHECK(at_one.tp == 0);
    CHECK(at_one.fp == 0);
    const ConfusionMatrix at_neg = confusion_at_threshold(preds, -1.0);
    CHECK(at_neg.tn == 0);
    CHECK(at_neg.fn == 0);
    CHECK(at_neg.total() == 4);
}

TEST_CASE("metric formulas") {
    ConfusionMatrix cm;
    cm.tp = cm.tn = cm.fp = cm.fn = 25;
    MetricsReport r = compute_metrics(cm);
    CHECK(*r.precision == doctest::Approx(0.5));
    CHECK(*r.recall == doctest::Approx(0.5));
    CHECK(*r.f_measure == doctest::Approx(0.5));
    CHECK(*r.accuracy == doctest::Approx(0.5));
    CHECK(*r.youden_j == doctest::Approx(0.0));

    cm = ConfusionMatrix{};
    cm.tp = 10;
    cm.fp = 0;
    cm.fn = 5;
    cm.tn = 5;
    r = compute_metrics(cm);
    CHECK(*r.precision == doctest::Approx(1.0));

    cm = ConfusionMatrix{};
    cm.tp = 256;
    cm.fp = 44;
    cm.fn = 94;
    cm.tn = 606;
    r = compute_metrics(cm);
    CHECK(*r.precision == doctest::Approx(0.8533).epsilon(1e-4));
    CHECK(*r.recall == doctest::Approx(0.7314).epsilon(1e-4));
    CHECK(*r.f_measure == doctest::Approx(0.7877).epsilon(1e-4));
    // Youden's J = TPR - FPR.
    CHECK(*r.youden_j == doctest::Approx(*r.recall - *r.fpr));
}

TEST_CASE("undefined metrics stay undefined") {
    ConfusionMatrix cm;
    cm.tn = 4;
    cm.fn = 2;
    const MetricsReport r = compute_metrics(cm);
    CHECK(!r.precision.has_value());
    CHECK(r.recall.has_value());
    CHECK(*r.recall == doctest::Approx(0.0));
}

TEST_CASE("roc_auc on the enumerated example") {
    const PredictionSet preds = make_preds({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1});
    const auto [curve, auc] = roc_auc(preds);
    CHECK(auc == doctest::Approx(0.75));
    CHECK(curve.fpr.front() == 0.0);
    CHECK(curve.tpr.front() == 0.0);
    CHECK(curve.fpr.back() == 1.0);
    CHECK(curve.tpr.back() == 1.0);
}

TEST_CASE("roc_auc boundary cases") {
    CHECK(roc_auc(make_preds({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0})).second == doctest::Approx(1.0));
    CHECK(roc_auc(make_preds({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0})).second == doctest::Approx(0.5));
    CHECK_THROWS_AS(roc_auc(make_preds({0.5, 0.6}, {1, 1})), DataError);
}

TEST_CASE("rank AUC equals trapezoid area with ties") {
    Rng rng(999);
    for (int trial = 0; trial < 50; ++trial) {
        PredictionSet preds;
        const int n = 30 + static_cast<int>(rng.uniform_index(100));
        bool any[2] = {false, false};
        for (int i = 0; i < n; ++i) {
            // Coarse grid creates plenty of ties.
            preds.probabilities.push_back(std::round(rng.uniform() * 8.0) / 8.0);
            const int y = rng.bernoulli(0.4) ? 1 : 0;
            any[y] = true;
            preds.labels.push_back(y);
        }
        if (!any[0] || !any[1]) continue;
        const auto [curve, auc] = roc_auc(preds);
        CHECK(std::abs(auc - trapezoid_area(curve)) < 1e-10);
        for (std::size_t i = 0; i + 1 < curve.fpr.size(); ++i) {
            CHECK(curve.fpr[i + 1] >= curve.fpr[i]);
            CHECK(curve.tpr[i + 1] >= curve.tpr[i]);
        }
    }
}

TEST_CASE("gini identity and Lorenz cross-check") {
    CHECK(gini(make_preds({0.5, 0.5}, {1, 0})) == doctest::Approx(0.0));
    CHECK(gini(make_preds({0.9, 0.1}, {1, 0})) == doctest::Approx(1.0));

    Rng rng(777);
    for (int trial = 0; trial < 20; ++trial) {
        PredictionSet preds;
        bool any[2] = {false, false};
        for (int i = 0; i < 400; ++i) {
            preds.probabilities.push_back(std::round(rng.uniform() * 50.0) / 50.0);
            const int y = rng.bernoulli(0.35) ? 1 : 0;
            any[y] = true;
            preds.labels.push_back(y);
        }
        if (!any[0] || !any[1]) continue;
        CHECK(std::abs(gini(preds) - lorenz_gini(preds)) < 1e-9);
    }
}

TEST_CASE("brier score") {
    CHECK(brier(make_preds({1.0, 0.0}, {1, 0})) == doctest::Approx(0.0));
    CHECK(brier(make_preds({0.5, 0.5}, {1, 0})) == doctest::Approx(0.25));
    CHECK(brier(make_preds({0.8, 0.3}, {1, 0})) == doctest::Approx(0.065));
}

TEST_CASE("cross-entropy values") {
    CHECK(cross_entropy(make_preds({0.5, 0.5}, {0, 1})) == doctest::Approx(std::log(2.0)));
    CHECK(cross_entropy(make_preds({0.9, 0.1}, {1, 0})) == doctest::Approx(0.10536).epsilon(1e-4));
    // Perfect predictions cost at most the clipping floor.
    CHECK(cross_entropy(make_preds({1.0, 0.0}, {1, 0})) <= 1.1e-7);
}

TEST_CASE("bin_by_quantile basics") {
    PredictionSet preds;
    for (int i = 0; i < 10; ++i) {
        preds.probabilities.push_back(i / 10.0);
        preds.labels.push_back(i >= 5 ? 1 : 0);
    }
    const auto one = bin_by_quantile(preds, 1);
    CHECK(one.size() == 1);
    CHECK(one[0].realized_rate == doctest::Approx(0.5));

    const auto each = bin_by_quantile(preds, 10);
    CHECK(each.size() == 10);
    int total = 0;
    double positives = 0;
    for (const auto& b : each) {
        CHECK((b.realized_rate == 0.0 || b.realized_rate == 1.0));
        total += b.count;
        positives += b.realized_rate * b.count;
    }
    CHECK(total == 10);
    CHECK(positives == doctest::Approx(5));
    CHECK_THROWS_AS(bin_by_quantile(preds, 11), DataError);
}

TEST_CASE("spearman hand values") {
    CHECK(spearman({1, 2, 3}, {0.1, 0.3, 0.2}) == doctest::Approx(0.5));
    CHECK(spearman({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
}

TEST_CASE("rank correlation of bins and scores") {
    std::vector<QuantileBin> bins(3);
    for (int i = 0; i < 3; ++i) {
        bins[static_cast<std::size_t>(i)].bin = i;
        bins[static_cast<std::size_t>(i)].realized_rate = 0.1 * (i + 1);
    }
    CHECK(rank_correlation(bins) == doctest::Approx(1.0));
    std::swap(bins[1].realized_rate, bins[2].realized_rate);
    CHECK(rank_correlation(bins) == doctest::Approx(0.5));

    // Higher scores, lower default rates: flipped sign gives +1.
    const std::vector<double> scores = {700, 700, 500, 500, 600, 600};
    const std::vector<int> labels = {0, 0, 1, 1, 1, 0};
    CHECK(score_rank_correlation(scores, labels) == doctest::Approx(1.0));
}

TEST_CASE("rank metrics are invariant under monotone transforms") {
    Rng rng(31);
    PredictionSet preds;
    for (int i = 0; i < 500; ++i) {
        const double p = rng.uniform();
        preds.probabilities.push_back(p);
        preds.labels.push_back(rng.bernoulli(p) ? 1 : 0);
    }
    PredictionSet squared = preds;
    for (double& p : squared.probabilities) p = p * p;
    CHECK(roc_auc(preds).second == doctest::Approx(roc_auc(squared).second).epsilon(1e-12));
    CHECK(gini(preds) == doctest::Approx(gini(squared)).epsilon(1e-12));
}

TEST_CASE("band crosstab on rank-aligned data is diagonal") {
    RiskBandSpec spec = default_risk_bands();
    PredictionSet preds;
    std::vector<double> scores;
    Rng rng(17);
    for (int i = 0; i < 2000; ++i) {
        const double score = 300 + 550 * rng.uniform();
        scores.push_back(score);
        // Perfectly rank-aligned predictions: higher score, lower risk.
        preds.probabilities.push_back(1.0 - (score - 300.0) / 550.0);
        preds.labels.push_back(rng.bernoulli(preds.probabilities.back()) ? 1 : 0);
    }
    const BandCrossTab tab = band_crosstab(preds, scores, spec);
    for (int s = 0; s < spec.n_bands(); ++s) {
        double share_sum = 0;
        for (int k = 0; k < spec.n_bands(); ++k) {
            share_sum += tab.cells[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)].share;
            if (s != k)
                CHECK(tab.cells[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)].share ==
                      doctest::Approx(0.0));
        }
        CHECK(share_sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("default band spec matches the published shares") {
    const RiskBandSpec spec = default_risk_bands();
    spec.validate();
    CHECK(spec.shares[0] == doctest::Approx(0.0648));
    CHECK(spec.shares[1] == doctest::Approx(0.2122));
    CHECK(spec.shares[2] == doctest::Approx(0.1409));
    CHECK(spec.shares[3] == doctest::Approx(0.3331));
    CHECK(spec.shares[4] == doctest::Approx(0.2490));
    CHECK(score_band_of(499, spec) == 0);
    CHECK(score_band_of(500, spec) == 1);
    CHECK(score_band_of(660, spec) == 2);
    CHECK(score_band_of(661, spec) == 3);
    CHECK(score_band_of(781, spec) == 4);
}

TEST_CASE("window metrics single run matches direct computation") {
    PredictionSet preds = make_preds({0.9, 0.2, 0.7, 0.4}, {1, 0, 1, 0});
    preds.current_flag = {1, 1, 0, 1};
    WindowRun run{"2004Q1", "2006Q1", preds};
    const auto reports = metrics_over_windows({run});
    REQUIRE(reports.size() == 1);
    CHECK(*reports[0].accuracy == doctest::Approx(1.0));
    CHECK(reports[0].loss == doctest::Approx(cross_entropy(preds)));
    CHECK(reports[0].data_rate == doctest::Approx(0.5));
    CHECK(reports[0].mean_forecast_delinquent == doctest::Approx(0.8));
    CHECK(reports[0].mean_forecast_non_delinquent == doctest::Approx(0.3));

    const auto current = metrics_over_windows_current({run});
    REQUIRE(current.size() == 1);
    CHECK(current[0].n == 3);
    CHECK(current[0].data_rate == doctest::Approx(1.0 / 3.0));
}
