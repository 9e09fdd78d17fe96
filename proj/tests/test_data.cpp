#include <cmath>
#include <cstdio>
#include <fstream>

#include "credlab/csv.hpp"
#include "credlab/data.hpp"
#include "credlab/errors.hpp"
#include "credlab/metrics.hpp"
#include "doctest.h"

using namespace credlab;

namespace {

FeatureSchema two_feature_schema() {
    FeatureSchema s;
    s.names = {"a", "b"};
    s.kinds = {FeatureKind::Continuous, FeatureKind::Continuous};
    return s;
}

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = "./" + name;
    std::ofstream out(path);
    out << content;
    return path;
}

ObservationTable small_table(const std::vector<std::vector<double>>& rows,
                             const std::vector<int>& labels,
                             const std::vector<int>& quarters = {}) {
    ObservationTable t;
    t.schema = two_feature_schema();
    t.schema.names.resize(rows.front().size());
    t.schema.kinds.resize(rows.front().size(), FeatureKind::Continuous);
    for (std::size_t f = 0; f < rows.front().size(); ++f)
        t.schema.names[f] = std::string(1, static_cast<char>('a' + f));
    t.rows.resize(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.rows(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    t.labels = labels;
    t.quarter = quarters.empty() ? std::vector<int>(rows.size(), 0) : quarters;
    t.borrower_id.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) t.borrower_id[i] = static_cast<std::int64_t>(i);
    t.current_flag.assign(rows.size(), 1);
    return t;
}

}  // namespace

TEST_CASE("ingest_csv parses a small file") {
    const std::string path = write_temp(
        "ingest_ok.csv",
        "borrower_id,quarter,current,label,a,b\n1,0,1,0,1.5,2\n2,0,1,1,-0.5,3\n3,1,0,1,0,4\n");
    const ObservationTable t = ingest_csv(path, two_feature_schema());
    CHECK(t.n_rows() == 3);
    CHECK(t.n_features() == 2);
    CHECK(t.rows(0, 0) == doctest::Approx(1.5));
    CHECK(t.labels == std::vector<int>{0, 1, 1});
    CHECK(t.quarter == std::vector<int>{0, 0, 1});
    CHECK(t.current_flag == std::vector<int>{1, 1, 0});
    std::remove(path.c_str());
}

TEST_CASE("ingest_csv missing label column is a schema error") {
    const std::string path =
        write_temp("ingest_missing.csv", "borrower_id,quarter,current,a,b\n1,0,1,1.5,2\n");
    CHECK_THROWS_WITH_AS(ingest_csv(path, two_feature_schema()),
                         doctest::Contains("missing column: label"), SchemaError);
    std::remove(path.c_str());
}

TEST_CASE("ingest_csv cites the offending row for bad cells") {
    const std::string path = write_temp(
        "ingest_parse.csv",
        "borrower_id,quarter,current,label,a,b\n1,0,1,0,1.5,2\n2,0,1,1,abc,3\n");
    CHECK_THROWS_WITH_AS(ingest_csv(path, two_feature_schema()), doctest::Contains("row 2"),
                         ParseError);
    std::remove(path.c_str());
}

TEST_CASE("ingest_csv rejects empty input") {
    const std::string path = write_temp("ingest_empty.csv", "borrower_id,quarter,current,label,a,b\n");
    CHECK_THROWS_AS(ingest_csv(path, two_feature_schema()), DataError);
    std::remove(path.c_str());
}

TEST_CASE("emit then ingest round-trips exactly") {
    SyntheticPanelConfig config;
    config.n_borrowers = 40;
    config.n_quarters = 3;
    config.seed = 7;
    const ObservationTable t = synthesize_panel(config);
    emit_csv(t, "./roundtrip.csv");
    const ObservationTable back = ingest_csv("./roundtrip.csv", t.schema);
    REQUIRE(back.n_rows() == t.n_rows());
    CHECK((back.rows - t.rows).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.labels == t.labels);
    CHECK(back.quarter == t.quarter);
    CHECK(back.credit_score == t.credit_score);
    std::remove("./roundtrip.csv");
}

TEST_CASE("compute_scaling basics") {
    const ObservationTable t = small_table({{1, 5}, {2, 5}, {3, 5}}, {0, 1, 0});
    const ScalingParams p = compute_scaling(t);
    CHECK(p.means(0) == doctest::Approx(2.0));
    CHECK(p.std_devs(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));
    // Constant column gets the sentinel.
    CHECK(p.means(1) == doctest::Approx(5.0));
    CHECK(p.std_devs(1) == 1.0);
}

TEST_CASE("compute_scaling requires two rows") {
    const ObservationTable t = small_table({{1, 2}}, {0});
    CHECK_THROWS_AS(compute_scaling(t), DataError);
}

TEST_CASE("apply_scaling transforms and inverts") {
    ObservationTable t = small_table({{2, 0}, {5, 1}, {-1, 2}}, {0, 1, 0});
    ScalingParams p;
    p.means = Eigen::Vector2d(2.0, 0.0);
    p.std_devs = Eigen::Vector2d(3.0, 1.0);
    const ObservationTable scaled = apply_scaling(t, p);
    CHECK(scaled.rows(0, 0) == doctest::Approx(0.0));
    CHECK(scaled.rows(1, 0) == doctest::Approx(1.0));
    const ObservationTable back = invert_scaling(scaled, p);
    CHECK((back.rows - t.rows).cwiseAbs().maxCoeff() < 1e-12);

    ScalingParams wrong;
    wrong.means = Eigen::VectorXd::Zero(3);
    wrong.std_devs = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(apply_scaling(t, wrong), DataError);
}

TEST_CASE("scaling a scaled table is the identity") {
    SyntheticPanelConfig config;
    config.n_borrowers = 300;
    config.n_quarters = 2;
    config.seed = 3;
    const ObservationTable t = synthesize_panel(config);
    const ScalingParams p = compute_scaling(t);
    const ObservationTable scaled = apply_scaling(t, p);
    const ScalingParams p2 = compute_scaling(scaled);
    for (int f = 0; f < t.n_features(); ++f) {
        CHECK(std::abs(p2.means(f)) < 1e-10);
        if (p.std_devs(f) != 1.0 || std::abs(p.means(f)) > 1e-12)
            CHECK(std::abs(p2.std_devs(f) - 1.0) < 1e-10);
    }
}

TEST_CASE("temporal split honors the 8Q gap") {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels, quarters;
    for (int q : {0, 4, 8}) {
        for (int i = 0; i < 30; ++i) {
            rows.push_back({static_cast<double>(i), static_cast<double>(q)});
            labels.push_back(i % 2);
            quarters.push_back(q);
        }
    }
    const ObservationTable t = small_table(rows, labels, quarters);

    SplitSpec ok;
    ok.mode = SplitMode::Temporal;
    ok.train_quarters = {0};
    ok.test_quarters = {8};
    ok.seed = 5;
    const SplitResult r = make_split(t, ok);
    CHECK(r.train.n_rows() + r.validation.n_rows() == 30);
    CHECK(r.test.n_rows() == 30);
    for (int q : r.test.quarter) CHECK(q == 8);
    for (int q : r.train.quarter) CHECK(q == 0);

    SplitSpec bad = ok;
    bad.test_quarters = {4};
    CHECK_THROWS_AS(make_split(t, bad), SplitError);

    SplitSpec missing = ok;
    missing.train_quarters = {2};
    CHECK_THROWS_AS(make_split(t, missing), SplitError);
}

TEST_CASE("pooled split fractions") {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) {
        rows.push_back({static_cast<double>(i), 0.0});
        labels.push_back(i % 2);
    }
    const ObservationTable t = small_table(rows, labels);
    SplitSpec spec;
    spec.mode = SplitMode::Pooled;
    spec.seed = 11;
    const SplitResult r = make_split(t, spec);
    CHECK(r.train.n_rows() == 6);
    CHECK(r.validation.n_rows() == 2);
    CHECK(r.test.n_rows() == 2);

    // Disjoint partition covering all rows.
    std::vector<std::int64_t> ids;
    for (auto id : r.train.borrower_id) ids.push_back(id);
    for (auto id : r.validation.borrower_id) ids.push_back(id);
    for (auto id : r.test.borrower_id) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i] == static_cast<std::int64_t>(i));
}

TEST_CASE("transition matrix frequencies and errors") {
    ObservationTable t = small_table({{0, 0}, {0, 0}, {0, 0}, {0, 0}}, {0, 1, 1, 1});
    t.current_flag = {1, 1, 0, 0};
    const TransitionMatrix m = compute_transition_matrix(t);
    CHECK(m.p[0][0] == doctest::Approx(0.5));
    CHECK(m.p[0][1] == doctest::Approx(0.5));
    CHECK(m.p[1][0] == doctest::Approx(0.0));
    CHECK(m.p[1][1] == doctest::Approx(1.0));
    CHECK(m.p[0][0] + m.p[0][1] == doctest::Approx(1.0).epsilon(1e-12));

    t.current_flag = {1, 1, 1, 1};
    CHECK_THROWS_WITH_AS(compute_transition_matrix(t), doctest::Contains("delinquent"), DataError);
}

TEST_CASE("synthetic panel hits the configured marginal rate") {
    SyntheticPanelConfig config;
    config.n_borrowers = 12500;
    config.n_quarters = 8;
    config.base_default_rate = 0.34;
    config.seed = 21;
    const ObservationTable t = synthesize_panel(config);
    REQUIRE(t.n_rows() == 100000);
    double rate = 0;
    for (int y : t.labels) rate += y;
    rate /= t.n_rows();
    CHECK(rate > 0.32);
    CHECK(rate < 0.36);
}

TEST_CASE("synthetic panel recovers the persistence matrix") {
    SyntheticPanelConfig config;
    config.n_borrowers = 12500;
    config.n_quarters = 8;
    config.base_default_rate = 0.5;
    config.p_stay_current = 0.9;
    config.p_stay_default = 0.9;
    config.seed = 22;
    const ObservationTable t = synthesize_panel(config);
    const TransitionMatrix m = compute_transition_matrix(t);
    CHECK(std::abs(m.p[0][0] - 0.9) < 0.02);
    CHECK(std::abs(m.p[1][1] - 0.9) < 0.02);
}

TEST_CASE("synthetic panel is deterministic under seed") {
    SyntheticPanelConfig config;
    config.n_borrowers = 200;
    config.n_quarters = 4;
    config.seed = 33;
    const SyntheticPanel a = synthesize_panel_detailed(config);
    const SyntheticPanel b = synthesize_panel_detailed(config);
    CHECK((a.table.rows - b.table.rows).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.table.labels == b.table.labels);
    CHECK(a.true_prob == b.true_prob);
}

TEST_CASE("synthetic feature kinds are respected") {
    SyntheticPanelConfig config;
    config.n_borrowers = 500;
    config.n_quarters = 2;
    config.seed = 44;
    const ObservationTable t = synthesize_panel(config);
    for (int f = 0; f < t.n_features(); ++f) {
        const FeatureKind kind = t.schema.kinds[static_cast<std::size_t>(f)];
        for (int i = 0; i < t.n_rows(); ++i) {
            const double v = t.rows(i, f);
            if (kind == FeatureKind::Count) {
                CHECK(v >= 0.0);
                CHECK(v == std::floor(v));
            } else if (kind == FeatureKind::Indicator) {
                CHECK((v == 0.0 || v == 1.0));
            }
        }
    }
}

TEST_CASE("zero nonlinearity makes logistic regression Bayes-optimal") {
    SyntheticPanelConfig config;
    config.n_borrowers = 12500;
    config.n_quarters = 8;
    config.nonlinearity_strength = 0.0;
    config.seed = 91;
    const SyntheticPanel panel = synthesize_panel_detailed(config);
    const int n = panel.table.n_rows();
    const int d = panel.table.n_features();
    std::vector<int> train_idx, test_idx;
    for (int i = 0; i < n; ++i) (i % 2 == 0 ? train_idx : test_idx).push_back(i);

    // Independent Newton fit on standardized features.
    Eigen::VectorXd mu = panel.table.rows.colwise().mean();
    Eigen::VectorXd sd(d);
    for (int f = 0; f < d; ++f)
        sd(f) = std::sqrt((panel.table.rows.col(f).array() - mu(f)).square().mean());
    Eigen::MatrixXd Xb(train_idx.size(), d + 1);
    for (std::size_t k = 0; k < train_idx.size(); ++k) {
        for (int f = 0; f < d; ++f) Xb(static_cast<Eigen::Index>(k), f) = (panel.table.rows(train_idx[k], f) - mu(f)) / sd(f);
        Xb(static_cast<Eigen::Index>(k), d) = 1.0;
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
    for (int it = 0; it < 60; ++it) {
        Eigen::VectorXd p = (Xb * beta).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        Eigen::VectorXd r(static_cast<Eigen::Index>(train_idx.size()));
        for (std::size_t k = 0; k < train_idx.size(); ++k)
            r(static_cast<Eigen::Index>(k)) = p(static_cast<Eigen::Index>(k)) - panel.table.labels[static_cast<std::size_t>(train_idx[k])];
        Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d + 1, d + 1) * 1e-9;
        for (std::size_t k = 0; k < train_idx.size(); ++k)
            H += p(static_cast<Eigen::Index>(k)) * (1 - p(static_cast<Eigen::Index>(k))) *
                 Xb.row(static_cast<Eigen::Index>(k)).transpose() * Xb.row(static_cast<Eigen::Index>(k));
        beta -= H.ldlt().solve(Xb.transpose() * r);
    }
    PredictionSet model_preds, bayes_preds;
    for (int i : test_idx) {
        Eigen::VectorXd x(d + 1);
        for (int f = 0; f < d; ++f) x(f) = (panel.table.rows(i, f) - mu(f)) / sd(f);
        x(d) = 1.0;
        model_preds.probabilities.push_back(1.0 / (1.0 + std::exp(-x.dot(beta))));
        model_preds.labels.push_back(panel.table.labels[static_cast<std::size_t>(i)]);
        bayes_preds.probabilities.push_back(panel.true_prob[static_cast<std::size_t>(i)]);
        bayes_preds.labels.push_back(panel.table.labels[static_cast<std::size_t>(i)]);
    }
    const double model_auc = roc_auc(model_preds).second;
    const double bayes_auc = roc_auc(bayes_preds).second;
    CHECK(std::abs(bayes_auc - model_auc) < 0.005);
}

TEST_CASE("generator true probabilities are calibrated per quantile bin") {
    SyntheticPanelConfig config;
    config.n_borrowers = 12500;
    config.n_quarters = 8;
    config.nonlinearity_strength = 2.0;
    config.seed = 92;
    const SyntheticPanel panel = synthesize_panel_detailed(config);
    PredictionSet truth;
    truth.probabilities = panel.true_prob;
    truth.labels = panel.table.labels;
    const auto bins = bin_by_quantile(truth, 100);
    // Labels are drawn from these exact probabilities, so every gap is pure
    // binomial noise: per-bin 4-sigma bound plus the frozen worst case for
    // this panel (max over 100 bins of ~1k draws runs near 0.045).
    double worst = 0;
    for (const auto& b : bins) {
        const double sigma =
            std::sqrt(std::max(b.mean_prediction * (1.0 - b.mean_prediction), 1e-6) / b.count);
        // Absolute floor covers the extreme bins where the normal
        // approximation of the binomial tail breaks down.
        CHECK(std::abs(b.mean_prediction - b.realized_rate) <=
              std::max(4.0 * sigma, 5.0 / b.count));
        worst = std::max(worst, std::abs(b.mean_prediction - b.realized_rate));
    }
    CHECK(worst < 0.05);
}

TEST_CASE("default persistence config lands on the published transition frequencies") {
    SyntheticPanelConfig config;  // 0.776 / 0.927 defaults
    config.n_borrowers = 12500;
    config.n_quarters = 8;
    config.seed = 46;
    const TransitionMatrix m = compute_transition_matrix(synthesize_panel(config));
    CHECK(std::abs(m.p[0][0] - 0.776) < 0.02);
    CHECK(std::abs(m.p[0][1] - 0.224) < 0.02);
    CHECK(std::abs(m.p[1][0] - 0.073) < 0.02);
    CHECK(std::abs(m.p[1][1] - 0.927) < 0.02);
}
