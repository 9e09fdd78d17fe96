#include "credlab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <unordered_set>

#include "credlab/csv.hpp"
#include "credlab/errors.hpp"
#include "credlab/rng.hpp"

namespace credlab {

std::string to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::Continuous: return "continuous";
        case FeatureKind::Count: return "count";
        case FeatureKind::Indicator: return "indicator";
    }
    return "continuous";
}

FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "continuous") return FeatureKind::Continuous;
    if (s == "count") return FeatureKind::Count;
    if (s == "indicator") return FeatureKind::Indicator;
    throw ConfigError("unknown feature kind: " + s);
}

int FeatureSchema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

void FeatureSchema::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) throw SchemaError("duplicate feature name: " + n);
    }
    if (kinds.size() != names.size())
        throw SchemaError("schema kinds must cover every feature");
    if (!groups.empty() && groups.size() != names.size())
        throw SchemaError("schema groups must be empty or cover every feature");
}

void ObservationTable::validate() const {
    const auto n = static_cast<std::size_t>(n_rows());
    if (labels.size() != n || quarter.size() != n || borrower_id.size() != n ||
        current_flag.size() != n)
        throw DataError("table column lengths disagree");
    for (int lab : labels)
        if (lab != 0 && lab != 1) throw DataError("labels must be 0 or 1");
    if (!rows.allFinite()) throw DataError("table contains non-finite values");
}

ObservationTable ObservationTable::select(const std::vector<int>& idx) const {
    ObservationTable out;
    out.schema = schema;
    out.rows.resize(static_cast<Eigen::Index>(idx.size()), rows.cols());
    out.labels.reserve(idx.size());
    out.quarter.reserve(idx.size());
    out.borrower_id.reserve(idx.size());
    out.current_flag.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const int i = idx[k];
        out.rows.row(static_cast<Eigen::Index>(k)) = rows.row(i);
        out.labels.push_back(labels[i]);
        out.quarter.push_back(quarter[i]);
        out.borrower_id.push_back(borrower_id[i]);
        out.current_flag.push_back(current_flag[i]);
        if (!credit_score.empty()) out.credit_score.push_back(credit_score[i]);
        if (!balance.empty()) out.balance.push_back(balance[i]);
    }
    return out;
}

namespace {

const char* kReserved[] = {"borrower_id", "quarter", "current", "label"};
const char* kOptional[] = {"credit_score", "balance"};

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ParseError("non-numeric cell \"" + cell + "\" at row " + std::to_string(row) +
                         ", column " + column);
    if (!std::isfinite(v))
        throw ParseError("non-finite value at row " + std::to_string(row) + ", column " + column);
    return v;
}

}  // namespace

ObservationTable ingest_csv(const std::string& path, const FeatureSchema& schema) {
    schema.validate();
    const csv::Document doc = csv::read_file(path);
    if (doc.rows.empty()) throw DataError("empty input: " + path + " has no data rows");

    std::map<std::string, int> col;
    for (std::size_t i = 0; i < doc.header.size(); ++i) {
        if (col.count(doc.header[i])) throw SchemaError("duplicate column: " + doc.header[i]);
        col[doc.header[i]] = static_cast<int>(i);
    }
    for (const char* r : kReserved)
        if (!col.count(r)) throw SchemaError("missing column: " + std::string(r));
    for (const auto& name : schema.names)
        if (!col.count(name)) throw SchemaError("missing column: " + name);

    std::unordered_set<std::string> known(schema.names.begin(), schema.names.end());
    for (const char* r : kReserved) known.insert(r);
    for (const char* r : kOptional) known.insert(r);
    for (const auto& h : doc.header)
        if (!known.count(h)) throw SchemaError("unexpected column: " + h);

    const bool has_score = col.count("credit_score") > 0;
    const bool has_balance = col.count("balance") > 0;

    ObservationTable t;
    t.schema = schema;
    const auto n = static_cast<Eigen::Index>(doc.rows.size());
    t.rows.resize(n, schema.size());
    t.labels.reserve(doc.rows.size());
    t.quarter.reserve(doc.rows.size());
    t.borrower_id.reserve(doc.rows.size());
    t.current_flag.reserve(doc.rows.size());

    for (std::size_t r = 0; r < doc.rows.size(); ++r) {
        const auto& cells = doc.rows[r];
        if (cells.size() != doc.header.size())
            throw ParseError("row " + std::to_string(r + 1) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(doc.header.size()));
        auto cell = [&](const char* name) -> const std::string& {
            return cells[static_cast<std::size_t>(col.at(name))];
        };
        const double lab = parse_cell(cell("label"), r + 1, "label");
        if (lab != 0.0 && lab != 1.0)
            throw ParseError("label must be 0 or 1 at row " + std::to_string(r + 1));
        const double cur = parse_cell(cell("current"), r + 1, "current");
        if (cur != 0.0 && cur != 1.0)
            throw ParseError("current must be 0 or 1 at row " + std::to_string(r + 1));
        t.labels.push_back(static_cast<int>(lab));
        t.current_flag.push_back(static_cast<int>(cur));
        t.quarter.push_back(static_cast<int>(parse_cell(cell("quarter"), r + 1, "quarter")));
        t.borrower_id.push_back(
            static_cast<std::int64_t>(parse_cell(cell("borrower_id"), r + 1, "borrower_id")));
        if (has_score) t.credit_score.push_back(parse_cell(cell("credit_score"), r + 1, "credit_score"));
        if (has_balance) t.balance.push_back(parse_cell(cell("balance"), r + 1, "balance"));
        for (int f = 0; f < schema.size(); ++f) {
            const auto& c = cells[static_cast<std::size_t>(col.at(schema.names[f]))];
            t.rows(static_cast<Eigen::Index>(r), f) = parse_cell(c, r + 1, schema.names[f]);
        }
    }
    t.validate();
    return t;
}

void emit_csv(const ObservationTable& table, const std::string& path) {
    csv::Writer w(path);
    std::vector<std::string> row;
    row.assign({"borrower_id", "quarter", "current", "label"});
    if (!table.credit_score.empty()) row.push_back("credit_score");
    if (!table.balance.empty()) row.push_back("balance");
    for (const auto& n : table.schema.names) row.push_back(n);
    w.write_row(row);
    for (int i = 0; i < table.n_rows(); ++i) {
        row.clear();
        row.push_back(std::to_string(table.borrower_id[static_cast<std::size_t>(i)]));
        row.push_back(std::to_string(table.quarter[static_cast<std::size_t>(i)]));
        row.push_back(std::to_string(table.current_flag[static_cast<std::size_t>(i)]));
        row.push_back(std::to_string(table.labels[static_cast<std::size_t>(i)]));
        if (!table.credit_score.empty())
            row.push_back(csv::format_double(table.credit_score[static_cast<std::size_t>(i)]));
        if (!table.balance.empty())
            row.push_back(csv::format_double(table.balance[static_cast<std::size_t>(i)]));
        for (int f = 0; f < table.n_features(); ++f)
            row.push_back(csv::format_double(table.rows(i, f)));
        w.write_row(row);
    }
}

ScalingParams compute_scaling(const ObservationTable& table) {
    if (table.n_rows() < 2) throw DataError("need at least 2 rows to compute scaling");
    const auto n = static_cast<double>(table.n_rows());
    ScalingParams p;
    p.means = table.rows.colwise().mean();
    p.std_devs.resize(table.n_features());
    for (int f = 0; f < table.n_features(); ++f) {
        const double var = (table.rows.col(f).array() - p.means(f)).square().sum() / n;
        double sd = std::sqrt(var);
        // Constant column: sentinel 1 so the scaled feature is identically 0.
        if (sd < 1e-12 * std::max(1.0, std::abs(p.means(f)))) sd = 1.0;
        p.std_devs(f) = sd;
    }
    return p;
}

ObservationTable apply_scaling(const ObservationTable& table, const ScalingParams& params) {
    if (params.means.size() != table.n_features() || params.std_devs.size() != table.n_features())
        throw DataError("scaling parameter dimension mismatch");
    ObservationTable out = table;
    out.rows = (table.rows.rowwise() - params.means.transpose()).array().rowwise() /
               params.std_devs.transpose().array();
    return out;
}

ObservationTable invert_scaling(const ObservationTable& table, const ScalingParams& params) {
    if (params.means.size() != table.n_features() || params.std_devs.size() != table.n_features())
        throw DataError("scaling parameter dimension mismatch");
    ObservationTable out = table;
    out.rows = (table.rows.array().rowwise() * params.std_devs.transpose().array()).rowwise() +
               params.means.transpose().array();
    return out;
}

namespace {

std::vector<int> rows_in_quarters(const ObservationTable& t, const std::set<int>& quarters) {
    std::vector<int> idx;
    for (int i = 0; i < t.n_rows(); ++i)
        if (quarters.count(t.quarter[static_cast<std::size_t>(i)])) idx.push_back(i);
    return idx;
}

}  // namespace

SplitResult make_split(const ObservationTable& table, const SplitSpec& spec) {
    SplitResult out;
    if (spec.mode == SplitMode::Temporal) {
        if (spec.train_quarters.empty() || spec.test_quarters.empty())
            throw SplitError("temporal split requires train and test quarters");
        const int gap = *spec.test_quarters.begin() - *spec.train_quarters.rbegin();
        if (gap < spec.gap_quarters)
            throw SplitError("temporal gap violated: test starts " + std::to_string(gap) +
                             "Q after training ends, need " + std::to_string(spec.gap_quarters));
        for (int q : spec.train_quarters)
            if (rows_in_quarters(table, {q}).empty())
                throw SplitError("train quarter " + std::to_string(q) + " has no rows");
        for (int q : spec.test_quarters)
            if (rows_in_quarters(table, {q}).empty())
                throw SplitError("test quarter " + std::to_string(q) + " has no rows");

        std::vector<int> train_idx = rows_in_quarters(table, spec.train_quarters);
        const std::vector<int> test_idx = rows_in_quarters(table, spec.test_quarters);

        // Seeded carve-out within the training quarters; the 8Q test gap
        // stays intact while early stopping gets a holdout.
        Rng rng(derive_seed(spec.seed, "split-validation"));
        rng.shuffle(train_idx);
        const auto n_val = static_cast<std::size_t>(
            std::llround(spec.validation_fraction * static_cast<double>(train_idx.size())));
        if (n_val == 0 || n_val >= train_idx.size())
            throw SplitError("validation carve-out would leave an empty partition");
        std::vector<int> val_idx(train_idx.begin(), train_idx.begin() + static_cast<long>(n_val));
        std::vector<int> tr_idx(train_idx.begin() + static_cast<long>(n_val), train_idx.end());
        std::sort(val_idx.begin(), val_idx.end());
        std::sort(tr_idx.begin(), tr_idx.end());
        out.train = table.select(tr_idx);
        out.validation = table.select(val_idx);
        out.test = table.select(test_idx);
    } else {
        const double sum = spec.fractions[0] + spec.fractions[1] + spec.fractions[2];
        if (std::abs(sum - 1.0) > 1e-9) throw SplitError("pooled fractions must sum to 1");
        std::vector<int> idx(static_cast<std::size_t>(table.n_rows()));
        for (int i = 0; i < table.n_rows(); ++i) idx[static_cast<std::size_t>(i)] = i;
        Rng rng(derive_seed(spec.seed, "split-pooled"));
        rng.shuffle(idx);
        const auto n = static_cast<double>(idx.size());
        const auto n_train = static_cast<std::size_t>(std::floor(spec.fractions[0] * n));
        const auto n_val = static_cast<std::size_t>(
            std::floor((spec.fractions[0] + spec.fractions[1]) * n) - static_cast<double>(n_train));
        if (n_train == 0 || n_val == 0 || n_train + n_val >= idx.size())
            throw SplitError("pooled split produced an empty partition");
        std::vector<int> tr(idx.begin(), idx.begin() + static_cast<long>(n_train));
        std::vector<int> va(idx.begin() + static_cast<long>(n_train),
                            idx.begin() + static_cast<long>(n_train + n_val));
        std::vector<int> te(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
        std::sort(tr.begin(), tr.end());
        std::sort(va.begin(), va.end());
        std::sort(te.begin(), te.end());
        out.train = table.select(tr);
        out.validation = table.select(va);
        out.test = table.select(te);
    }
    return out;
}

TransitionMatrix compute_transition_matrix(const ObservationTable& panel) {
    double count[2][2] = {{0, 0}, {0, 0}};
    for (int i = 0; i < panel.n_rows(); ++i) {
        const int state = panel.current_flag[static_cast<std::size_t>(i)] == 1 ? 0 : 1;
        count[state][panel.labels[static_cast<std::size_t>(i)]] += 1.0;
    }
    TransitionMatrix m{};
    for (int s = 0; s < 2; ++s) {
        const double total = count[s][0] + count[s][1];
        if (total == 0.0)
            throw DataError(std::string("transition matrix row undefined: no rows in state ") +
                            (s == 0 ? "current" : "delinquent"));
        m.p[s][0] = count[s][0] / total;
        m.p[s][1] = count[s][1] / total;
    }
    return m;
}

void SyntheticPanelConfig::validate() const {
    if (n_borrowers < 1 || n_quarters < 1) throw ConfigError("panel dimensions must be positive");
    if (base_default_rate < 0.0 || base_default_rate > 1.0)
        throw ConfigError("base_default_rate must be in [0,1]");
    if (p_stay_current < 0.0 || p_stay_current > 1.0 || p_stay_default < 0.0 ||
        p_stay_default > 1.0)
        throw ConfigError("persistence entries must be in [0,1]");
    if (nonlinearity_strength < 0.0) throw ConfigError("nonlinearity_strength must be >= 0");
}

FeatureSchema synthetic_schema() {
    FeatureSchema s;
    s.names = {"debt_balance",   "mortgage_balance", "card_balance",       "utilization",
               "credit_limit",   "n_card_trades",    "n_inquiries",        "months_since_delinq",
               "delinq_now",     "history_months"};
    s.kinds = {FeatureKind::Continuous, FeatureKind::Continuous, FeatureKind::Continuous,
               FeatureKind::Continuous, FeatureKind::Continuous, FeatureKind::Count,
               FeatureKind::Count,      FeatureKind::Continuous, FeatureKind::Indicator,
               FeatureKind::Count};
    s.groups = {"amounts_owed", "amounts_owed", "amounts_owed",    "amounts_owed",
                "credit_mix",   "credit_mix",   "new_credit",      "payment_history",
                "payment_history", "length_of_history"};
    return s;
}

namespace {

// Latent default score split into a part linear in the emitted features and a
// nonlinear part (thresholds + interactions) scaled by nonlinearity_strength.
double linear_score(const Eigen::RowVectorXd& x) {
    const double debt = x(0), mort = x(1), card = x(2), util = x(3), limit = x(4);
    const double n_card = x(5), n_inq = x(6), msd = x(7), delinq = x(8), hist = x(9);
    return 1.3 * delinq + 1.1 * util + 0.12 * n_inq - 0.0040 * debt + 0.002 * mort +
           0.020 * card - 0.03 * limit + 0.02 * n_card - 0.012 * msd - 0.0035 * hist;
}

double nonlinear_score(const Eigen::RowVectorXd& x) {
    const double debt = x(0), mort = x(1), card = x(2), util = x(3);
    const double n_card = x(5), msd = x(7), delinq = x(8), hist = x(9);
    double nl = 0.0;
    nl += 0.9 * (util > 0.8 ? 1.0 : 0.0);
    nl += 0.7 * (msd >= 0.0 && msd < 6.0 ? 1.0 : 0.0);
    nl += 0.8 * std::tanh((n_card - 6.0) / 2.0) * util;
    nl += 0.6 * delinq * std::log1p(card) / 2.0;
    nl -= 0.7 * (hist > 200.0 && util < 0.35 ? 1.0 : 0.0);
    nl += 0.5 * std::log1p(debt) * (util - 0.5);
    nl -= 0.35 * std::log1p(mort);
    nl += 0.8 * ((util > 0.55) != (msd < 0.0) ? 1.0 : 0.0);
    return nl;
}

// Intercept such that mean(sigmoid(a + s_i)) == target, by bisection.
double calibrate_intercept(const std::vector<double>& scores, double target) {
    const double t = std::min(std::max(target, 1e-6), 1.0 - 1e-6);
    double lo = -30.0, hi = 30.0;
    auto mean_p = [&](double a) {
        double sum = 0.0;
        for (double s : scores) sum += 1.0 / (1.0 + std::exp(-(a + s)));
        return sum / static_cast<double>(scores.size());
    };
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mean_p(mid) < t)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

SyntheticPanel synthesize_panel_detailed(const SyntheticPanelConfig& config) {
    config.validate();
    const int nb = config.n_borrowers, nq = config.n_quarters;
    const int n = nb * nq;
    const double r_cur = 1.0 - config.p_stay_current;
    const double r_del = config.p_stay_default;

    // Distressed-state share chosen so the stationary mix hits the target
    // marginal rate: base = (1-pi_d)*r_cur + pi_d*r_del.
    double pi_d = 0.5;
    if (std::abs(r_del - r_cur) > 1e-9)
        pi_d = (config.base_default_rate - r_cur) / (r_del - r_cur);
    pi_d = std::min(std::max(pi_d, 0.01), 0.99);

    auto pi_d_at = [&](int q) {
        if (nq == 1 || config.rate_ramp == 0.0) return pi_d;
        const double frac = static_cast<double>(q) / static_cast<double>(nq - 1) - 0.5;
        return std::min(std::max(pi_d + config.rate_ramp * frac, 0.01), 0.99);
    };

    SyntheticPanel panel;
    ObservationTable& t = panel.table;
    t.schema = synthetic_schema();
    t.rows.resize(n, t.schema.size());
    t.labels.assign(static_cast<std::size_t>(n), 0);
    t.quarter.resize(static_cast<std::size_t>(n));
    t.borrower_id.resize(static_cast<std::size_t>(n));
    t.current_flag.resize(static_cast<std::size_t>(n));
    t.credit_score.resize(static_cast<std::size_t>(n));
    t.balance.resize(static_cast<std::size_t>(n));

    Rng rng(derive_seed(config.seed, "synth-features"));
    const double mix = 0.8;  // quarter-to-quarter state stickiness

    std::vector<int> state(static_cast<std::size_t>(n));
    for (int b = 0; b < nb; ++b) {
        const double trait_risk = rng.normal();
        const double trait_spend = rng.normal();
        const double trait_age = rng.normal();
        int s = rng.bernoulli(pi_d_at(0)) ? 1 : 0;
        for (int q = 0; q < nq; ++q) {
            if (q > 0 && !rng.bernoulli(mix)) s = rng.bernoulli(pi_d_at(q)) ? 1 : 0;
            const int i = b * nq + q;
            const double debt = std::exp(rng.normal(3.3 - 0.15 * trait_risk, 1.0));
            const double mort = debt * rng.uniform(0.55, 0.9);
            const double card = std::exp(rng.normal(1.1 + 0.1 * trait_spend, 0.9));
            const double util =
                std::min(std::max(0.45 + 0.22 * trait_risk + 0.18 * s + 0.18 * rng.normal(), 0.0), 1.0);
            const double limit = std::exp(rng.normal(2.2 - 0.2 * trait_risk, 0.7));
            const double n_card = rng.poisson(3.5);
            const double n_inq = rng.poisson(1.2 + 0.6 * s);
            double msd;
            if (s == 1)
                msd = static_cast<double>(rng.uniform_index(6));
            else
                msd = rng.bernoulli(0.6) ? -1.0
                                         : 6.0 + static_cast<double>(rng.uniform_index(43));
            const double hist = 12.0 + rng.poisson(std::max(10.0, 140.0 + 20.0 * trait_age));

            t.rows.row(i) << debt, mort, card, util, limit, n_card, n_inq, msd,
                static_cast<double>(s), hist;
            t.quarter[static_cast<std::size_t>(i)] = q;
            t.borrower_id[static_cast<std::size_t>(i)] = b;
            t.current_flag[static_cast<std::size_t>(i)] = s == 1 ? 0 : 1;
            t.balance[static_cast<std::size_t>(i)] = card * 1000.0;
            state[static_cast<std::size_t>(i)] = s;
        }
    }

    // State-conditional intercepts calibrated so the empirical transition
    // matrix matches the configured persistence.
    std::vector<double> score(static_cast<std::size_t>(n));
    std::vector<double> scores_by_state[2];
    for (int i = 0; i < n; ++i) {
        const double sc = 0.8 * linear_score(t.rows.row(i)) +
                          config.nonlinearity_strength * nonlinear_score(t.rows.row(i));
        score[static_cast<std::size_t>(i)] = sc;
        scores_by_state[state[static_cast<std::size_t>(i)]].push_back(sc);
    }
    double intercept[2] = {0.0, 0.0};
    if (!scores_by_state[0].empty()) intercept[0] = calibrate_intercept(scores_by_state[0], r_cur);
    if (!scores_by_state[1].empty()) intercept[1] = calibrate_intercept(scores_by_state[1], r_del);

    panel.true_prob.resize(static_cast<std::size_t>(n));
    Rng label_rng(derive_seed(config.seed, "synth-labels"));
    Rng score_rng(derive_seed(config.seed, "synth-scores"));
    for (int i = 0; i < n; ++i) {
        const double z = intercept[state[static_cast<std::size_t>(i)]] + score[static_cast<std::size_t>(i)];
        double p = 1.0 / (1.0 + std::exp(-z));
        p = std::min(std::max(p, 1e-4), 1.0 - 1e-4);
        panel.true_prob[static_cast<std::size_t>(i)] = p;
        t.labels[static_cast<std::size_t>(i)] = label_rng.bernoulli(p) ? 1 : 0;
        // External "credit score": a noisy monotone transform of the true
        // default probability, mapped to a familiar 300-850 range.
        const double noisy = z + score_rng.normal(0.0, 0.9);
        const double sc = 660.0 - 55.0 * noisy;
        t.credit_score[static_cast<std::size_t>(i)] = std::round(std::min(std::max(sc, 300.0), 850.0));
    }
    t.validate();
    return panel;
}

ObservationTable synthesize_panel(const SyntheticPanelConfig& config) {
    return synthesize_panel_detailed(config).table;
}

}  // namespace credlab
