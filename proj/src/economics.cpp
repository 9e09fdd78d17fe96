#include "credlab/economics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "credlab/errors.hpp"
#include "credlab/rng.hpp"

namespace credlab {

void ValueAddedParams::validate() const {
    if (interest_rate <= 0.0) throw ConfigError("interest rate must be positive");
    if (amortization_years < 1) throw ConfigError("amortization period must be >= 1 year");
    if (runup <= 1.0) throw ConfigError("run-up ratio must exceed 1");
}

VaCounts va_counts_from_confusion(const ConfusionMatrix& cm) {
    VaCounts c;
    c.flagged_defaulters = cm.tp;
    c.false_alarms = cm.fp;
    c.missed_defaulters = cm.fn;
    return c;
}

std::optional<double> value_added(const VaCounts& counts, const ValueAddedParams& params) {
    params.validate();
    const double denom = counts.flagged_defaulters + counts.missed_defaulters;
    if (denom <= 0.0) return std::nullopt;
    const double pv_interest =
        1.0 - std::pow(1.0 + params.interest_rate, -static_cast<double>(params.amortization_years));
    const double penalty = counts.false_alarms * pv_interest / (params.runup - 1.0);
    return (counts.flagged_defaulters - penalty) / denom;
}

std::optional<double> value_added(const ConfusionMatrix& cm, const ValueAddedParams& params) {
    return value_added(va_counts_from_confusion(cm), params);
}

ValueAddedSurface value_added_surface(const ConfusionMatrix& cm, const std::vector<double>& r_grid,
                                      const std::vector<double>& runup_grid,
                                      int amortization_years) {
    if (r_grid.empty() || runup_grid.empty()) throw ConfigError("VA surface grids must be nonempty");
    ValueAddedSurface surface;
    surface.r_grid = r_grid;
    surface.runup_grid = runup_grid;
    for (double r : r_grid) {
        std::vector<double> row;
        for (double runup : runup_grid) {
            ValueAddedParams p;
            p.interest_rate = r;
            p.runup = runup;
            p.amortization_years = amortization_years;
            const auto va = value_added(cm, p);
            row.push_back(va ? *va : std::numeric_limits<double>::quiet_NaN());
        }
        surface.va.push_back(row);
    }
    return surface;
}

double comparative_value(const ConfusionMatrix& cm_a, const ConfusionMatrix& cm_b,
                         const ValueAddedParams& params) {
    if (std::abs(cm_a.total() - cm_b.total()) > 1e-9)
        throw DataError("comparative VA requires the same underlying population");
    const auto va_a = value_added(cm_a, params);
    const auto va_b = value_added(cm_b, params);
    if (!va_a || !va_b) throw DataError("VA undefined for one of the matrices");
    return *va_a - *va_b;
}

namespace {

double pearson_corr(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

AggregateRateSeries aggregate_default_rate(const std::vector<PredictionSet>& preds_by_quarter) {
    if (preds_by_quarter.empty()) throw DataError("no quarters provided");
    AggregateRateSeries series;
    for (const auto& preds : preds_by_quarter) {
        if (preds.probabilities.empty()) throw DataError("empty quarter in aggregate series");
        AggregateRatePoint pt;
        pt.quarter = preds.quarter.empty() ? static_cast<int>(series.points.size())
                                           : preds.quarter.front();
        double sum_p = 0, sum_y = 0;
        for (std::size_t i = 0; i < preds.probabilities.size(); ++i) {
            sum_p += preds.probabilities[i];
            sum_y += preds.labels[i];
        }
        pt.predicted_rate = sum_p / static_cast<double>(preds.probabilities.size());
        pt.realized_rate = sum_y / static_cast<double>(preds.probabilities.size());
        series.points.push_back(pt);
    }
    if (series.points.size() >= 2) {
        std::vector<double> p, y;
        for (const auto& pt : series.points) {
            p.push_back(pt.predicted_rate);
            y.push_back(pt.realized_rate);
        }
        series.correlation = pearson_corr(p, y);
    }
    return series;
}

AggregateRateSeries aggregate_default_rate(const PredictionSet& preds) {
    if (preds.quarter.size() != preds.probabilities.size())
        throw DataError("prediction set carries no quarter stamps");
    std::map<int, PredictionSet> by_quarter;
    for (std::size_t i = 0; i < preds.probabilities.size(); ++i) {
        PredictionSet& q = by_quarter[preds.quarter[i]];
        q.probabilities.push_back(preds.probabilities[i]);
        q.labels.push_back(preds.labels[i]);
        q.quarter.push_back(preds.quarter[i]);
    }
    std::vector<PredictionSet> list;
    for (auto& [quarter, set] : by_quarter) list.push_back(std::move(set));
    return aggregate_default_rate(list);
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Acklam's rational approximation with one Halley refinement.
double normal_quantile(double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425, p_high = 1.0 - p_low;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    } else if (p <= p_high) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

}  // namespace

double truncated_normal_quantile(double mean, double std_dev, double low, double high, double u) {
    if (!(low < high)) throw ConfigError("truncation bounds must satisfy low < high");
    if (std_dev < 0.0) throw ConfigError("std_dev must be nonnegative");
    if (std_dev < 1e-300) return std::min(std::max(mean, low), high);
    const double a = normal_cdf((low - mean) / std_dev);
    const double b = normal_cdf((high - mean) / std_dev);
    const double p = a + u * (b - a);
    const double x = mean + std_dev * normal_quantile(p);
    return std::min(std::max(x, low), high);
}

double truncated_normal_draw(double mean, double std_dev, double low, double high,
                             std::uint64_t seed) {
    Rng rng(derive_seed(seed, "trunc-normal"));
    return truncated_normal_quantile(mean, std_dev, low, high, rng.uniform());
}

void SavingsSpec::validate() const {
    bands.validate();
    if (static_cast<int>(band_rates.size()) != bands.n_bands())
        throw ConfigError("band_rates must cover every band");
    for (const auto& r : band_rates) {
        if (r.mean <= 0.0 || r.low >= r.high) throw ConfigError("invalid rate band parameters");
    }
}

SavingsSpec default_savings_spec() {
    SavingsSpec spec;
    spec.bands = default_risk_bands();
    // Non-authoritative placeholders: higher risk bands pay more.
    spec.band_rates = {
        {0.24, 0.020, 0.05, 0.40},
        {0.21, 0.020, 0.05, 0.40},
        {0.17, 0.015, 0.04, 0.35},
        {0.14, 0.012, 0.03, 0.30},
        {0.12, 0.010, 0.02, 0.25},
    };
    return spec;
}

SavingsTable borrower_savings(const std::vector<double>& balances,
                              const std::vector<double>& scores, const PredictionSet& preds,
                              const SavingsSpec& spec) {
    spec.validate();
    const auto n = preds.probabilities.size();
    if (balances.size() != n || scores.size() != n)
        throw DataError("balances, scores and predictions must align");
    for (double b : balances)
        if (b < 0.0) throw DataError("balances must be nonnegative");

    const int nb = spec.bands.n_bands();
    std::vector<int> sband(n);
    for (std::size_t i = 0; i < n; ++i) sband[i] = score_band_of(scores[i], spec.bands);
    const std::vector<int> pband = prediction_bands_matching(preds.probabilities, sband, nb);

    SavingsTable table;
    table.cells.assign(static_cast<std::size_t>(nb), std::vector<SavingsCell>(static_cast<std::size_t>(nb)));
    table.per_row_saving.resize(n);
    std::vector<std::vector<double>> sum_diff(static_cast<std::size_t>(nb), std::vector<double>(static_cast<std::size_t>(nb), 0));
    std::vector<std::vector<double>> sum_save = sum_diff;
    std::vector<std::vector<int>> count(static_cast<std::size_t>(nb), std::vector<int>(static_cast<std::size_t>(nb), 0));

    // Compensated summation for the cumulative total.
    double total = 0, comp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        // One quantile per borrower: identical bands imply an identical rate,
        // so the diagonal is exactly zero.
        Rng rng(derive_seed(spec.seed, "savings-rate", i));
        const double u = rng.uniform();
        const auto& rs = spec.band_rates[static_cast<std::size_t>(sband[i])];
        const auto& rp = spec.band_rates[static_cast<std::size_t>(pband[i])];
        const double rate_score = truncated_normal_quantile(rs.mean, rs.std_dev, rs.low, rs.high, u);
        const double rate_pred = truncated_normal_quantile(rp.mean, rp.std_dev, rp.low, rp.high, u);
        const double diff = rate_score - rate_pred;
        const double saving = diff * balances[i];
        table.per_row_saving[i] = saving;
        const auto p = static_cast<std::size_t>(pband[i]);
        const auto s = static_cast<std::size_t>(sband[i]);
        sum_diff[p][s] += diff;
        sum_save[p][s] += saving;
        count[p][s] += 1;
        const double y = saving - comp;
        const double t = total + y;
        comp = (t - total) - y;
        total = t;
    }
    table.cumulative_total = total;
    for (int p = 0; p < nb; ++p) {
        for (int s = 0; s < nb; ++s) {
            const auto pu = static_cast<std::size_t>(p), su = static_cast<std::size_t>(s);
            SavingsCell& cell = table.cells[pu][su];
            cell.count = count[pu][su];
            if (cell.count > 0) {
                cell.empty = false;
                cell.mean_rate_diff = sum_diff[pu][su] / cell.count;
                cell.mean_saving = sum_save[pu][su] / cell.count;
            }
        }
    }
    return table;
}

}  // namespace credlab
