#include "credlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "credlab/errors.hpp"

namespace credlab {

namespace {
constexpr double kProbClip = 1e-7;
}

void PredictionSet::validate() const {
    if (labels.size() != probabilities.size())
        throw DataError("prediction set lengths disagree");
    for (double p : probabilities)
        if (!(p >= 0.0 && p <= 1.0)) throw DataError("probability outside [0,1]");
    for (int y : labels)
        if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
}

ConfusionMatrix confusion_at_threshold(const PredictionSet& preds, double threshold) {
    if (!std::isfinite(threshold)) throw DataError("threshold must be finite");
    ConfusionMatrix cm;
    cm.threshold = threshold;
    for (std::size_t i = 0; i < preds.probabilities.size(); ++i) {
        const bool flagged = preds.probabilities[i] > threshold;  // strict
        if (preds.labels[i] == 1)
            flagged ? ++cm.tp : ++cm.fn;
        else
            flagged ? ++cm.fp : ++cm.tn;
    }
    return cm;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    MetricsReport r;
    auto ratio = [](double num, double den) -> std::optional<double> {
        if (den <= 0.0) return std::nullopt;
        return num / den;
    };
    r.tnr = ratio(cm.tn, cm.tn + cm.fp);
    r.fpr = ratio(cm.fp, cm.fp + cm.tn);
    r.precision = ratio(cm.tp, cm.tp + cm.fp);
    r.recall = ratio(cm.tp, cm.tp + cm.fn);
    if (r.precision && r.recall && (*r.precision + *r.recall) > 0.0)
        r.f_measure = 2.0 * *r.recall * *r.precision / (*r.precision + *r.recall);
    r.accuracy = ratio(cm.tp + cm.tn, cm.total());
    if (r.recall && r.tnr) r.youden_j = *r.recall + *r.tnr - 1.0;
    return r;
}

std::pair<RocCurve, double> roc_auc(const PredictionSet& preds) {
    preds.validate();
    const auto n = preds.probabilities.size();
    double n_pos = 0, n_neg = 0;
    for (int y : preds.labels) (y == 1 ? n_pos : n_neg) += 1.0;
    if (n_pos == 0 || n_neg == 0)
        throw DataError("ROC requires both classes present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return preds.probabilities[a] > preds.probabilities[b];
    });

    RocCurve curve;
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);
    double tp = 0, fp = 0;
    std::size_t i = 0;
    // Mann-Whitney with ties counted 1/2, via rank sums over tie groups.
    double rank_sum_pos = 0.0;
    double rank = 1.0;
    while (i < n) {
        std::size_t j = i;
        double tie_pos = 0, tie_neg = 0;
        while (j < n &&
               preds.probabilities[order[j]] == preds.probabilities[order[i]]) {
            (preds.labels[order[j]] == 1 ? tie_pos : tie_neg) += 1.0;
            ++j;
        }
        const double group = tie_pos + tie_neg;
        const double avg_rank = rank + (group - 1.0) / 2.0;
        rank_sum_pos += tie_pos * avg_rank;
        rank += group;
        tp += tie_pos;
        fp += tie_neg;
        curve.fpr.push_back(fp / n_neg);
        curve.tpr.push_back(tp / n_pos);
        i = j;
    }
    // rank_sum_pos used descending ranks; convert to the ascending convention.
    const double ascending_rank_sum = n_pos * (static_cast<double>(n) + 1.0) - rank_sum_pos;
    const double auc = (ascending_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
    return {curve, auc};
}

double gini(const PredictionSet& preds) { return 2.0 * roc_auc(preds).second - 1.0; }

double brier(const PredictionSet& preds) {
    preds.validate();
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.probabilities.size(); ++i) {
        const double d = preds.probabilities[i] - preds.labels[i];
        sum += d * d;
    }
    return sum / static_cast<double>(preds.probabilities.size());
}

double cross_entropy(const std::vector<double>& probabilities, const std::vector<int>& labels) {
    if (probabilities.size() != labels.size()) throw DataError("length mismatch in loss");
    if (probabilities.empty()) throw DataError("loss of empty prediction set");
    double sum = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const double p = std::min(std::max(probabilities[i], kProbClip), 1.0 - kProbClip);
        sum += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return sum / static_cast<double>(probabilities.size());
}

double cross_entropy(const PredictionSet& preds) {
    return cross_entropy(preds.probabilities, preds.labels);
}

double accuracy_at_threshold(const PredictionSet& preds, double threshold) {
    const ConfusionMatrix cm = confusion_at_threshold(preds, threshold);
    return (cm.tp + cm.tn) / cm.total();
}

std::vector<QuantileBin> bin_by_quantile(const PredictionSet& preds, int n_bins) {
    preds.validate();
    const int n = preds.size();
    if (n_bins < 1 || n_bins > n)
        throw DataError("n_bins must be in [1, N]");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return preds.probabilities[static_cast<std::size_t>(a)] <
               preds.probabilities[static_cast<std::size_t>(b)];
    });
    std::vector<QuantileBin> bins;
    bins.reserve(static_cast<std::size_t>(n_bins));
    for (int b = 0; b < n_bins; ++b) {
        const int lo = static_cast<int>(static_cast<long long>(b) * n / n_bins);
        const int hi = static_cast<int>(static_cast<long long>(b + 1) * n / n_bins);
        QuantileBin qb;
        qb.bin = b;
        qb.count = hi - lo;
        double sum_p = 0, sum_y = 0;
        for (int k = lo; k < hi; ++k) {
            sum_p += preds.probabilities[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
            sum_y += preds.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
        }
        qb.mean_prediction = sum_p / qb.count;
        qb.realized_rate = sum_y / qb.count;
        bins.push_back(qb);
    }
    return bins;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const auto n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && v[order[j]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
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

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw DataError("spearman needs >= 2 aligned points");
    return pearson(average_ranks(x), average_ranks(y));
}

double rank_correlation(const std::vector<QuantileBin>& bins) {
    if (bins.size() < 2) throw DataError("rank correlation needs >= 2 groups");
    std::vector<double> x, y;
    for (const auto& b : bins) {
        x.push_back(static_cast<double>(b.bin));
        y.push_back(b.realized_rate);
    }
    return spearman(x, y);
}

double score_rank_correlation(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DataError("length mismatch");
    std::map<double, std::pair<double, double>> groups;  // score -> (defaults, count)
    for (std::size_t i = 0; i < scores.size(); ++i) {
        auto& g = groups[scores[i]];
        g.first += labels[i];
        g.second += 1.0;
    }
    if (groups.size() < 2) throw DataError("rank correlation needs >= 2 groups");
    std::vector<double> x, y;
    for (const auto& [score, g] : groups) {
        x.push_back(score);
        y.push_back(g.first / g.second);
    }
    // Higher score means lower risk; flip the sign per convention.
    return -spearman(x, y);
}

void RiskBandSpec::validate() const {
    for (std::size_t i = 1; i < score_boundaries.size(); ++i)
        if (!(score_boundaries[i] > score_boundaries[i - 1]))
            throw ConfigError("band boundaries must be strictly increasing");
    if (!shares.empty()) {
        if (static_cast<int>(shares.size()) != n_bands())
            throw ConfigError("band shares must cover every band");
        double sum = 0;
        for (double s : shares) sum += s;
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("band shares must sum to 1");
    }
}

RiskBandSpec default_risk_bands() {
    RiskBandSpec spec;
    spec.score_boundaries = {500, 601, 661, 781};
    spec.shares = {0.0648, 0.2122, 0.1409, 0.3331, 0.2490};
    spec.band_names = {"Deep Subprime", "Subprime", "Near Prime", "Prime", "Super Prime"};
    return spec;
}

int score_band_of(double score, const RiskBandSpec& spec) {
    int band = 0;
    for (double b : spec.score_boundaries)
        if (score >= b) ++band;
    return band;
}

std::vector<int> prediction_bands_matching(const std::vector<double>& probabilities,
                                           const std::vector<int>& score_band, int n_bands) {
    const auto n = probabilities.size();
    std::vector<int> band_count(static_cast<std::size_t>(n_bands), 0);
    for (int b : score_band) ++band_count[static_cast<std::size_t>(b)];
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Highest predicted risk first; prediction band 0 mirrors the lowest
    // (riskiest) score band's share.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return probabilities[a] > probabilities[b];
    });
    std::vector<int> out(n, 0);
    std::size_t pos = 0;
    for (int b = 0; b < n_bands; ++b) {
        for (int k = 0; k < band_count[static_cast<std::size_t>(b)]; ++k)
            out[order[pos++]] = b;
    }
    return out;
}

BandCrossTab band_crosstab(const PredictionSet& preds, const std::vector<double>& scores,
                           const RiskBandSpec& spec) {
    preds.validate();
    spec.validate();
    if (scores.size() != preds.probabilities.size())
        throw DataError("scores and predictions must align");
    const int nb = spec.n_bands();
    const auto n = scores.size();

    std::vector<int> sband(n);
    for (std::size_t i = 0; i < n; ++i) sband[i] = score_band_of(scores[i], spec);
    const std::vector<int> pband = prediction_bands_matching(preds.probabilities, sband, nb);

    BandCrossTab tab;
    tab.spec = spec;
    tab.cells.assign(static_cast<std::size_t>(nb),
                     std::vector<CrossTabCell>(static_cast<std::size_t>(nb)));
    std::vector<std::vector<double>> cnt(static_cast<std::size_t>(nb), std::vector<double>(static_cast<std::size_t>(nb), 0));
    std::vector<std::vector<double>> sum_y = cnt, sum_p = cnt;
    std::vector<double> srow_cnt(static_cast<std::size_t>(nb), 0), srow_y(static_cast<std::size_t>(nb), 0), srow_p(static_cast<std::size_t>(nb), 0);
    std::vector<double> pcol_cnt(static_cast<std::size_t>(nb), 0), pcol_y(static_cast<std::size_t>(nb), 0), pcol_p(static_cast<std::size_t>(nb), 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = static_cast<std::size_t>(sband[i]);
        const auto k = static_cast<std::size_t>(pband[i]);
        cnt[s][k] += 1;
        sum_y[s][k] += preds.labels[i];
        sum_p[s][k] += preds.probabilities[i];
        srow_cnt[s] += 1;
        srow_y[s] += preds.labels[i];
        srow_p[s] += preds.probabilities[i];
        pcol_cnt[k] += 1;
        pcol_y[k] += preds.labels[i];
        pcol_p[k] += preds.probabilities[i];
    }
    tab.score_band_share.resize(static_cast<std::size_t>(nb));
    tab.score_band_realized.resize(static_cast<std::size_t>(nb));
    tab.score_band_predicted.resize(static_cast<std::size_t>(nb));
    tab.pred_band_realized.resize(static_cast<std::size_t>(nb));
    tab.pred_band_predicted.resize(static_cast<std::size_t>(nb));
    for (int s = 0; s < nb; ++s) {
        const auto su = static_cast<std::size_t>(s);
        tab.score_band_share[su] = srow_cnt[su] / static_cast<double>(n);
        tab.score_band_realized[su] = srow_cnt[su] > 0 ? srow_y[su] / srow_cnt[su] : 0.0;
        tab.score_band_predicted[su] = srow_cnt[su] > 0 ? srow_p[su] / srow_cnt[su] : 0.0;
        for (int k = 0; k < nb; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            CrossTabCell& c = tab.cells[su][ku];
            c.count = static_cast<int>(cnt[su][ku]);
            if (cnt[su][ku] > 0) {
                c.empty = false;
                c.share = srow_cnt[su] > 0 ? cnt[su][ku] / srow_cnt[su] : 0.0;
                c.realized_rate = sum_y[su][ku] / cnt[su][ku];
                c.predicted_rate = sum_p[su][ku] / cnt[su][ku];
            }
        }
    }
    for (int k = 0; k < nb; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        tab.pred_band_realized[ku] = pcol_cnt[ku] > 0 ? pcol_y[ku] / pcol_cnt[ku] : 0.0;
        tab.pred_band_predicted[ku] = pcol_cnt[ku] > 0 ? pcol_p[ku] / pcol_cnt[ku] : 0.0;
    }
    return tab;
}

namespace {

WindowReport report_for(const WindowRun& run, double threshold) {
    WindowReport r;
    r.train_window = run.train_window;
    r.test_window = run.test_window;
    const auto& p = run.preds;
    r.n = p.size();
    double sum_p = 0, sum_y = 0, sum_p_pos = 0, sum_p_neg = 0, n_pos = 0;
    for (std::size_t i = 0; i < p.probabilities.size(); ++i) {
        sum_p += p.probabilities[i];
        sum_y += p.labels[i];
        if (p.labels[i] == 1) {
            sum_p_pos += p.probabilities[i];
            n_pos += 1;
        } else {
            sum_p_neg += p.probabilities[i];
        }
    }
    const auto n = static_cast<double>(p.size());
    r.data_rate = sum_y / n;
    r.predicted_rate = sum_p / n;
    r.mean_forecast_delinquent = n_pos > 0 ? sum_p_pos / n_pos : 0.0;
    r.mean_forecast_non_delinquent = n - n_pos > 0 ? sum_p_neg / (n - n_pos) : 0.0;
    const MetricsReport m = compute_metrics(confusion_at_threshold(p, threshold));
    r.precision = m.precision;
    r.recall = m.recall;
    r.f_measure = m.f_measure;
    r.accuracy = m.accuracy;
    if (n_pos > 0 && n_pos < n) r.auc = roc_auc(p).second;
    r.loss = cross_entropy(p);
    return r;
}

}  // namespace

std::vector<WindowReport> metrics_over_windows(const std::vector<WindowRun>& runs,
                                               double threshold) {
    if (runs.empty()) throw DataError("no windows provided");
    std::vector<WindowReport> out;
    out.reserve(runs.size());
    for (const auto& run : runs) out.push_back(report_for(run, threshold));
    return out;
}

std::vector<WindowReport> metrics_over_windows_current(const std::vector<WindowRun>& runs,
                                                       double threshold) {
    if (runs.empty()) throw DataError("no windows provided");
    std::vector<WindowReport> out;
    out.reserve(runs.size());
    for (const auto& run : runs) {
        if (run.preds.current_flag.size() != run.preds.probabilities.size())
            throw DataError("current-only report requires current flags");
        WindowRun filtered;
        filtered.train_window = run.train_window;
        filtered.test_window = run.test_window;
        for (std::size_t i = 0; i < run.preds.probabilities.size(); ++i) {
            if (run.preds.current_flag[i] != 1) continue;
            filtered.preds.probabilities.push_back(run.preds.probabilities[i]);
            filtered.preds.labels.push_back(run.preds.labels[i]);
        }
        if (filtered.preds.probabilities.empty())
            throw DataError("no current rows in window " + run.test_window);
        out.push_back(report_for(filtered, threshold));
    }
    return out;
}

}  // namespace credlab
