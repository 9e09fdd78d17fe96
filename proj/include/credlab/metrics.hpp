#pragma once
#include <optional>
#include <string>
#include <vector>

namespace credlab {

// Aligned probabilities and outcomes; quarter stamps and current flags are
// carried through when the source table has them.
struct PredictionSet {
    std::vector<double> probabilities;
    std::vector<int> labels;
    std::vector<int> quarter;       // optional
    std::vector<int> current_flag;  // optional

    int size() const { return static_cast<int>(probabilities.size()); }
    void validate() const;
};

struct ConfusionMatrix {
    double tp = 0, tn = 0, fp = 0, fn = 0;
    double threshold = 0.5;
    double total() const { return tp + tn + fp + fn; }
};

// Fields are empty when the defining denominator is zero; undefined never
// silently becomes 0.
struct MetricsReport {
    std::optional<double> tnr;
    std::optional<double> fpr;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f_measure;
    std::optional<double> accuracy;
    std::optional<double> youden_j;
};

// Threshold sweep from +inf down; starts at (0,0), ends at (1,1), both
// coordinates nondecreasing.
struct RocCurve {
    std::vector<double> fpr;
    std::vector<double> tpr;
};

struct QuantileBin {
    int bin = 0;
    double mean_prediction = 0;
    double realized_rate = 0;
    int count = 0;
};

// Credit-score bands (ascending boundaries) and the published share of
// borrowers in each band; shares are used as the default prediction-bin
// sizing when no score column is available.
struct RiskBandSpec {
    std::vector<double> score_boundaries;  // strictly increasing; bands = size()+1
    std::vector<double> shares;            // one per band, sums to 1
    std::vector<std::string> band_names;   // optional

    int n_bands() const { return static_cast<int>(score_boundaries.size()) + 1; }
    void validate() const;
};

// The five standard industry bands: Deep Subprime / Subprime / Near Prime /
// Prime / Super Prime with their published population shares.
RiskBandSpec default_risk_bands();

struct CrossTabCell {
    double share = 0;  // fraction of the score band in this prediction band
    double realized_rate = 0;
    double predicted_rate = 0;
    int count = 0;
    bool empty = true;
};

struct BandCrossTab {
    RiskBandSpec spec;
    std::vector<std::vector<CrossTabCell>> cells;  // [score band][prediction band]
    std::vector<double> score_band_share;
    std::vector<double> score_band_realized;
    std::vector<double> score_band_predicted;
    std::vector<double> pred_band_realized;  // marginals over all score bands
    std::vector<double> pred_band_predicted;
};

struct WindowRun {
    std::string train_window;
    std::string test_window;
    PredictionSet preds;
};

struct WindowReport {
    std::string train_window;
    std::string test_window;
    double data_rate = 0;        // realized default share
    double predicted_rate = 0;   // mean forecast
    double mean_forecast_delinquent = 0;
    double mean_forecast_non_delinquent = 0;
    std::optional<double> auc;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f_measure;
    std::optional<double> accuracy;
    double loss = 0;
    int n = 0;
};

ConfusionMatrix confusion_at_threshold(const PredictionSet& preds, double threshold);
MetricsReport compute_metrics(const ConfusionMatrix& cm);

std::pair<RocCurve, double> roc_auc(const PredictionSet& preds);
double gini(const PredictionSet& preds);
double brier(const PredictionSet& preds);
double cross_entropy(const std::vector<double>& probabilities, const std::vector<int>& labels);
double cross_entropy(const PredictionSet& preds);
double accuracy_at_threshold(const PredictionSet& preds, double threshold);

std::vector<QuantileBin> bin_by_quantile(const PredictionSet& preds, int n_bins);

// Spearman with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);
// Bin index vs realized rate over quantile bins.
double rank_correlation(const std::vector<QuantileBin>& bins);
// Group rows by unique score, correlate score with realized default
// frequency; sign flipped so that a perfect score gives +1.
double score_rank_correlation(const std::vector<double>& scores, const std::vector<int>& labels);

int score_band_of(double score, const RiskBandSpec& spec);
// Prediction bands sized to match the empirical score-band shares, band 0 =
// highest predicted risk (mirrors the lowest score band).
std::vector<int> prediction_bands_matching(const std::vector<double>& probabilities,
                                           const std::vector<int>& score_band,
                                           int n_bands);
BandCrossTab band_crosstab(const PredictionSet& preds, const std::vector<double>& scores,
                           const RiskBandSpec& spec);

std::vector<WindowReport> metrics_over_windows(const std::vector<WindowRun>& runs,
                                               double threshold = 0.5);
// Rows restricted to current_flag == 1.
std::vector<WindowReport> metrics_over_windows_current(const std::vector<WindowRun>& runs,
                                                       double threshold = 0.5);

}  // namespace credlab
