#pragma once
#include <cstdint>
#include <optional>
#include <vector>

#include "credlab/metrics.hpp"

namespace credlab {

struct ValueAddedParams {
    double interest_rate = 0.10;  // annual
    int amortization_years = 3;
    double runup = 1.2;  // B_d / B_r, > 1
    double threshold = 0.5;

    void validate() const;
};

// The value-added formula inherits the convention of the lender framework it
// comes from, where a "negative" is a flagged defaulter whose credit line is
// cut: TN = correctly flagged defaulter, FN = wrongly flagged good customer,
// FP = missed defaulter. Our confusion matrices treat default as the positive
// class, so the mapping is TN<-tp, FN<-fp, FP<-fn.
struct VaCounts {
    double flagged_defaulters = 0;  // TN in the VA formula
    double false_alarms = 0;        // FN in the VA formula
    double missed_defaulters = 0;   // FP in the VA formula
};

VaCounts va_counts_from_confusion(const ConfusionMatrix& cm);

// VA = (TN - FN*[1-(1+r)^-N]*[runup-1]^-1) / (TN+FP), in the lender
// convention above. Undefined when there are no actual defaulters.
std::optional<double> value_added(const VaCounts& counts, const ValueAddedParams& params);
std::optional<double> value_added(const ConfusionMatrix& cm, const ValueAddedParams& params);

struct ValueAddedSurface {
    std::vector<double> r_grid;
    std::vector<double> runup_grid;
    std::vector<std::vector<double>> va;  // [r index][runup index]
};

ValueAddedSurface value_added_surface(const ConfusionMatrix& cm, const std::vector<double>& r_grid,
                                      const std::vector<double>& runup_grid,
                                      int amortization_years);

// VA(a) - VA(b); both matrices must describe the same population size.
double comparative_value(const ConfusionMatrix& cm_a, const ConfusionMatrix& cm_b,
                         const ValueAddedParams& params);

struct AggregateRatePoint {
    int quarter = 0;
    double predicted_rate = 0;
    double realized_rate = 0;
};

struct AggregateRateSeries {
    std::vector<AggregateRatePoint> points;
    std::optional<double> correlation;  // Pearson across quarters
};

// Mean predicted probability and mean realized outcome per forecast quarter.
AggregateRateSeries aggregate_default_rate(const std::vector<PredictionSet>& preds_by_quarter);
// Convenience split on the quarter stamps carried by a prediction set.
AggregateRateSeries aggregate_default_rate(const PredictionSet& preds);

// Inverse-CDF sampling on the truncated interval; deterministic under seed.
double truncated_normal_draw(double mean, double std_dev, double low, double high,
                             std::uint64_t seed);
// Quantile u in (0,1) mapped through the truncated normal; shared-u draws let
// a borrower keep the same rate quantile across band assignments.
double truncated_normal_quantile(double mean, double std_dev, double low, double high, double u);

struct RateBandParams {
    double mean = 0.15;
    double std_dev = 0.02;
    double low = 0.01;
    double high = 0.35;
};

struct SavingsSpec {
    RiskBandSpec bands;
    std::vector<RateBandParams> band_rates;  // one per band
    std::uint64_t seed = 0;

    void validate() const;
};

struct SavingsCell {
    double mean_rate_diff = 0;  // rate(score band) - rate(prediction band)
    double mean_saving = 0;     // dollars
    int count = 0;
    bool empty = true;
};

struct SavingsTable {
    std::vector<std::vector<SavingsCell>> cells;  // [prediction band][score band]
    double cumulative_total = 0;
    std::vector<double> per_row_saving;
};

// Placeholder defaults for the per-band interest-rate distributions; the real
// distributions are a configuration input.
SavingsSpec default_savings_spec();

SavingsTable borrower_savings(const std::vector<double>& balances,
                              const std::vector<double>& scores, const PredictionSet& preds,
                              const SavingsSpec& spec);

}  // namespace credlab
