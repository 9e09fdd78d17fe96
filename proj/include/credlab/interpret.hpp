#pragma once
#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "credlab/data.hpp"

namespace credlab {

// Uniform prediction surface for interpretation; rows are in the same
// (scaled) space the models were trained in.
using PredictFn = std::function<std::vector<double>(const Eigen::MatrixXd&)>;

struct ImportanceEntry {
    std::string name;         // feature or group label
    std::vector<int> features;
    double loss_after = 0;
    double accuracy_after = 0;
};

struct ImportanceReport {
    double baseline_loss = 0;
    double baseline_accuracy = 0;
    std::vector<ImportanceEntry> entries;
};

// One explained instance. Efficiency: base_value + sum(phi) equals the model
// prediction (exactly for the enumerator; restored by renormalization for
// the sampled estimator).
struct ShapExplanation {
    double base_value = 0;
    std::vector<double> phi;
    double prediction = 0;
};

struct FeatureGroup {
    std::string label;
    std::vector<int> features;
};

struct FeatureGrouping {
    std::vector<FeatureGroup> groups;  // components of size >= 2 only
};

enum class ShapAggregation { SignedSum, MeanAbs, SumAbs };

struct AggregatedShapRow {
    std::string label;
    std::vector<int> features;
    double value = 0;
    double share = 0;  // filled when normalized
    int rank = 0;      // 1 = largest magnitude
};

// Shuffle a feature column within a seeded sample (distribution kept intact),
// evaluate loss/accuracy, restore, repeat n_repeats times and average.
// Groups, when given, are permuted jointly with one shared permutation.
ImportanceReport permutation_importance(const PredictFn& model, const ObservationTable& test,
                                        int n_repeats, int sample_size, std::uint64_t seed,
                                        double threshold = 0.5,
                                        const std::vector<FeatureGroup>& joint_groups = {});

// Exact interventional Shapley by subset enumeration; cost 2^d model sweeps
// over the background, so d is capped at 15.
ShapExplanation shapley_exact(const PredictFn& model, const Eigen::RowVectorXd& instance,
                              const Eigen::MatrixXd& background);

// Permutation-sampling estimator of the same functional; unbiased before the
// final renormalization that distributes the efficiency residual across
// features in proportion to |phi|.
std::vector<ShapExplanation> shapley_sampled(const PredictFn& model,
                                             const Eigen::MatrixXd& instances,
                                             const Eigen::MatrixXd& background,
                                             int n_permutations, std::uint64_t seed,
                                             bool renormalize = true);

// Seeded sample of background rows from a table.
Eigen::MatrixXd sample_background(const ObservationTable& table, int background_size,
                                  std::uint64_t seed);

ShapExplanation hybrid_shap(const ShapExplanation& dnn_expl, const ShapExplanation& gbt_expl,
                            double weight_dnn);

// Edges where |Pearson correlation| > threshold; groups are the connected
// components of size >= 2.
FeatureGrouping group_features(const ObservationTable& train, double threshold = 0.7);

std::vector<AggregatedShapRow> aggregate_shap(const std::vector<ShapExplanation>& explanations,
                                              const FeatureSchema& schema,
                                              const FeatureGrouping& grouping,
                                              ShapAggregation mode, bool normalize = false);

}  // namespace credlab
