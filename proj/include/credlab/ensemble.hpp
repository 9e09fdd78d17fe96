#pragma once
#include <vector>

#include "credlab/metrics.hpp"
#include "credlab/network.hpp"
#include "credlab/trees.hpp"

namespace credlab {

// Equal-weight (by default) arithmetic mean of the two component
// probabilities; both submodels must be trained on the same schema and
// scaling.
struct HybridModel {
    const NetworkModel* dnn = nullptr;
    const TreeEnsembleModel* gbt = nullptr;
    double weight_dnn = 0.5;
};

struct WeightSweepRow {
    double weight_dnn = 0;
    double loss = 0;
};

struct WeightSweepResult {
    std::vector<WeightSweepRow> rows;
    double best_weight = 0;
    double best_loss = 0;
};

PredictionSet hybrid_predict(const HybridModel& model, const ObservationTable& table);
std::vector<double> hybrid_probabilities(const HybridModel& model, const Eigen::MatrixXd& rows);
// Elementwise convex combination of already computed component predictions.
std::vector<double> blend(const std::vector<double>& p_dnn, const std::vector<double>& p_gbt,
                          double weight_dnn);

WeightSweepResult weight_sweep(const PredictionSet& dnn_preds, const PredictionSet& gbt_preds,
                               const std::vector<double>& grid);
// Default grid: 0.1 through 0.9 in steps of 0.1.
std::vector<double> default_weight_grid();

}  // namespace credlab
