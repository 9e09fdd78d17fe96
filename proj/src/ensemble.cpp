#include "credlab/ensemble.hpp"

#include "credlab/errors.hpp"

namespace credlab {

std::vector<double> blend(const std::vector<double>& p_dnn, const std::vector<double>& p_gbt,
                          double weight_dnn) {
    if (p_dnn.size() != p_gbt.size()) throw ModelError("component prediction lengths disagree");
    if (weight_dnn < 0.0 || weight_dnn > 1.0) throw ConfigError("weight_dnn must be in [0,1]");
    std::vector<double> out(p_dnn.size());
    for (std::size_t i = 0; i < p_dnn.size(); ++i)
        out[i] = weight_dnn * p_dnn[i] + (1.0 - weight_dnn) * p_gbt[i];
    return out;
}

std::vector<double> hybrid_probabilities(const HybridModel& model, const Eigen::MatrixXd& rows) {
    if (model.dnn == nullptr || model.gbt == nullptr)
        throw ModelError("hybrid model is missing a component");
    if (rows.cols() != model.dnn->input_dim)
        throw ModelError("schema mismatch: table has " + std::to_string(rows.cols()) +
                         " features, DNN expects " + std::to_string(model.dnn->input_dim));
    return blend(predict_probabilities(*model.dnn, rows),
                 predict_tree_probabilities(*model.gbt, rows), model.weight_dnn);
}

PredictionSet hybrid_predict(const HybridModel& model, const ObservationTable& table) {
    PredictionSet out;
    out.probabilities = hybrid_probabilities(model, table.rows);
    out.labels = table.labels;
    out.quarter = table.quarter;
    out.current_flag = table.current_flag;
    return out;
}

WeightSweepResult weight_sweep(const PredictionSet& dnn_preds, const PredictionSet& gbt_preds,
                               const std::vector<double>& grid) {
    if (grid.empty()) throw ConfigError("weight grid is empty");
    if (dnn_preds.size() != gbt_preds.size())
        throw ModelError("component prediction lengths disagree");
    WeightSweepResult result;
    result.best_loss = std::numeric_limits<double>::infinity();
    for (double w : grid) {
        const std::vector<double> p = blend(dnn_preds.probabilities, gbt_preds.probabilities, w);
        WeightSweepRow row;
        row.weight_dnn = w;
        row.loss = cross_entropy(p, dnn_preds.labels);
        result.rows.push_back(row);
        if (row.loss < result.best_loss) {
            result.best_loss = row.loss;
            result.best_weight = w;
        }
    }
    return result;
}

std::vector<double> default_weight_grid() {
    return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

}  // namespace credlab
