#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "credlab/data.hpp"
#include "credlab/metrics.hpp"

namespace credlab {

// Flattened pre-order node array; feature < 0 marks a leaf. Routing
// convention: value < threshold goes left.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;
    double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    int depth() const;
};

enum class EnsembleMode { Single, Forest, Gbt };

std::string to_string(EnsembleMode m);
EnsembleMode ensemble_mode_from_string(const std::string& s);

// Serves single CART, random forest and GBT uniformly. CART/forest leaves
// hold probabilities combined by weighted mean; GBT leaves hold log-odds
// increments combined as sigmoid(base + sum of shrinkage-weighted trees).
struct TreeEnsembleModel {
    std::vector<Tree> trees;
    std::vector<double> tree_weights;
    double base_score = 0.0;
    EnsembleMode mode = EnsembleMode::Single;

    double predict_raw(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct GbtConfig {
    int n_trees = 100;
    int max_depth = 6;
    double learning_rate = 0.05;
    int max_bins = 64;
    double min_child_weight = 1.0;
    double lambda = 1.0;  // l2 penalty on leaf values
    int early_stopping_rounds = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RfConfig {
    int n_trees = 100;
    int max_depth = 10;
    int min_leaf = 1;
    bool bootstrap = true;
    // 0 selects ceil(sqrt(d)) candidate features per split.
    int features_per_split = 0;
    std::uint64_t seed = 0;
};

struct GbtHistory {
    std::vector<double> train_loss;       // per round
    std::vector<double> validation_loss;  // per round
    int best_round = 0;                   // number of trees kept
};

TreeEnsembleModel fit_cart(const ObservationTable& train, int max_depth, int min_leaf);
TreeEnsembleModel fit_random_forest(const ObservationTable& train, const RfConfig& config);
std::pair<TreeEnsembleModel, GbtHistory> fit_gbt(const ObservationTable& train,
                                                 const ObservationTable& validation,
                                                 const GbtConfig& config);

PredictionSet predict_tree(const TreeEnsembleModel& model, const ObservationTable& table);
std::vector<double> predict_tree_probabilities(const TreeEnsembleModel& model,
                                               const Eigen::MatrixXd& rows);

// Unweighted quantile boundaries computed once on the training matrix;
// with max_bins >= the number of distinct values every value gets its own bin.
std::vector<std::vector<double>> histogram_bin_edges(const Eigen::MatrixXd& rows, int max_bins);

struct GbtPreset {
    GbtConfig config;
};

// "ofs-gbt": depth 6, 1000 trees, lr 0.05, 64 bins.
// "pooled-gbt": depth 6, up to 10000 trees, lr 0.3, patience 1000.
GbtConfig gbt_preset(const std::string& name);

}  // namespace credlab
