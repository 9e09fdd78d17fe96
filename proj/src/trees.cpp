#include "credlab/trees.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "credlab/errors.hpp"
#include "credlab/rng.hpp"

namespace credlab {

double Tree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
        const TreeNode& n = nodes[static_cast<std::size_t>(i)];
        i = x(n.feature) < n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
}

int Tree::depth() const {
    // Depth = number of split levels above the deepest leaf.
    std::vector<int> level(nodes.size(), 0);
    int max_level = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].is_leaf()) {
            max_level = std::max(max_level, level[i]);
        } else {
            level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
            level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
        }
    }
    return max_level;
}

std::string to_string(EnsembleMode m) {
    switch (m) {
        case EnsembleMode::Single: return "single";
        case EnsembleMode::Forest: return "forest";
        case EnsembleMode::Gbt: return "gbt";
    }
    return "single";
}

EnsembleMode ensemble_mode_from_string(const std::string& s) {
    if (s == "single") return EnsembleMode::Single;
    if (s == "forest") return EnsembleMode::Forest;
    if (s == "gbt") return EnsembleMode::Gbt;
    throw ConfigError("unknown ensemble mode: " + s);
}

double TreeEnsembleModel::predict_raw(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    double sum = mode == EnsembleMode::Gbt ? base_score : 0.0;
    for (std::size_t t = 0; t < trees.size(); ++t)
        sum += tree_weights[t] * trees[t].predict_row(x);
    return sum;
}

double TreeEnsembleModel::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    const double raw = predict_raw(x);
    if (mode == EnsembleMode::Gbt) return 1.0 / (1.0 + std::exp(-raw));
    return std::min(std::max(raw, 0.0), 1.0);
}

void GbtConfig::validate() const {
    if (n_trees < 0) throw ConfigError("n_trees must be >= 0");
    if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
    if (max_bins < 2) throw ConfigError("max_bins must be >= 2");
    if (learning_rate <= 0.0 || learning_rate > 1.0)
        throw ConfigError("learning_rate must be in (0,1]");
}

namespace {

// ---------------------------------------------------------------------------
// Exact Gini splitting shared by CART and random forest.
// ---------------------------------------------------------------------------

struct CartContext {
    const Eigen::MatrixXd& X;
    const std::vector<int>& y;
    int max_depth;
    int min_leaf;
    Rng* rng;   // nullptr = no feature subsampling
    int mtry;   // candidate features per split when rng is set
};

struct BestSplit {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double child_impurity = std::numeric_limits<double>::infinity();
};

double gini_binary(double pos, double n) {
    if (n <= 0.0) return 0.0;
    const double p = pos / n;
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

// Weighted child Gini for every (feature, boundary) pair; ties break to the
// lowest feature index, then the lowest threshold.
BestSplit find_best_split(const CartContext& ctx, const std::vector<int>& idx) {
    BestSplit best;
    const int d = static_cast<int>(ctx.X.cols());
    std::vector<int> features;
    if (ctx.rng != nullptr && ctx.mtry < d) {
        features = ctx.rng->sample_without_replacement(d, ctx.mtry);
        std::sort(features.begin(), features.end());
    } else {
        features.resize(static_cast<std::size_t>(d));
        std::iota(features.begin(), features.end(), 0);
    }
    const auto n = static_cast<double>(idx.size());
    double total_pos = 0;
    for (int i : idx) total_pos += ctx.y[static_cast<std::size_t>(i)];

    std::vector<std::pair<double, int>> vals(idx.size());
    for (int f : features) {
        for (std::size_t k = 0; k < idx.size(); ++k)
            vals[k] = {ctx.X(idx[k], f), ctx.y[static_cast<std::size_t>(idx[k])]};
        std::sort(vals.begin(), vals.end());
        double left_pos = 0;
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            left_pos += vals[k].second;
            if (vals[k].first == vals[k + 1].first) continue;
            const double n_left = static_cast<double>(k + 1);
            const double n_right = n - n_left;
            if (n_left < ctx.min_leaf || n_right < ctx.min_leaf) continue;
            const double impurity =
                (n_left * gini_binary(left_pos, n_left) +
                 n_right * gini_binary(total_pos - left_pos, n_right)) /
                n;
            const double threshold = vals[k].first + 0.5 * (vals[k + 1].first - vals[k].first);
            if (impurity < best.child_impurity - 1e-15 ||
                (std::abs(impurity - best.child_impurity) <= 1e-15 &&
                 (f < best.feature || (f == best.feature && threshold < best.threshold)))) {
                best.found = true;
                best.feature = f;
                best.threshold = threshold;
                best.child_impurity = impurity;
            }
        }
    }
    return best;
}

int build_cart_node(const CartContext& ctx, const std::vector<int>& idx, int depth,
                    std::vector<TreeNode>& nodes) {
    const int self = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double pos = 0;
    for (int i : idx) pos += ctx.y[static_cast<std::size_t>(i)];
    const double mean = pos / static_cast<double>(idx.size());
    const bool pure = pos == 0.0 || pos == static_cast<double>(idx.size());
    if (depth >= ctx.max_depth || static_cast<int>(idx.size()) < 2 * ctx.min_leaf || pure) {
        nodes[static_cast<std::size_t>(self)].value = mean;
        return self;
    }
    const BestSplit split = find_best_split(ctx, idx);
    if (!split.found) {
        nodes[static_cast<std::size_t>(self)].value = mean;
        return self;
    }
    std::vector<int> left_idx, right_idx;
    for (int i : idx)
        (ctx.X(i, split.feature) < split.threshold ? left_idx : right_idx).push_back(i);
    nodes[static_cast<std::size_t>(self)].feature = split.feature;
    nodes[static_cast<std::size_t>(self)].threshold = split.threshold;
    const int left = build_cart_node(ctx, left_idx, depth + 1, nodes);
    const int right = build_cart_node(ctx, right_idx, depth + 1, nodes);
    nodes[static_cast<std::size_t>(self)].left = left;
    nodes[static_cast<std::size_t>(self)].right = right;
    return self;
}

Tree fit_cart_tree(const CartContext& ctx, const std::vector<int>& idx) {
    Tree tree;
    build_cart_node(ctx, idx, 0, tree.nodes);
    return tree;
}

}  // namespace

TreeEnsembleModel fit_cart(const ObservationTable& train, int max_depth, int min_leaf) {
    if (train.n_rows() == 0) throw DataError("empty training table");
    if (max_depth < 1 || min_leaf < 1) throw ConfigError("max_depth and min_leaf must be >= 1");
    if (train.n_rows() < 2 * min_leaf && train.n_rows() > 1)
        throw DataError("need at least 2*min_leaf rows");
    CartContext ctx{train.rows, train.labels, max_depth, min_leaf, nullptr, 0};
    std::vector<int> idx(static_cast<std::size_t>(train.n_rows()));
    std::iota(idx.begin(), idx.end(), 0);
    TreeEnsembleModel model;
    model.mode = EnsembleMode::Single;
    model.trees.push_back(fit_cart_tree(ctx, idx));
    model.tree_weights.push_back(1.0);
    return model;
}

TreeEnsembleModel fit_random_forest(const ObservationTable& train, const RfConfig& config) {
    if (train.n_rows() == 0) throw DataError("empty training table");
    if (config.n_trees < 1) throw ConfigError("n_trees must be >= 1");
    const int d = train.n_features();
    const int mtry = config.features_per_split > 0
                         ? std::min(config.features_per_split, d)
                         : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
    TreeEnsembleModel model;
    model.mode = EnsembleMode::Forest;
    const int n = train.n_rows();
    for (int t = 0; t < config.n_trees; ++t) {
        Rng rng(derive_seed(config.seed, "rf-tree", static_cast<std::uint64_t>(t)));
        std::vector<int> idx;
        idx.reserve(static_cast<std::size_t>(n));
        if (config.bootstrap) {
            for (int i = 0; i < n; ++i)
                idx.push_back(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n))));
            std::sort(idx.begin(), idx.end());
        } else {
            idx.resize(static_cast<std::size_t>(n));
            std::iota(idx.begin(), idx.end(), 0);
        }
        CartContext ctx{train.rows, train.labels, config.max_depth, config.min_leaf,
                        mtry < d ? &rng : nullptr, mtry};
        model.trees.push_back(fit_cart_tree(ctx, idx));
        model.tree_weights.push_back(1.0 / config.n_trees);
    }
    return model;
}

std::vector<std::vector<double>> histogram_bin_edges(const Eigen::MatrixXd& rows, int max_bins) {
    const int d = static_cast<int>(rows.cols());
    std::vector<std::vector<double>> edges(static_cast<std::size_t>(d));
    std::vector<double> col(static_cast<std::size_t>(rows.rows()));
    for (int f = 0; f < d; ++f) {
        for (Eigen::Index i = 0; i < rows.rows(); ++i)
            col[static_cast<std::size_t>(i)] = rows(i, f);
        std::sort(col.begin(), col.end());
        std::vector<double> distinct;
        for (double v : col)
            if (distinct.empty() || v != distinct.back()) distinct.push_back(v);
        auto& e = edges[static_cast<std::size_t>(f)];
        if (static_cast<int>(distinct.size()) <= max_bins) {
            for (std::size_t k = 0; k + 1 < distinct.size(); ++k)
                e.push_back(distinct[k] + 0.5 * (distinct[k + 1] - distinct[k]));
        } else {
            const auto n = static_cast<long long>(col.size());
            for (int k = 1; k < max_bins; ++k) {
                const auto pos = static_cast<std::size_t>(k * n / max_bins);
                if (pos == 0 || col[pos] == col[pos - 1]) continue;
                const double edge = col[pos - 1] + 0.5 * (col[pos] - col[pos - 1]);
                if (e.empty() || edge > e.back()) e.push_back(edge);
            }
        }
    }
    return edges;
}

namespace {

struct GbtBins {
    std::vector<std::vector<double>> edges;       // per feature
    std::vector<std::vector<std::uint16_t>> bin;  // [feature][row]
    std::vector<int> n_bins;                      // per feature
};

GbtBins bin_rows(const Eigen::MatrixXd& rows, int max_bins) {
    GbtBins b;
    b.edges = histogram_bin_edges(rows, max_bins);
    const int d = static_cast<int>(rows.cols());
    b.bin.resize(static_cast<std::size_t>(d));
    b.n_bins.resize(static_cast<std::size_t>(d));
    for (int f = 0; f < d; ++f) {
        const auto& e = b.edges[static_cast<std::size_t>(f)];
        b.n_bins[static_cast<std::size_t>(f)] = static_cast<int>(e.size()) + 1;
        auto& col = b.bin[static_cast<std::size_t>(f)];
        col.resize(static_cast<std::size_t>(rows.rows()));
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            // bin = count of edges <= x, so "bin <= b" matches "x < edge_b".
            col[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(
                std::upper_bound(e.begin(), e.end(), rows(i, f)) - e.begin());
        }
    }
    return b;
}

struct GbtNodeStats {
    double g = 0, h = 0;
};

struct GbtSplit {
    bool found = false;
    int feature = -1;
    int edge = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

struct GbtContext {
    const GbtBins& bins;
    const std::vector<double>& grad;
    const std::vector<double>& hess;
    const GbtConfig& config;
};

double leaf_objective(double g, double h, double lambda) {
    return 0.5 * g * g / (h + lambda);
}

GbtSplit find_gbt_split(const GbtContext& ctx, const std::vector<int>& idx, double total_g,
                        double total_h) {
    GbtSplit best;
    const double lambda = ctx.config.lambda;
    const double parent = leaf_objective(total_g, total_h, lambda);
    const int d = static_cast<int>(ctx.bins.bin.size());
    std::vector<GbtNodeStats> hist;
    for (int f = 0; f < d; ++f) {
        const int nb = ctx.bins.n_bins[static_cast<std::size_t>(f)];
        if (nb < 2) continue;
        hist.assign(static_cast<std::size_t>(nb), GbtNodeStats{});
        const auto& col = ctx.bins.bin[static_cast<std::size_t>(f)];
        for (int i : idx) {
            auto& s = hist[col[static_cast<std::size_t>(i)]];
            s.g += ctx.grad[static_cast<std::size_t>(i)];
            s.h += ctx.hess[static_cast<std::size_t>(i)];
        }
        double gl = 0, hl = 0;
        for (int b = 0; b + 1 < nb; ++b) {
            gl += hist[static_cast<std::size_t>(b)].g;
            hl += hist[static_cast<std::size_t>(b)].h;
            const double gr = total_g - gl, hr = total_h - hl;
            if (hl < ctx.config.min_child_weight || hr < ctx.config.min_child_weight) continue;
            const double gain =
                leaf_objective(gl, hl, lambda) + leaf_objective(gr, hr, lambda) - parent;
            if (gain > best.gain + 1e-12) {
                best.found = true;
                best.feature = f;
                best.edge = b;
                best.threshold = ctx.bins.edges[static_cast<std::size_t>(f)][static_cast<std::size_t>(b)];
                best.gain = gain;
            }
        }
    }
    return best;
}

int build_gbt_node(const GbtContext& ctx, const std::vector<int>& idx, int depth,
                   std::vector<TreeNode>& nodes) {
    const int self = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double g = 0, h = 0;
    for (int i : idx) {
        g += ctx.grad[static_cast<std::size_t>(i)];
        h += ctx.hess[static_cast<std::size_t>(i)];
    }
    auto make_leaf = [&]() {
        nodes[static_cast<std::size_t>(self)].value = -g / (h + ctx.config.lambda);
        return self;
    };
    if (depth >= ctx.config.max_depth || idx.size() < 2) return make_leaf();
    const GbtSplit split = find_gbt_split(ctx, idx, g, h);
    if (!split.found) return make_leaf();
    std::vector<int> left_idx, right_idx;
    const auto& col = ctx.bins.bin[static_cast<std::size_t>(split.feature)];
    for (int i : idx)
        (col[static_cast<std::size_t>(i)] <= split.edge ? left_idx : right_idx).push_back(i);
    nodes[static_cast<std::size_t>(self)].feature = split.feature;
    nodes[static_cast<std::size_t>(self)].threshold = split.threshold;
    const int left = build_gbt_node(ctx, left_idx, depth + 1, nodes);
    const int right = build_gbt_node(ctx, right_idx, depth + 1, nodes);
    nodes[static_cast<std::size_t>(self)].left = left;
    nodes[static_cast<std::size_t>(self)].right = right;
    return self;
}

}  // namespace

std::pair<TreeEnsembleModel, GbtHistory> fit_gbt(const ObservationTable& train,
                                                 const ObservationTable& validation,
                                                 const GbtConfig& config) {
    config.validate();
    if (train.n_rows() == 0) throw DataError("empty training table");
    double prevalence = 0;
    for (int y : train.labels) prevalence += y;
    prevalence /= static_cast<double>(train.n_rows());
    if (prevalence == 0.0 || prevalence == 1.0)
        throw DataError("GBT requires both classes in the training labels");

    TreeEnsembleModel model;
    model.mode = EnsembleMode::Gbt;
    model.base_score = std::log(prevalence / (1.0 - prevalence));

    const GbtBins bins = bin_rows(train.rows, config.max_bins);
    const auto n = static_cast<std::size_t>(train.n_rows());
    std::vector<double> score(n, model.base_score);
    std::vector<double> val_score(static_cast<std::size_t>(validation.n_rows()), model.base_score);
    std::vector<double> grad(n), hess(n), prob(n);
    std::vector<double> val_prob(val_score.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);

    GbtHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    int best_round = -1;

    for (int round = 0; round < config.n_trees; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-score[i]));
            prob[i] = p;
            grad[i] = p - train.labels[i];
            hess[i] = std::max(p * (1.0 - p), 1e-16);
        }
        GbtContext ctx{bins, grad, hess, config};
        Tree tree;
        build_gbt_node(ctx, idx, 0, tree.nodes);
        model.trees.push_back(tree);
        model.tree_weights.push_back(config.learning_rate);

        for (std::size_t i = 0; i < n; ++i)
            score[i] += config.learning_rate * tree.predict_row(train.rows.row(static_cast<Eigen::Index>(i)));
        for (std::size_t i = 0; i < val_score.size(); ++i)
            val_score[i] +=
                config.learning_rate * tree.predict_row(validation.rows.row(static_cast<Eigen::Index>(i)));

        for (std::size_t i = 0; i < n; ++i) prob[i] = 1.0 / (1.0 + std::exp(-score[i]));
        history.train_loss.push_back(cross_entropy(prob, train.labels));
        if (!val_score.empty()) {
            for (std::size_t i = 0; i < val_score.size(); ++i)
                val_prob[i] = 1.0 / (1.0 + std::exp(-val_score[i]));
            const double vl = cross_entropy(val_prob, validation.labels);
            history.validation_loss.push_back(vl);
            if (vl < best_val - 1e-12) {
                best_val = vl;
                best_round = round;
            } else if (round - best_round >= config.early_stopping_rounds) {
                break;
            }
        } else {
            best_round = round;
        }
    }
    if (best_round >= 0 && best_round + 1 < static_cast<int>(model.trees.size())) {
        model.trees.resize(static_cast<std::size_t>(best_round) + 1);
        model.tree_weights.resize(static_cast<std::size_t>(best_round) + 1);
    }
    history.best_round = static_cast<int>(model.trees.size());
    return {model, history};
}

PredictionSet predict_tree(const TreeEnsembleModel& model, const ObservationTable& table) {
    if (!model.trees.empty()) {
        for (const auto& node : model.trees.front().nodes)
            if (!node.is_leaf() && node.feature >= table.n_features())
                throw ModelError("table has fewer features than the model expects");
    }
    PredictionSet out;
    out.probabilities.reserve(static_cast<std::size_t>(table.n_rows()));
    for (int i = 0; i < table.n_rows(); ++i)
        out.probabilities.push_back(model.predict_row(table.rows.row(i)));
    out.labels = table.labels;
    out.quarter = table.quarter;
    out.current_flag = table.current_flag;
    return out;
}

std::vector<double> predict_tree_probabilities(const TreeEnsembleModel& model,
                                               const Eigen::MatrixXd& rows) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        out.push_back(model.predict_row(rows.row(i)));
    return out;
}

GbtConfig gbt_preset(const std::string& name) {
    GbtConfig c;
    if (name == "ofs-gbt") {
        c.n_trees = 1000;
        c.max_depth = 6;
        c.learning_rate = 0.05;
        c.max_bins = 64;
        c.early_stopping_rounds = 100;
        return c;
    }
    if (name == "pooled-gbt") {
        c.n_trees = 10000;
        c.max_depth = 6;
        c.learning_rate = 0.3;
        c.max_bins = 64;
        c.early_stopping_rounds = 1000;
        return c;
    }
    throw ConfigError("unknown GBT preset: " + name);
}

}  // namespace credlab
