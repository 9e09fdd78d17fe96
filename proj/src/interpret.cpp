#include "credlab/interpret.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "credlab/errors.hpp"
#include "credlab/metrics.hpp"
#include "credlab/rng.hpp"

namespace credlab {

namespace {

double accuracy_of(const std::vector<double>& probs, const std::vector<int>& labels,
                   double threshold) {
    double correct = 0;
    for (std::size_t i = 0; i < probs.size(); ++i)
        correct += (probs[i] > threshold ? 1 : 0) == labels[i] ? 1.0 : 0.0;
    return correct / static_cast<double>(probs.size());
}

}  // namespace

ImportanceReport permutation_importance(const PredictFn& model, const ObservationTable& test,
                                        int n_repeats, int sample_size, std::uint64_t seed,
                                        double threshold,
                                        const std::vector<FeatureGroup>& joint_groups) {
    if (sample_size < 1 || sample_size > test.n_rows())
        throw DataError("sample_size must be in [1, N]");
    if (n_repeats < 0) throw ConfigError("n_repeats must be >= 0");

    Rng sample_rng(derive_seed(seed, "perm-sample"));
    std::vector<int> rows;
    if (sample_size < test.n_rows()) {
        rows = sample_rng.sample_without_replacement(test.n_rows(), sample_size);
        std::sort(rows.begin(), rows.end());
    } else {
        rows.resize(static_cast<std::size_t>(test.n_rows()));
        std::iota(rows.begin(), rows.end(), 0);
    }
    Eigen::MatrixXd X(sample_size, test.n_features());
    std::vector<int> y(static_cast<std::size_t>(sample_size));
    for (int k = 0; k < sample_size; ++k) {
        X.row(k) = test.rows.row(rows[static_cast<std::size_t>(k)]);
        y[static_cast<std::size_t>(k)] = test.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(k)])];
    }

    ImportanceReport report;
    const std::vector<double> base = model(X);
    report.baseline_loss = cross_entropy(base, y);
    report.baseline_accuracy = accuracy_of(base, y, threshold);
    if (n_repeats == 0) return report;

    std::vector<ImportanceEntry> entities;
    for (int f = 0; f < test.n_features(); ++f) {
        ImportanceEntry e;
        e.name = test.schema.names[static_cast<std::size_t>(f)];
        e.features = {f};
        entities.push_back(e);
    }
    for (const auto& g : joint_groups) {
        ImportanceEntry e;
        e.name = g.label;
        e.features = g.features;
        entities.push_back(e);
    }

    for (std::size_t ent = 0; ent < entities.size(); ++ent) {
        ImportanceEntry& e = entities[ent];
        double sum_loss = 0, sum_acc = 0;
        for (int r = 0; r < n_repeats; ++r) {
            Rng rng(derive_seed(seed, "perm-shuffle",
                                ent * 1000003ULL + static_cast<std::uint64_t>(r)));
            const std::vector<int> perm = rng.permutation(sample_size);
            Eigen::MatrixXd saved(sample_size, static_cast<int>(e.features.size()));
            for (std::size_t c = 0; c < e.features.size(); ++c)
                saved.col(static_cast<Eigen::Index>(c)) = X.col(e.features[c]);
            // One shared permutation across the group keeps within-group
            // consistency intact.
            for (int k = 0; k < sample_size; ++k)
                for (std::size_t c = 0; c < e.features.size(); ++c)
                    X(k, e.features[c]) = saved(perm[static_cast<std::size_t>(k)], static_cast<Eigen::Index>(c));
            const std::vector<double> p = model(X);
            sum_loss += cross_entropy(p, y);
            sum_acc += accuracy_of(p, y, threshold);
            for (std::size_t c = 0; c < e.features.size(); ++c)
                X.col(e.features[c]) = saved.col(static_cast<Eigen::Index>(c));
        }
        e.loss_after = sum_loss / n_repeats;
        e.accuracy_after = sum_acc / n_repeats;
        report.entries.push_back(e);
    }
    return report;
}

ShapExplanation shapley_exact(const PredictFn& model, const Eigen::RowVectorXd& instance,
                              const Eigen::MatrixXd& background) {
    const int d = static_cast<int>(instance.size());
    if (d > 15)
        throw ModelError("shapley_exact is limited to 15 features (2^d subsets); "
                         "use shapley_sampled instead");
    if (background.rows() == 0) throw DataError("background must be nonempty");
    if (background.cols() != d) throw DataError("background feature count mismatch");

    const std::size_t n_masks = 1ULL << d;
    std::vector<double> v(n_masks);
    Eigen::MatrixXd composite = background;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
        composite = background;
        for (int j = 0; j < d; ++j)
            if (mask & (1ULL << j)) composite.col(j).setConstant(instance(j));
        const std::vector<double> p = model(composite);
        double sum = 0;
        for (double x : p) sum += x;
        v[mask] = sum / static_cast<double>(p.size());
    }

    std::vector<double> fact(static_cast<std::size_t>(d) + 1, 1.0);
    for (int i = 1; i <= d; ++i) fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i - 1)] * i;
    std::vector<double> weight(static_cast<std::size_t>(d), 0.0);  // by |S|
    for (int s = 0; s < d; ++s)
        weight[static_cast<std::size_t>(s)] =
            fact[static_cast<std::size_t>(s)] * fact[static_cast<std::size_t>(d - s - 1)] / fact[static_cast<std::size_t>(d)];

    ShapExplanation out;
    out.base_value = v[0];
    out.phi.assign(static_cast<std::size_t>(d), 0.0);
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
        const int s = std::popcount(mask);
        if (s == d) continue;
        const double w = weight[static_cast<std::size_t>(s)];
        for (int j = 0; j < d; ++j) {
            if (mask & (1ULL << j)) continue;
            out.phi[static_cast<std::size_t>(j)] += w * (v[mask | (1ULL << j)] - v[mask]);
        }
    }
    out.prediction = v[n_masks - 1];
    return out;
}

Eigen::MatrixXd sample_background(const ObservationTable& table, int background_size,
                                  std::uint64_t seed) {
    if (background_size < 1 || background_size > table.n_rows())
        throw DataError("background_size must be in [1, N]");
    Rng rng(derive_seed(seed, "shap-background"));
    std::vector<int> idx = rng.sample_without_replacement(table.n_rows(), background_size);
    std::sort(idx.begin(), idx.end());
    Eigen::MatrixXd out(background_size, table.n_features());
    for (int k = 0; k < background_size; ++k)
        out.row(k) = table.rows.row(idx[static_cast<std::size_t>(k)]);
    return out;
}

std::vector<ShapExplanation> shapley_sampled(const PredictFn& model,
                                             const Eigen::MatrixXd& instances,
                                             const Eigen::MatrixXd& background,
                                             int n_permutations, std::uint64_t seed,
                                             bool renormalize) {
    const int d = static_cast<int>(instances.cols());
    if (background.cols() != d) throw DataError("background feature count mismatch");
    if (background.rows() == 0) throw DataError("background must be nonempty");
    if (n_permutations < 1) throw ConfigError("n_permutations must be >= 1");

    // Base value: expectation of the prediction over the full background.
    const std::vector<double> bg_pred = model(background);
    double base = 0;
    for (double p : bg_pred) base += p;
    base /= static_cast<double>(bg_pred.size());

    std::vector<ShapExplanation> out;
    out.reserve(static_cast<std::size_t>(instances.rows()));
    const Eigen::Index nb = background.rows();
    for (Eigen::Index inst = 0; inst < instances.rows(); ++inst) {
        // Per-instance derived seed: explanations are order-independent.
        Rng rng(derive_seed(seed, "shap-instance", static_cast<std::uint64_t>(inst)));
        const Eigen::RowVectorXd x = instances.row(inst);
        ShapExplanation e;
        e.base_value = base;
        e.phi.assign(static_cast<std::size_t>(d), 0.0);
        // v(prefix) is the mean prediction over the background with the
        // prefix features pinned to the instance; each permutation's chain
        // telescopes from v(empty) to f(x) exactly.
        Eigen::MatrixXd batch(static_cast<Eigen::Index>(d + 1) * nb, d);
        for (int p = 0; p < n_permutations; ++p) {
            const std::vector<int> order = rng.permutation(d);
            Eigen::MatrixXd composite = background;
            batch.middleRows(0, nb) = composite;
            for (int k = 0; k < d; ++k) {
                composite.col(order[static_cast<std::size_t>(k)]).setConstant(x(order[static_cast<std::size_t>(k)]));
                batch.middleRows(static_cast<Eigen::Index>(k + 1) * nb, nb) = composite;
            }
            const std::vector<double> preds = model(batch);
            double prev = 0;
            for (Eigen::Index r = 0; r < nb; ++r) prev += preds[static_cast<std::size_t>(r)];
            prev /= static_cast<double>(nb);
            for (int k = 0; k < d; ++k) {
                double next = 0;
                for (Eigen::Index r = 0; r < nb; ++r)
                    next += preds[static_cast<std::size_t>((k + 1) * nb + r)];
                next /= static_cast<double>(nb);
                e.phi[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] += next - prev;
                prev = next;
            }
        }
        for (double& phi : e.phi) phi /= n_permutations;

        Eigen::MatrixXd self(1, d);
        self.row(0) = x;
        e.prediction = model(self)[0];
        if (renormalize) {
            double sum_abs = 0, sum = 0;
            for (double phi : e.phi) {
                sum_abs += std::abs(phi);
                sum += phi;
            }
            const double residual = e.prediction - e.base_value - sum;
            if (sum_abs > 1e-12) {
                for (double& phi : e.phi) phi += residual * std::abs(phi) / sum_abs;
            } else if (d > 0) {
                for (double& phi : e.phi) phi += residual / d;
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

ShapExplanation hybrid_shap(const ShapExplanation& dnn_expl, const ShapExplanation& gbt_expl,
                            double weight_dnn) {
    if (dnn_expl.phi.size() != gbt_expl.phi.size())
        throw ModelError("explanations cover different feature sets");
    ShapExplanation out;
    const double w = weight_dnn;
    out.base_value = w * dnn_expl.base_value + (1.0 - w) * gbt_expl.base_value;
    out.prediction = w * dnn_expl.prediction + (1.0 - w) * gbt_expl.prediction;
    out.phi.resize(dnn_expl.phi.size());
    for (std::size_t j = 0; j < out.phi.size(); ++j)
        out.phi[j] = w * dnn_expl.phi[j] + (1.0 - w) * gbt_expl.phi[j];
    return out;
}

FeatureGrouping group_features(const ObservationTable& train, double threshold) {
    if (train.n_rows() < 3) throw DataError("feature grouping needs at least 3 rows");
    const int d = train.n_features();
    const auto n = static_cast<double>(train.n_rows());
    Eigen::VectorXd mean = train.rows.colwise().mean();
    Eigen::MatrixXd centered = train.rows.rowwise() - mean.transpose();
    Eigen::VectorXd sd(d);
    for (int f = 0; f < d; ++f) sd(f) = std::sqrt(centered.col(f).squaredNorm() / n);

    std::vector<int> parent(static_cast<std::size_t>(d));
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    };
    for (int a = 0; a < d; ++a) {
        for (int b = a + 1; b < d; ++b) {
            if (sd(a) < 1e-12 || sd(b) < 1e-12) continue;
            const double rho = centered.col(a).dot(centered.col(b)) / (n * sd(a) * sd(b));
            if (std::abs(rho) > threshold) parent[static_cast<std::size_t>(find(a))] = find(b);
        }
    }
    std::vector<std::vector<int>> members(static_cast<std::size_t>(d));
    for (int f = 0; f < d; ++f) members[static_cast<std::size_t>(find(f))].push_back(f);
    FeatureGrouping grouping;
    for (const auto& m : members) {
        if (m.size() < 2) continue;
        FeatureGroup g;
        g.features = m;
        g.label = train.schema.names[static_cast<std::size_t>(m.front())] + "*";
        grouping.groups.push_back(g);
    }
    return grouping;
}

std::vector<AggregatedShapRow> aggregate_shap(const std::vector<ShapExplanation>& explanations,
                                              const FeatureSchema& schema,
                                              const FeatureGrouping& grouping,
                                              ShapAggregation mode, bool normalize) {
    if (explanations.empty()) throw DataError("no explanations to aggregate");
    const int d = static_cast<int>(explanations.front().phi.size());
    for (const auto& e : explanations)
        if (static_cast<int>(e.phi.size()) != d)
            throw DataError("explanations cover different feature sets");

    std::vector<bool> covered(static_cast<std::size_t>(d), false);
    std::vector<AggregatedShapRow> rows;
    for (const auto& g : grouping.groups) {
        AggregatedShapRow row;
        row.label = g.label;
        row.features = g.features;
        for (int f : g.features) {
            if (f < 0 || f >= d) throw DataError("unknown group member index " + std::to_string(f));
            covered[static_cast<std::size_t>(f)] = true;
        }
        rows.push_back(row);
    }
    for (int f = 0; f < d; ++f) {
        if (covered[static_cast<std::size_t>(f)]) continue;
        AggregatedShapRow row;
        row.label = f < schema.size() ? schema.names[static_cast<std::size_t>(f)] : "f" + std::to_string(f);
        row.features = {f};
        rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end(), [](const AggregatedShapRow& a, const AggregatedShapRow& b) {
        return a.features.front() < b.features.front();
    });

    const auto n = static_cast<double>(explanations.size());
    for (auto& row : rows) {
        double acc = 0;
        for (const auto& e : explanations) {
            double group_value = 0;
            if (mode == ShapAggregation::SumAbs) {
                for (int f : row.features) group_value += std::abs(e.phi[static_cast<std::size_t>(f)]);
                acc += group_value;
            } else {
                // Signed sum within the group per instance.
                for (int f : row.features) group_value += e.phi[static_cast<std::size_t>(f)];
                acc += mode == ShapAggregation::MeanAbs ? std::abs(group_value) : group_value;
            }
        }
        row.value = mode == ShapAggregation::SumAbs ? acc : acc / n;
    }
    if (normalize) {
        double total = 0;
        for (const auto& row : rows) total += std::abs(row.value);
        if (total > 0)
            for (auto& row : rows) row.share = std::abs(row.value) / total;
    }
    std::vector<int> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return std::abs(rows[static_cast<std::size_t>(a)].value) > std::abs(rows[static_cast<std::size_t>(b)].value);
    });
    for (std::size_t r = 0; r < order.size(); ++r)
        rows[static_cast<std::size_t>(order[r])].rank = static_cast<int>(r) + 1;
    return rows;
}

}  // namespace credlab
