#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace credlab {

enum class FeatureKind { Continuous, Count, Indicator };

std::string to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& s);

struct FeatureSchema {
    std::vector<std::string> names;
    std::vector<FeatureKind> kinds;
    // Optional group label per feature ("" = ungrouped). Used for the
    // score-factor categories and correlated-feature grouping.
    std::vector<std::string> groups;

    int size() const { return static_cast<int>(names.size()); }
    int index_of(const std::string& name) const;
    void validate() const;
};

// Rectangular feature panel with labels, quarter stamps and borrower ids;
// the universal currency between modules. Quarter is an integer index
// (2004Q1 = 0). current_flag = 1 means no delinquency at the observation
// quarter. credit_score / balance are optional side columns used by the
// score-comparison and savings analyses.
struct ObservationTable {
    FeatureSchema schema;
    Eigen::MatrixXd rows;  // N x d
    std::vector<int> labels;
    std::vector<int> quarter;
    std::vector<std::int64_t> borrower_id;
    std::vector<int> current_flag;
    std::vector<double> credit_score;  // optional, empty if absent
    std::vector<double> balance;       // optional, empty if absent

    int n_rows() const { return static_cast<int>(rows.rows()); }
    int n_features() const { return static_cast<int>(rows.cols()); }
    void validate() const;
    ObservationTable select(const std::vector<int>& idx) const;
};

struct ScalingParams {
    Eigen::VectorXd means;
    Eigen::VectorXd std_devs;
};

enum class SplitMode { Temporal, Pooled };

struct SplitSpec {
    SplitMode mode = SplitMode::Temporal;
    std::set<int> train_quarters;
    std::set<int> test_quarters;
    int gap_quarters = 8;
    // Pooled mode: (train, validation, test) fractions.
    double fractions[3] = {0.6, 0.2, 0.2};
    // Temporal mode: validation share carved out of the training quarters.
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct SplitResult {
    ObservationTable train;
    ObservationTable validation;
    ObservationTable test;
};

// 2x2, rows = state at the observation quarter (0 = current, 1 = delinquent),
// columns = outcome within 8Q (0 = no default, 1 = default). Rows sum to 1.
struct TransitionMatrix {
    double p[2][2];
};

struct SyntheticPanelConfig {
    int n_borrowers = 1000;
    int n_quarters = 8;
    double base_default_rate = 0.34;
    double p_stay_current = 0.776;  // P(no default in 8Q | current)
    double p_stay_default = 0.927;  // P(default in 8Q | delinquent)
    double nonlinearity_strength = 1.0;
    // Linear drift of the distressed-state share across quarters
    // (total change first->last quarter). 0 = stationary panel.
    double rate_ramp = 0.0;
    std::uint64_t seed = 1;

    void validate() const;
};

// Panel plus generator ground truth, used by calibration oracles.
struct SyntheticPanel {
    ObservationTable table;
    std::vector<double> true_prob;  // P(label=1 | row) used to draw the labels
};

// The fixed schema emitted by the synthetic generator.
FeatureSchema synthetic_schema();

ObservationTable ingest_csv(const std::string& path, const FeatureSchema& schema);
void emit_csv(const ObservationTable& table, const std::string& path);

ScalingParams compute_scaling(const ObservationTable& table);
ObservationTable apply_scaling(const ObservationTable& table, const ScalingParams& params);
ObservationTable invert_scaling(const ObservationTable& table, const ScalingParams& params);

SplitResult make_split(const ObservationTable& table, const SplitSpec& spec);

TransitionMatrix compute_transition_matrix(const ObservationTable& panel);

ObservationTable synthesize_panel(const SyntheticPanelConfig& config);
SyntheticPanel synthesize_panel_detailed(const SyntheticPanelConfig& config);

}  // namespace credlab
