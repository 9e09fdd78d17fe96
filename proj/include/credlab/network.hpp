#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "credlab/data.hpp"
#include "credlab/metrics.hpp"

namespace credlab {

enum class Activation { Relu, Sigmoid, Tanh, Selu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Hidden widths may be empty: a network without hidden layers is a logistic
// regression.
struct NetworkArchitecture {
    std::vector<int> hidden_sizes;
    Activation activation = Activation::Relu;
    double dropout_rate = 0.0;
    bool use_batchnorm = false;

    void validate() const;
};

struct DenseLayer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;
};

struct BatchNormLayer {
    Eigen::VectorXd gamma;
    Eigen::VectorXd beta;
    Eigen::VectorXd running_mean;
    Eigen::VectorXd running_var;
    double momentum = 0.99;
    double eps = 1e-5;
};

struct NetworkModel {
    NetworkArchitecture arch;
    int input_dim = 0;
    std::vector<DenseLayer> layers;   // hidden layers then the output unit
    std::vector<BatchNormLayer> bn;   // one per hidden layer when enabled

    // Trainable parameters: sum of N(l)*(1+N(l-1)) over layers, plus
    // 2*width per batch-norm layer.
    std::size_t parameter_count() const;
};

enum class ForwardMode { Train, Inference };

struct ForwardCache {
    struct Layer {
        Eigen::MatrixXd input;     // what the affine map consumed
        Eigen::MatrixXd affine;    // input*W^T + b
        Eigen::MatrixXd xhat;      // batch-norm normalized affine
        Eigen::VectorXd mean;      // batch statistics used
        Eigen::VectorXd var;
        bool bn_batch_stats = false;
        Eigen::MatrixXd pre_activation;
        Eigen::MatrixXd activated;
        Eigen::MatrixXd dropout_mask;  // already scaled by 1/(1-p); empty if unused
    };
    std::vector<Layer> hidden;
    Eigen::MatrixXd output_input;
    Eigen::VectorXd logits;
    Eigen::VectorXd probabilities;
    bool train_mode = false;
};

struct Gradients {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;
    std::vector<Eigen::VectorXd> dgamma;
    std::vector<Eigen::VectorXd> dbeta;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long t = 0;
    double alpha = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-7;
};

struct TrainConfig {
    int batch_size = 512;
    int max_epochs = 200;
    int patience = 50;
    double learning_rate = 0.001;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0;
    double validation_loss = 0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
};

NetworkModel init_network(const NetworkArchitecture& arch, int input_dim, std::uint64_t seed);

// Train mode applies inverted dropout and normalizes with batch statistics
// (batches of at least 2 rows); inference mode is deterministic and uses
// running statistics. Pure: running statistics are folded in by the training
// loop via update_batchnorm_stats, so trained models are immutable and safe
// for concurrent prediction.
ForwardCache forward(const NetworkModel& model, const Eigen::MatrixXd& batch, ForwardMode mode,
                     std::uint64_t seed = 0);

// Momentum update of the running statistics from a train-mode cache.
void update_batchnorm_stats(NetworkModel& model, const ForwardCache& cache);

double network_loss(const Eigen::VectorXd& probabilities, const std::vector<int>& labels);

Gradients backward(const NetworkModel& model, const ForwardCache& cache,
                   const std::vector<int>& labels);

// Flat parameter views; order is layer-major (W row-major, then b), then
// gamma/beta per batch-norm layer. Used by Adam, the gradient-check oracle
// and serialization.
Eigen::VectorXd flatten_parameters(const NetworkModel& model);
void set_parameters(NetworkModel& model, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten_gradients(const NetworkModel& model, const Gradients& grads);

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state);
void adam_step(NetworkModel& model, const Gradients& grads, AdamState& state);

// Mini-batch Adam with per-epoch reshuffling and patience-based early
// stopping; the parameters from the best-validation-loss epoch are restored.
TrainHistory train(NetworkModel& model, const ObservationTable& train_table,
                   const ObservationTable& validation_table, const TrainConfig& config);

PredictionSet predict_proba(const NetworkModel& model, const ObservationTable& table);
std::vector<double> predict_probabilities(const NetworkModel& model, const Eigen::MatrixXd& rows);

struct DnnPreset {
    NetworkArchitecture arch;
    TrainConfig train;
};

// Published reference configurations: "ofs-dnn" (out-of-sample exercise),
// "pooled-dnn" (pooled sample), "depth-sweep-<k>" (512 units per layer).
DnnPreset dnn_preset(const std::string& name);

}  // namespace credlab
