#include "credlab/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "credlab/errors.hpp"
#include "credlab/rng.hpp"

namespace credlab {

namespace {
constexpr double kProbClip = 1e-7;
constexpr double kSeluLambda = 1.0507009873554805;
constexpr double kSeluAlpha = 1.6732632423543772;

double activate(Activation a, double x) {
    switch (a) {
        case Activation::Relu: return x >= 0.0 ? x : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Tanh: return std::tanh(x);
        case Activation::Selu:
            return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0);
    }
    return x;
}

double activate_grad(Activation a, double pre, double post) {
    switch (a) {
        case Activation::Relu: return pre >= 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: return post * (1.0 - post);
        case Activation::Tanh: return 1.0 - post * post;
        case Activation::Selu:
            return pre > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(pre);
    }
    return 1.0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::Selu: return "selu";
    }
    return "relu";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "tanh") return Activation::Tanh;
    if (s == "selu") return Activation::Selu;
    throw ConfigError("unknown activation: " + s);
}

void NetworkArchitecture::validate() const {
    for (int w : hidden_sizes)
        if (w < 1) throw ConfigError("hidden widths must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("dropout_rate must be in [0,1)");
}

std::size_t NetworkModel::parameter_count() const {
    std::size_t count = 0;
    for (const auto& l : layers)
        count += static_cast<std::size_t>(l.W.size()) + static_cast<std::size_t>(l.b.size());
    for (const auto& l : bn)
        count += static_cast<std::size_t>(l.gamma.size()) + static_cast<std::size_t>(l.beta.size());
    return count;
}

NetworkModel init_network(const NetworkArchitecture& arch, int input_dim, std::uint64_t seed) {
    arch.validate();
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
    NetworkModel model;
    model.arch = arch;
    model.input_dim = input_dim;
    Rng rng(derive_seed(seed, "net-init"));
    int fan_in = input_dim;
    auto make_layer = [&](int out) {
        DenseLayer l;
        // Fan-in-scaled zero-mean normal: variance 2/fan_in for RELU stacks,
        // 1/fan_in otherwise.
        const double scale = arch.activation == Activation::Relu
                                 ? std::sqrt(2.0 / fan_in)
                                 : std::sqrt(1.0 / fan_in);
        l.W.resize(out, fan_in);
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = scale * rng.normal();
        l.b = Eigen::VectorXd::Zero(out);
        fan_in = out;
        return l;
    };
    for (int width : arch.hidden_sizes) {
        model.layers.push_back(make_layer(width));
        if (arch.use_batchnorm) {
            BatchNormLayer bnl;
            bnl.gamma = Eigen::VectorXd::Ones(width);
            bnl.beta = Eigen::VectorXd::Zero(width);
            bnl.running_mean = Eigen::VectorXd::Zero(width);
            bnl.running_var = Eigen::VectorXd::Ones(width);
            model.bn.push_back(bnl);
        }
    }
    model.layers.push_back(make_layer(1));
    return model;
}

ForwardCache forward(const NetworkModel& model, const Eigen::MatrixXd& batch, ForwardMode mode,
                     std::uint64_t seed) {
    if (batch.cols() != model.input_dim)
        throw ModelError("forward: batch has " + std::to_string(batch.cols()) +
                         " features, model expects " + std::to_string(model.input_dim));
    const bool train_mode = mode == ForwardMode::Train;
    Rng rng(derive_seed(seed, "dropout"));
    ForwardCache cache;
    cache.train_mode = train_mode;
    Eigen::MatrixXd x = batch;
    const std::size_t n_hidden = model.arch.hidden_sizes.size();
    cache.hidden.resize(n_hidden);
    for (std::size_t l = 0; l < n_hidden; ++l) {
        auto& c = cache.hidden[l];
        const DenseLayer& dense = model.layers[l];
        c.input = x;
        c.affine = (x * dense.W.transpose()).rowwise() + dense.b.transpose();
        Eigen::MatrixXd pre = c.affine;
        if (model.arch.use_batchnorm) {
            const BatchNormLayer& bnl = model.bn[l];
            const auto m = static_cast<double>(pre.rows());
            if (train_mode && pre.rows() >= 2) {
                c.bn_batch_stats = true;
                c.mean = pre.colwise().mean();
                c.var = (pre.rowwise() - c.mean.transpose()).array().square().colwise().sum() / m;
            } else {
                c.bn_batch_stats = false;
                c.mean = bnl.running_mean;
                c.var = bnl.running_var;
            }
            c.xhat = (pre.rowwise() - c.mean.transpose()).array().rowwise() /
                     (c.var.array() + bnl.eps).sqrt().transpose();
            pre = (c.xhat.array().rowwise() * bnl.gamma.transpose().array()).rowwise() +
                  bnl.beta.transpose().array();
        }
        c.pre_activation = pre;
        c.activated = pre.unaryExpr(
            [&](double v) { return activate(model.arch.activation, v); });
        x = c.activated;
        if (train_mode && model.arch.dropout_rate > 0.0) {
            const double keep = 1.0 - model.arch.dropout_rate;
            c.dropout_mask.resize(x.rows(), x.cols());
            for (Eigen::Index r = 0; r < x.rows(); ++r)
                for (Eigen::Index cc = 0; cc < x.cols(); ++cc)
                    c.dropout_mask(r, cc) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
            x = x.cwiseProduct(c.dropout_mask);
        }
    }
    cache.output_input = x;
    const DenseLayer& out = model.layers.back();
    cache.logits = (x * out.W.transpose()).col(0).array() + out.b(0);
    cache.probabilities = cache.logits.unaryExpr([](double z) {
        return std::min(std::max(sigmoid(z), kProbClip), 1.0 - kProbClip);
    });
    return cache;
}

void update_batchnorm_stats(NetworkModel& model, const ForwardCache& cache) {
    if (!model.arch.use_batchnorm) return;
    for (std::size_t l = 0; l < model.bn.size(); ++l) {
        const auto& c = cache.hidden[l];
        if (!c.bn_batch_stats) continue;
        BatchNormLayer& bnl = model.bn[l];
        bnl.running_mean = bnl.momentum * bnl.running_mean + (1.0 - bnl.momentum) * c.mean;
        bnl.running_var = bnl.momentum * bnl.running_var + (1.0 - bnl.momentum) * c.var;
    }
}

double network_loss(const Eigen::VectorXd& probabilities, const std::vector<int>& labels) {
    std::vector<double> p(probabilities.data(), probabilities.data() + probabilities.size());
    return cross_entropy(p, labels);
}

Gradients backward(const NetworkModel& model, const ForwardCache& cache,
                   const std::vector<int>& labels) {
    const auto n = cache.probabilities.size();
    if (static_cast<std::size_t>(n) != labels.size())
        throw ModelError("backward: cache batch size does not match labels");
    if (!cache.train_mode) throw ModelError("backward requires a train-mode cache");
    if (cache.hidden.size() != model.arch.hidden_sizes.size())
        throw ModelError("backward: stale cache for a different architecture");

    Gradients g;
    g.dW.resize(model.layers.size());
    g.db.resize(model.layers.size());
    g.dgamma.resize(model.bn.size());
    g.dbeta.resize(model.bn.size());

    // d loss / d logit for mean cross-entropy with sigmoid output.
    Eigen::VectorXd dlogit(n);
    for (Eigen::Index i = 0; i < n; ++i)
        dlogit(i) = (cache.probabilities(i) - labels[static_cast<std::size_t>(i)]) /
                    static_cast<double>(n);

    const std::size_t last = model.layers.size() - 1;
    g.dW[last] = dlogit.transpose() * cache.output_input;
    g.db[last] = Eigen::VectorXd::Constant(1, dlogit.sum());
    Eigen::MatrixXd dx = dlogit * model.layers[last].W;  // n x width(last hidden)

    for (int l = static_cast<int>(model.arch.hidden_sizes.size()) - 1; l >= 0; --l) {
        const auto lu = static_cast<std::size_t>(l);
        const auto& c = cache.hidden[lu];
        Eigen::MatrixXd d_act = dx;
        if (c.dropout_mask.size() > 0) d_act = d_act.cwiseProduct(c.dropout_mask);
        Eigen::MatrixXd d_pre(d_act.rows(), d_act.cols());
        for (Eigen::Index r = 0; r < d_act.rows(); ++r)
            for (Eigen::Index cc = 0; cc < d_act.cols(); ++cc)
                d_pre(r, cc) = d_act(r, cc) * activate_grad(model.arch.activation,
                                                            c.pre_activation(r, cc),
                                                            c.activated(r, cc));
        Eigen::MatrixXd d_affine;
        if (model.arch.use_batchnorm) {
            const BatchNormLayer& bnl = model.bn[lu];
            g.dgamma[lu] = (d_pre.array() * c.xhat.array()).colwise().sum();
            g.dbeta[lu] = d_pre.colwise().sum();
            const Eigen::ArrayXd inv_std = (c.var.array() + bnl.eps).sqrt().inverse();
            if (c.bn_batch_stats) {
                const auto m = static_cast<double>(d_pre.rows());
                const Eigen::RowVectorXd mean_dp = d_pre.colwise().sum() / m;
                const Eigen::RowVectorXd mean_dp_xhat =
                    (d_pre.array() * c.xhat.array()).colwise().sum() / m;
                d_affine =
                    ((d_pre.rowwise() - mean_dp).array() -
                     c.xhat.array().rowwise() * mean_dp_xhat.array())
                        .rowwise() *
                    (bnl.gamma.transpose().array() * inv_std.transpose());
            } else {
                d_affine = d_pre.array().rowwise() *
                           (bnl.gamma.transpose().array() * inv_std.transpose());
            }
        } else {
            d_affine = d_pre;
        }
        g.dW[lu] = d_affine.transpose() * c.input;
        g.db[lu] = d_affine.colwise().sum();
        if (l > 0) dx = d_affine * model.layers[lu].W;
    }
    return g;
}

Eigen::VectorXd flatten_parameters(const NetworkModel& model) {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(model.parameter_count()));
    Eigen::Index pos = 0;
    for (const auto& l : model.layers) {
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) flat(pos++) = l.W(r, c);
        for (Eigen::Index i = 0; i < l.b.size(); ++i) flat(pos++) = l.b(i);
    }
    for (const auto& l : model.bn) {
        for (Eigen::Index i = 0; i < l.gamma.size(); ++i) flat(pos++) = l.gamma(i);
        for (Eigen::Index i = 0; i < l.beta.size(); ++i) flat(pos++) = l.beta(i);
    }
    return flat;
}

void set_parameters(NetworkModel& model, const Eigen::VectorXd& flat) {
    if (flat.size() != static_cast<Eigen::Index>(model.parameter_count()))
        throw ModelError("parameter vector size mismatch");
    Eigen::Index pos = 0;
    for (auto& l : model.layers) {
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = flat(pos++);
        for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b(i) = flat(pos++);
    }
    for (auto& l : model.bn) {
        for (Eigen::Index i = 0; i < l.gamma.size(); ++i) l.gamma(i) = flat(pos++);
        for (Eigen::Index i = 0; i < l.beta.size(); ++i) l.beta(i) = flat(pos++);
    }
}

Eigen::VectorXd flatten_gradients(const NetworkModel& model, const Gradients& grads) {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(model.parameter_count()));
    Eigen::Index pos = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& dW = grads.dW[l];
        for (Eigen::Index r = 0; r < dW.rows(); ++r)
            for (Eigen::Index c = 0; c < dW.cols(); ++c) flat(pos++) = dW(r, c);
        for (Eigen::Index i = 0; i < grads.db[l].size(); ++i) flat(pos++) = grads.db[l](i);
    }
    for (std::size_t l = 0; l < model.bn.size(); ++l) {
        for (Eigen::Index i = 0; i < grads.dgamma[l].size(); ++i) flat(pos++) = grads.dgamma[l](i);
        for (Eigen::Index i = 0; i < grads.dbeta[l].size(); ++i) flat(pos++) = grads.dbeta[l](i);
    }
    return flat;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state) {
    if (state.t == 0) {
        state.m = Eigen::VectorXd::Zero(params.size());
        state.v = Eigen::VectorXd::Zero(params.size());
    }
    if (grads.size() != params.size() || state.m.size() != params.size())
        throw ModelError("adam: shape mismatch");
    ++state.t;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.array().square().matrix();
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    const Eigen::ArrayXd m_hat = state.m.array() / bc1;
    const Eigen::ArrayXd v_hat = state.v.array() / bc2;
    params.array() -= state.alpha * m_hat / (v_hat.sqrt() + state.eps);
}

void adam_step(NetworkModel& model, const Gradients& grads, AdamState& state) {
    Eigen::VectorXd params = flatten_parameters(model);
    const Eigen::VectorXd g = flatten_gradients(model, grads);
    adam_step(params, g, state);
    set_parameters(model, params);
}

namespace {

Eigen::VectorXd predict_all(const NetworkModel& model, const Eigen::MatrixXd& rows) {
    return forward(model, rows, ForwardMode::Inference).probabilities;
}

}  // namespace

TrainHistory train(NetworkModel& model, const ObservationTable& train_table,
                   const ObservationTable& validation_table, const TrainConfig& config) {
    if (train_table.n_rows() == 0) throw DataError("empty training set");
    if (config.batch_size < 1 || config.patience < 1)
        throw ConfigError("batch_size and patience must be >= 1");
    const Eigen::MatrixXd& X = train_table.rows;
    const std::vector<int>& y = train_table.labels;

    AdamState adam;
    adam.alpha = config.learning_rate;

    TrainHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    // Snapshot trainable parameters AND batch-norm running statistics; both
    // must be restored together or the best-epoch weights would be paired
    // with statistics that kept drifting during the patience window.
    Eigen::VectorXd best_params = flatten_parameters(model);
    std::vector<BatchNormLayer> best_bn = model.bn;
    int epochs_since_best = 0;

    std::vector<int> idx(static_cast<std::size_t>(train_table.n_rows()));
    std::iota(idx.begin(), idx.end(), 0);

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(config.seed, "epoch-shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(idx);
        const int n = train_table.n_rows();
        for (int start = 0, batch_no = 0; start < n; start += config.batch_size, ++batch_no) {
            const int count = std::min(config.batch_size, n - start);
            Eigen::MatrixXd bx(count, X.cols());
            std::vector<int> by(static_cast<std::size_t>(count));
            for (int k = 0; k < count; ++k) {
                bx.row(k) = X.row(idx[static_cast<std::size_t>(start + k)]);
                by[static_cast<std::size_t>(k)] = y[static_cast<std::size_t>(idx[static_cast<std::size_t>(start + k)])];
            }
            const std::uint64_t batch_seed = derive_seed(
                config.seed, "batch",
                static_cast<std::uint64_t>(epoch) * 1000003ULL + static_cast<std::uint64_t>(batch_no));
            const ForwardCache cache = forward(model, bx, ForwardMode::Train, batch_seed);
            update_batchnorm_stats(model, cache);
            const Gradients grads = backward(model, cache, by);
            adam_step(model, grads, adam);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = network_loss(predict_all(model, X), y);
        stats.validation_loss =
            network_loss(predict_all(model, validation_table.rows), validation_table.labels);
        history.epochs.push_back(stats);
        if (stats.validation_loss < best_val) {
            best_val = stats.validation_loss;
            best_params = flatten_parameters(model);
            best_bn = model.bn;
            history.best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= config.patience) break;
        }
    }
    set_parameters(model, best_params);
    model.bn = best_bn;
    return history;
}

PredictionSet predict_proba(const NetworkModel& model, const ObservationTable& table) {
    PredictionSet out;
    const Eigen::VectorXd p = predict_all(model, table.rows);
    out.probabilities.assign(p.data(), p.data() + p.size());
    out.labels = table.labels;
    out.quarter = table.quarter;
    out.current_flag = table.current_flag;
    return out;
}

std::vector<double> predict_probabilities(const NetworkModel& model, const Eigen::MatrixXd& rows) {
    const Eigen::VectorXd p = predict_all(model, rows);
    return std::vector<double>(p.data(), p.data() + p.size());
}

DnnPreset dnn_preset(const std::string& name) {
    DnnPreset preset;
    preset.arch.activation = Activation::Relu;
    preset.arch.use_batchnorm = true;
    preset.train.batch_size = 4096;
    preset.train.learning_rate = 0.003;
    preset.train.patience = 50;
    preset.train.max_epochs = 500;
    if (name == "ofs-dnn") {
        preset.arch.hidden_sizes = {150, 600, 1000, 600, 400};
        preset.arch.dropout_rate = 0.5;
        return preset;
    }
    if (name == "pooled-dnn") {
        preset.arch.hidden_sizes = {512, 1024, 2048, 1024, 512};
        preset.arch.dropout_rate = 0.2;
        return preset;
    }
    if (name.rfind("depth-sweep-", 0) == 0) {
        const int depth = std::stoi(name.substr(12));
        if (depth < 0 || depth > 5) throw ConfigError("depth-sweep presets cover 0-5 layers");
        preset.arch.hidden_sizes.assign(static_cast<std::size_t>(depth), 512);
        preset.arch.dropout_rate = 0.0;
        return preset;
    }
    throw ConfigError("unknown DNN preset: " + name);
}

}  // namespace credlab
