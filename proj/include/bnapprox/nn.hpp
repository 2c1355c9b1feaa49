#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bnapprox/dataset.hpp"
#include "bnapprox/network.hpp"
#include "bnapprox/rng.hpp"

namespace bnapprox {

struct ModelConfig {
    /// Input, hidden..., output. Input and output equal the layout's total_dim.
    std::vector<std::size_t> layer_sizes;
    double l2_lambda = 0.005;
    double learning_rate = 1e-4;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 2000;
    std::size_t early_stop_patience = 50;
    bool use_bias = true;

    /// [dim, hidden..., dim] for a layout of width `dim`.
    static std::vector<std::size_t> layers_for(std::size_t dim, std::span<const std::size_t> hidden) {
        std::vector<std::size_t> sizes{dim};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(dim);
        return sizes;
    }

    void validate(const EncodingLayout& layout) const {
        if (layer_sizes.size() < 2) throw std::invalid_argument("ModelConfig: need at least input and output layers");
        if (layer_sizes.front() != layout.total_dim || layer_sizes.back() != layout.total_dim)
            throw std::invalid_argument("ModelConfig: input and output sizes must equal the encoding width " +
                                        std::to_string(layout.total_dim));
        for (std::size_t s : layer_sizes)
            if (s == 0) throw std::invalid_argument("ModelConfig: empty layer");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("ModelConfig: learning rate must be positive");
        if (!(momentum >= 0.0 && momentum <= 1.0)) throw std::invalid_argument("ModelConfig: momentum must lie in [0, 1]");
        if (!(l2_lambda >= 0.0)) throw std::invalid_argument("ModelConfig: l2 coefficient must be non-negative");
        if (batch_size == 0) throw std::invalid_argument("ModelConfig: batch size must be positive");
    }

    /// Number of weight-matrix entries (biases excluded).
    std::size_t weight_count() const {
        std::size_t n = 0;
        for (std::size_t l = 1; l < layer_sizes.size(); ++l) n += layer_sizes[l - 1] * layer_sizes[l];
        return n;
    }
};

/// Weights (out x in) and biases per layer. Also used for gradients and
/// velocities. Bias vectors are empty when the model has no biases.
struct Parameters {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static Parameters zeros(const ModelConfig& config) {
        Parameters p;
        for (std::size_t l = 1; l < config.layer_sizes.size(); ++l) {
            const auto out = static_cast<Eigen::Index>(config.layer_sizes[l]);
            const auto in = static_cast<Eigen::Index>(config.layer_sizes[l - 1]);
            p.weights.push_back(Eigen::MatrixXd::Zero(out, in));
            p.biases.push_back(Eigen::VectorXd::Zero(config.use_bias ? out : 0));
        }
        return p;
    }

    static Parameters zeros_like(const Parameters& other) {
        Parameters p;
        for (const auto& w : other.weights) p.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        for (const auto& b : other.biases) p.biases.push_back(Eigen::VectorXd::Zero(b.size()));
        return p;
    }

    std::size_t layers() const noexcept { return weights.size(); }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
        for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
        return n;
    }

    /// Visit every scalar parameter in a fixed order (weights, then biases).
    template <class Fn>
    void for_each(Fn&& fn) {
        for (auto& w : weights)
            for (Eigen::Index k = 0; k < w.size(); ++k) fn(w.data()[k]);
        for (auto& b : biases)
            for (Eigen::Index k = 0; k < b.size(); ++k) fn(b.data()[k]);
    }

    bool all_finite() const {
        for (const auto& w : weights)
            if (!w.allFinite()) return false;
        for (const auto& b : biases)
            if (!b.allFinite()) return false;
        return true;
    }

    bool same_shape(const Parameters& o) const {
        if (weights.size() != o.weights.size() || biases.size() != o.biases.size()) return false;
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols() ||
                biases[l].size() != o.biases[l].size())
                return false;
        return true;
    }
};

struct TrainingInfo {
    std::uint64_t seed = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_validation_loss = std::numeric_limits<double>::infinity();
};

struct Model {
    ModelConfig config;
    EncodingLayout layout;
    Parameters params;
    TrainingInfo info;
};

/// Velocity of the momentum optimizer, zero at the start of training.
struct OptimizerState {
    Parameters velocity;

    static OptimizerState for_params(const Parameters& p) { return OptimizerState{Parameters::zeros_like(p)}; }
};

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model with all parameters zero (predicts uniform distributions).
inline Model make_model(const EncodingLayout& layout, const ModelConfig& config) {
    config.validate(layout);
    return Model{config, layout, Parameters::zeros(config), {}};
}

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
inline Model init_model(const EncodingLayout& layout, const ModelConfig& config, Rng& rng) {
    Model m = make_model(layout, config);
    for (auto& w : m.params.weights) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        // Column-major fill order, fixed for determinism.
        for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = (2.0 * rng.uniform() - 1.0) * limit;
    }
    return m;
}

namespace detail {

inline void add_bias(Eigen::MatrixXd& z, const Eigen::VectorXd& b) {
    if (b.size() != 0) z.colwise() += b;
}

/// Per-block log-softmax of each column of `logits`.
inline Eigen::MatrixXd block_log_softmax(const EncodingLayout& layout, const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        for (std::size_t i = 0; i < layout.variables(); ++i) {
            const auto off = static_cast<Eigen::Index>(layout.offsets[i]);
            const auto len = static_cast<Eigen::Index>(layout.cards[i]);
            auto z = logits.col(c).segment(off, len);
            const double m = z.maxCoeff();
            const double lse = m + std::log((z.array() - m).exp().sum());
            out.col(c).segment(off, len) = z.array() - lse;
        }
    }
    return out;
}

inline Eigen::MatrixXd to_matrix(std::span<const std::vector<double>* const> columns, std::size_t rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c]->size() != rows) throw std::invalid_argument("vector length does not match model width");
        m.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(columns[c]->data(), static_cast<Eigen::Index>(rows));
    }
    return m;
}

struct BatchLoss {
    double data_loss = 0.0;  // mean over the batch
    double l2 = 0.0;
};

/// Mean cross-entropy of the batch (columns of x/y) plus lambda * sum of
/// squared weights; fills `grad` with the exact gradient when non-null.
inline BatchLoss batch_loss(const Model& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Parameters* grad) {
    const auto& P = model.params;
    const std::size_t L = P.layers();
    const double batch = static_cast<double>(x.cols());
    std::vector<Eigen::MatrixXd> act;  // act[l] = input to layer l
    act.reserve(L + 1);
    act.push_back(x);
    Eigen::MatrixXd z;
    for (std::size_t l = 0; l < L; ++l) {
        z.noalias() = P.weights[l] * act.back();
        add_bias(z, P.biases[l]);
        if (l + 1 < L) act.push_back(z.cwiseMax(0.0));
    }
    const Eigen::MatrixXd log_p = block_log_softmax(model.layout, z);
    BatchLoss out;
    out.data_loss = -(y.array() * log_p.array()).sum() / batch;
    for (const auto& w : P.weights) out.l2 += w.squaredNorm();
    out.l2 *= model.config.l2_lambda;
    if (!grad) return out;

    // d(-sum_j y_j log p_j)/dz_j = p_j * sum_k y_k - y_j within each block.
    Eigen::MatrixXd p = log_p.array().exp();
    Eigen::MatrixXd delta(z.rows(), z.cols());
    for (std::size_t i = 0; i < model.layout.variables(); ++i) {
        const auto off = static_cast<Eigen::Index>(model.layout.offsets[i]);
        const auto len = static_cast<Eigen::Index>(model.layout.cards[i]);
        const Eigen::RowVectorXd ysum = y.middleRows(off, len).colwise().sum();
        delta.middleRows(off, len) = (p.middleRows(off, len).array().rowwise() * ysum.array()).matrix() - y.middleRows(off, len);
    }
    delta /= batch;

    *grad = Parameters::zeros_like(P);
    for (std::size_t l = L; l-- > 0;) {
        grad->weights[l].noalias() = delta * act[l].transpose();
        grad->weights[l] += 2.0 * model.config.l2_lambda * P.weights[l];
        if (grad->biases[l].size() != 0) grad->biases[l] = delta.rowwise().sum();
        if (l == 0) break;
        Eigen::MatrixXd back = P.weights[l].transpose() * delta;
        delta = (act[l].array() > 0.0).select(back, 0.0);
    }
    return out;
}

}  // namespace detail

/// Logits for one input: relu on hidden layers, affine output layer.
inline std::vector<double> forward(const Model& model, std::span<const double> input) {
    if (input.size() != model.layout.total_dim) throw std::invalid_argument("forward: input dimension mismatch");
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
    const std::size_t L = model.params.layers();
    for (std::size_t l = 0; l < L; ++l) {
        Eigen::VectorXd z = model.params.weights[l] * a;
        if (model.params.biases[l].size() != 0) z += model.params.biases[l];
        a = (l + 1 < L) ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
    }
    return std::vector<double>(a.data(), a.data() + a.size());
}

/// Softmax within each variable's block, with per-block max subtraction.
inline std::vector<double> multi_softmax(const EncodingLayout& layout, std::span<const double> logits) {
    if (logits.size() != layout.total_dim) throw std::invalid_argument("multi_softmax: logits length mismatch");
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < layout.variables(); ++i) {
        const std::size_t off = layout.offsets[i], len = layout.cards[i];
        double m = logits[off];
        for (std::size_t k = 1; k < len; ++k) m = std::max(m, logits[off + k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < len; ++k) sum += (out[off + k] = std::exp(logits[off + k] - m));
        for (std::size_t k = 0; k < len; ++k) out[off + k] /= sum;
    }
    return out;
}

struct LossResult {
    double loss = 0.0;       // data term + L2 term
    double data_loss = 0.0;  // mean cross-entropy
    Parameters gradient;
};

/// Mean soft-label cross-entropy over the batch plus lambda * sum of squared
/// weights (biases are not regularized), with its exact gradient.
inline LossResult loss(const Model& model, std::span<const Example> batch) {
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    std::vector<const std::vector<double>*> xs, ys;
    for (const auto& ex : batch) {
        xs.push_back(&ex.input);
        ys.push_back(&ex.target);
    }
    const auto x = detail::to_matrix(xs, model.layout.total_dim);
    const auto y = detail::to_matrix(ys, model.layout.total_dim);
    LossResult r;
    const auto bl = detail::batch_loss(model, x, y, &r.gradient);
    r.data_loss = bl.data_loss;
    r.loss = bl.data_loss + bl.l2;
    return r;
}

/// v <- mu * v - lr * grad; theta <- theta + v.
inline void momentum_step(Parameters& theta, Parameters& velocity, const Parameters& grad, double learning_rate,
                          double momentum) {
    if (!theta.same_shape(velocity) || !theta.same_shape(grad))
        throw std::invalid_argument("momentum_step: parameter shapes disagree");
    for (std::size_t l = 0; l < theta.layers(); ++l) {
        velocity.weights[l] = momentum * velocity.weights[l] - learning_rate * grad.weights[l];
        theta.weights[l] += velocity.weights[l];
        if (theta.biases[l].size() != 0) {
            velocity.biases[l] = momentum * velocity.biases[l] - learning_rate * grad.biases[l];
            theta.biases[l] += velocity.biases[l];
        }
    }
}

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;       // mean of batch losses (data + L2)
    double validation_loss = 0.0;  // mean cross-entropy on the validation set
    bool improved = false;
};

/// Mean cross-entropy of `model` over `examples`.
inline double data_loss(const Model& model, std::span<const Example> examples) {
    if (examples.empty()) throw std::invalid_argument("data_loss: no examples");
    std::vector<const std::vector<double>*> xs, ys;
    for (const auto& ex : examples) {
        xs.push_back(&ex.input);
        ys.push_back(&ex.target);
    }
    return detail::batch_loss(model, detail::to_matrix(xs, model.layout.total_dim), detail::to_matrix(ys, model.layout.total_dim),
                              nullptr)
        .data_loss;
}

/// Mini-batch momentum training. The training set is reshuffled every epoch;
/// after each epoch the validation cross-entropy is measured and the best
/// snapshot kept. Stops after `early_stop_patience` epochs without
/// improvement or at `max_epochs`; returns the best snapshot.
inline Model train(const EncodingLayout& layout, const ModelConfig& config, std::span<const Example> train_set,
                   std::span<const Example> validation_set, Rng& rng,
                   const std::function<void(const EpochStats&)>& on_epoch = {}) {
    if (train_set.empty() || validation_set.empty()) throw std::invalid_argument("train: empty training or validation set");
    Model model = init_model(layout, config, rng);
    OptimizerState opt = OptimizerState::for_params(model.params);

    std::vector<const std::vector<double>*> xs, ys;
    for (const auto& ex : train_set) {
        xs.push_back(&ex.input);
        ys.push_back(&ex.target);
    }
    const Eigen::MatrixXd x_all = detail::to_matrix(xs, layout.total_dim);
    const Eigen::MatrixXd y_all = detail::to_matrix(ys, layout.total_dim);
    xs.clear();
    ys.clear();
    for (const auto& ex : validation_set) {
        xs.push_back(&ex.input);
        ys.push_back(&ex.target);
    }
    const Eigen::MatrixXd x_val = detail::to_matrix(xs, layout.total_dim);
    const Eigen::MatrixXd y_val = detail::to_matrix(ys, layout.total_dim);

    Model best = model;
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    const auto dim = static_cast<Eigen::Index>(layout.total_dim);
    Eigen::MatrixXd xb, yb;
    Parameters grad;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const auto cols = static_cast<Eigen::Index>(end - start);
            xb.resize(dim, cols);
            yb.resize(dim, cols);
            for (std::size_t k = start; k < end; ++k) {
                xb.col(static_cast<Eigen::Index>(k - start)) = x_all.col(static_cast<Eigen::Index>(order[k]));
                yb.col(static_cast<Eigen::Index>(k - start)) = y_all.col(static_cast<Eigen::Index>(order[k]));
            }
            const auto bl = detail::batch_loss(model, xb, yb, &grad);
            const double total = bl.data_loss + bl.l2;
            if (!std::isfinite(total) || !grad.all_finite()) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << batches << " (data " << bl.data_loss << ", l2 "
                    << bl.l2 << "); learning rate " << config.learning_rate << " may be too large";
                throw NonFiniteLoss(msg.str());
            }
            loss_sum += total;
            ++batches;
            momentum_step(model.params, opt.velocity, grad, config.learning_rate, config.momentum);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(batches);
        stats.validation_loss = detail::batch_loss(model, x_val, y_val, nullptr).data_loss;
        if (!std::isfinite(stats.validation_loss))
            throw NonFiniteLoss("non-finite validation loss at epoch " + std::to_string(epoch));
        model.info.epochs_run = epoch;
        if (stats.validation_loss < best.info.best_validation_loss) {
            stats.improved = true;
            since_best = 0;
            best.params = model.params;
            best.info.best_validation_loss = stats.validation_loss;
            best.info.best_epoch = epoch;
        } else {
            ++since_best;
        }
        if (on_epoch) on_epoch(stats);
        if (since_best >= config.early_stop_patience) break;
    }
    best.info.epochs_run = model.info.epochs_run;
    return best;
}

/// Splits off the last ceil(fraction * n) examples for validation. A
/// single-example set validates on itself.
inline std::pair<std::vector<Example>, std::vector<Example>> holdout_validation(std::span<const Example> examples,
                                                                                double fraction = 0.1) {
    if (examples.empty()) throw std::invalid_argument("holdout_validation: no examples");
    if (examples.size() == 1) return {{examples[0]}, {examples[0]}};
    auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(examples.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, examples.size() - 1);
    const std::size_t n_fit = examples.size() - n_val;
    return {std::vector<Example>(examples.begin(), examples.begin() + static_cast<std::ptrdiff_t>(n_fit)),
            std::vector<Example>(examples.begin() + static_cast<std::ptrdiff_t>(n_fit), examples.end())};
}

/// Reusable inference state for one model. The one-hot input makes the first
/// layer a sum of weight columns; every other buffer is allocated once.
class Predictor {
public:
    explicit Predictor(const Model& model) : model_(&model) {
        const auto& P = model.params;
        for (std::size_t l = 0; l < P.layers(); ++l) act_.emplace_back(P.weights[l].rows());
        for (std::size_t l = 1; l < P.layers(); ++l) dense_.emplace_back(P.weights[l]);
        out_.marginals.resize(model.layout.variables());
        for (std::size_t i = 0; i < model.layout.variables(); ++i) out_[i].resize(model.layout.cards[i]);
    }

    /// Posterior estimate for `ev`; the reference stays valid until the next call.
    const PosteriorSet& operator()(const Evidence& ev) {
        const Model& m = *model_;
        const auto& P = m.params;
        const std::size_t L = P.layers();
        for (const auto& [var, val] : ev)
            if (var >= m.layout.variables() || val >= m.layout.cards[var])
                throw std::invalid_argument("predict: evidence does not match the model's layout");

        Eigen::VectorXd& z0 = act_[0];
        if (P.biases[0].size() != 0) z0 = P.biases[0];
        else z0.setZero();
        for (const auto& [var, val] : ev) z0 += P.weights[0].col(static_cast<Eigen::Index>(m.layout.offsets[var] + val));
        for (std::size_t l = 1; l < L; ++l) {
            act_[l - 1] = act_[l - 1].cwiseMax(0.0);
            act_[l].noalias() = dense_[l - 1] * act_[l - 1];
            if (P.biases[l].size() != 0) act_[l] += P.biases[l];
        }
        const Eigen::VectorXd& z = act_[L - 1];
        for (std::size_t i = 0; i < m.layout.variables(); ++i) {
            const auto off = static_cast<Eigen::Index>(m.layout.offsets[i]);
            auto& block = out_[i];
            double mx = z[off];
            for (std::size_t k = 1; k < block.size(); ++k) mx = std::max(mx, z[off + static_cast<Eigen::Index>(k)]);
            double sum = 0.0;
            for (std::size_t k = 0; k < block.size(); ++k)
                sum += (block[k] = std::exp(z[off + static_cast<Eigen::Index>(k)] - mx));
            for (double& v : block) v /= sum;
        }
        return out_;
    }

private:
    using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    const Model* model_;
    std::vector<RowMajorMatrix> dense_;  // layers 1.., row-major for contiguous dot products
    std::vector<Eigen::VectorXd> act_;
    PosteriorSet out_;
};

/// Posterior estimate for `ev`: multi-softmax of the logits of its encoding.
inline PosteriorSet predict(const Model& model, const Evidence& ev) {
    Predictor p(model);
    return p(ev);
}

}  // namespace bnapprox
