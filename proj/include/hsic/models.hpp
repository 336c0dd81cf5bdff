#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "hsic/errors.hpp"

namespace hsic {

/// One tensor per parameter tensor of a model: weights[i] pairs with
/// biases[i] per layer. Used both for parameters and for gradients.
struct TensorSet {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static TensorSet zeros_like(const TensorSet& other) {
        TensorSet z;
        for (const auto& w : other.weights)
            z.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        for (const auto& b : other.biases)
            z.biases.push_back(Eigen::VectorXd::Zero(b.size()));
        return z;
    }

    bool same_shape(const TensorSet& other) const {
        if (weights.size() != other.weights.size() ||
            biases.size() != other.biases.size())
            return false;
        for (std::size_t i = 0; i < weights.size(); ++i)
            if (weights[i].rows() != other.weights[i].rows() ||
                weights[i].cols() != other.weights[i].cols())
                return false;
        for (std::size_t i = 0; i < biases.size(); ++i)
            if (biases[i].size() != other.biases[i].size()) return false;
        return true;
    }

    TensorSet& operator+=(const TensorSet& other) {
        if (!same_shape(other)) throw InvalidArgument("TensorSet: shape mismatch");
        for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += other.weights[i];
        for (std::size_t i = 0; i < biases.size(); ++i) biases[i] += other.biases[i];
        return *this;
    }

    TensorSet& operator*=(double s) {
        for (auto& w : weights) w *= s;
        for (auto& b : biases) b *= s;
        return *this;
    }

    Eigen::Index flat_size() const {
        Eigen::Index n = 0;
        for (const auto& w : weights) n += w.size();
        for (const auto& b : biases) n += b.size();
        return n;
    }

    Eigen::VectorXd flatten() const {
        Eigen::VectorXd out(flat_size());
        Eigen::Index pos = 0;
        for (const auto& w : weights) {
            out.segment(pos, w.size()) = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
            pos += w.size();
        }
        for (const auto& b : biases) {
            out.segment(pos, b.size()) = b;
            pos += b.size();
        }
        return out;
    }

    void assign_from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat) {
        if (flat.size() != flat_size())
            throw InvalidArgument("TensorSet: flat vector size mismatch");
        Eigen::Index pos = 0;
        for (auto& w : weights) {
            Eigen::Map<Eigen::VectorXd>(w.data(), w.size()) = flat.segment(pos, w.size());
            pos += w.size();
        }
        for (auto& b : biases) {
            b = flat.segment(pos, b.size());
            pos += b.size();
        }
    }
};

using GradientSet = TensorSet;

/// Per-layer intermediates captured by forward and consumed by backward.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> activations;      // activations[0] is the input
    std::vector<Eigen::MatrixXd> pre_activations;  // one per layer
    Eigen::MatrixXd dropout_mask;                  // empty unless training with dropout
    bool training = false;
    std::size_t layer_count = 0;
};

namespace detail {

// Glorot uniform: U(-sqrt(6/(fan_in+fan_out)), +sqrt(...)), biases zero.
inline Eigen::MatrixXd glorot(Eigen::Index fan_in, Eigen::Index fan_out,
                              std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd w(fan_in, fan_out);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    return w;
}

} // namespace detail

/// Linear predictor h(x) = w.x + b. The bias is frozen during HSIC
/// training (the loss is invariant to it); Algorithm-style bias
/// adjustment supplies the constant afterwards.
class LinearModel {
public:
    explicit LinearModel(Eigen::Index input_dim)
        : w_(Eigen::VectorXd::Zero(input_dim)), b_(0.0) {
        if (input_dim < 1) throw InvalidArgument("LinearModel: input_dim must be >= 1");
    }

    static LinearModel random_init(Eigen::Index input_dim, std::mt19937_64& rng) {
        LinearModel m(input_dim);
        m.w_ = detail::glorot(input_dim, 1, rng).col(0);
        return m;
    }

    Eigen::Index input_dim() const { return w_.size(); }
    Eigen::Index output_dim() const { return 1; }

    const Eigen::VectorXd& weights() const { return w_; }
    double bias() const { return b_; }
    void set_weights(Eigen::VectorXd w) { w_ = std::move(w); }
    void set_bias(double b) { b_ = b; }

    std::pair<Eigen::MatrixXd, ForwardCache>
    forward(const Eigen::Ref<const Eigen::MatrixXd>& x, bool training = false,
            std::mt19937_64* /*rng*/ = nullptr) const {
        if (x.cols() != w_.size())
            throw InvalidArgument("LinearModel::forward: input dim mismatch");
        Eigen::MatrixXd out = (x * w_).array() + b_;
        ForwardCache cache;
        cache.activations.push_back(x);
        cache.pre_activations.push_back(out);
        cache.training = training;
        cache.layer_count = 1;
        return {std::move(out), std::move(cache)};
    }

    GradientSet backward(const ForwardCache& cache,
                         const Eigen::Ref<const Eigen::MatrixXd>& out_grad) const {
        if (cache.layer_count != 1 || cache.activations.empty() ||
            cache.activations[0].cols() != w_.size())
            throw InvalidArgument("LinearModel::backward: cache does not match model");
        if (out_grad.rows() != cache.activations[0].rows() || out_grad.cols() != 1)
            throw InvalidArgument("LinearModel::backward: out_grad shape mismatch");
        GradientSet g;
        g.weights.push_back(cache.activations[0].transpose() * out_grad);
        g.biases.push_back(Eigen::VectorXd::Constant(1, out_grad.sum()));
        return g;
    }

    Eigen::MatrixXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
        return forward(x, false).first;
    }

    TensorSet params() const {
        TensorSet p;
        p.weights.push_back(w_);
        p.biases.push_back(Eigen::VectorXd::Constant(1, b_));
        return p;
    }

    void set_params(const TensorSet& p) {
        if (p.weights.size() != 1 || p.biases.size() != 1 ||
            p.weights[0].rows() != w_.size() || p.weights[0].cols() != 1 ||
            p.biases[0].size() != 1)
            throw InvalidArgument("LinearModel::set_params: shape mismatch");
        w_ = p.weights[0].col(0);
        b_ = p.biases[0](0);
    }

private:
    Eigen::VectorXd w_; // stored as d x 1 weight tensor in params()
    double b_;
};

/// Multilayer perceptron: affine layers with ReLU between them and
/// inverted dropout on the last hidden activation (kept units scaled by
/// 1/(1-p), so eval mode needs no rescaling).
class MlpModel {
public:
    enum class Activation { ReLU };

    MlpModel(std::vector<Eigen::Index> layer_dims, double dropout_prob,
             std::mt19937_64& rng)
        : dims_(std::move(layer_dims)), dropout_prob_(dropout_prob) {
        if (dims_.size() < 2)
            throw InvalidArgument("MlpModel: need at least input and output dims");
        for (Eigen::Index d : dims_)
            if (d < 1) throw InvalidArgument("MlpModel: layer dims must be positive");
        if (dropout_prob_ < 0.0 || dropout_prob_ >= 1.0)
            throw InvalidArgument("MlpModel: dropout_prob must be in [0, 1)");
        for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
            weights_.push_back(detail::glorot(dims_[i], dims_[i + 1], rng));
            biases_.push_back(Eigen::VectorXd::Zero(dims_[i + 1]));
        }
    }

    const std::vector<Eigen::Index>& layer_dims() const { return dims_; }
    Eigen::Index input_dim() const { return dims_.front(); }
    Eigen::Index output_dim() const { return dims_.back(); }
    double dropout_prob() const { return dropout_prob_; }
    Activation activation() const { return Activation::ReLU; }
    std::size_t layer_count() const { return weights_.size(); }

    std::pair<Eigen::MatrixXd, ForwardCache>
    forward(const Eigen::Ref<const Eigen::MatrixXd>& x, bool training = false,
            std::mt19937_64* rng = nullptr) const {
        if (x.cols() != input_dim())
            throw InvalidArgument("MlpModel::forward: input dim mismatch");
        if (training && dropout_prob_ > 0.0 && rng == nullptr)
            throw InvalidArgument("MlpModel::forward: training with dropout needs an rng");

        ForwardCache cache;
        cache.training = training;
        cache.layer_count = weights_.size();
        cache.activations.push_back(x);

        Eigen::MatrixXd a = x;
        for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
            Eigen::MatrixXd z =
                (a * weights_[layer]).rowwise() + biases_[layer].transpose();
            cache.pre_activations.push_back(z);
            if (layer + 1 == weights_.size()) {
                a = std::move(z);
            } else {
                a = z.cwiseMax(0.0);
                if (layer + 2 == weights_.size() && training && dropout_prob_ > 0.0) {
                    std::bernoulli_distribution keep(1.0 - dropout_prob_);
                    Eigen::MatrixXd mask(a.rows(), a.cols());
                    const double scale = 1.0 / (1.0 - dropout_prob_);
                    for (Eigen::Index i = 0; i < mask.rows(); ++i)
                        for (Eigen::Index j = 0; j < mask.cols(); ++j)
                            mask(i, j) = keep(*rng) ? scale : 0.0;
                    a = a.cwiseProduct(mask);
                    cache.dropout_mask = std::move(mask);
                }
                cache.activations.push_back(a);
            }
        }
        return {std::move(a), std::move(cache)};
    }

    GradientSet backward(const ForwardCache& cache,
                         const Eigen::Ref<const Eigen::MatrixXd>& out_grad) const {
        if (cache.layer_count != weights_.size() ||
            cache.pre_activations.size() != weights_.size() ||
            cache.activations.size() != weights_.size())
            throw InvalidArgument("MlpModel::backward: cache does not match model");
        if (out_grad.rows() != cache.activations[0].rows() ||
            out_grad.cols() != output_dim())
            throw InvalidArgument("MlpModel::backward: out_grad shape mismatch");

        GradientSet g;
        g.weights.resize(weights_.size());
        g.biases.resize(weights_.size());

        Eigen::MatrixXd delta = out_grad;
        for (std::size_t layer = weights_.size(); layer-- > 0;) {
            g.weights[layer] = cache.activations[layer].transpose() * delta;
            g.biases[layer] = delta.colwise().sum();
            if (layer == 0) break;
            delta = delta * weights_[layer].transpose();
            if (layer + 1 == weights_.size() && cache.dropout_mask.size() > 0)
                delta = delta.cwiseProduct(cache.dropout_mask);
            // ReLU mask from the stored pre-activation.
            delta = delta.cwiseProduct(
                (cache.pre_activations[layer - 1].array() > 0.0).cast<double>().matrix());
        }
        return g;
    }

    Eigen::MatrixXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
        return forward(x, false).first;
    }

    TensorSet params() const {
        TensorSet p;
        p.weights = weights_;
        p.biases = biases_;
        return p;
    }

    void set_params(const TensorSet& p) {
        TensorSet current;
        current.weights = weights_;
        current.biases = biases_;
        if (!p.same_shape(current))
            throw InvalidArgument("MlpModel::set_params: shape mismatch");
        weights_ = p.weights;
        biases_ = p.biases;
    }

private:
    std::vector<Eigen::Index> dims_;
    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Eigen::VectorXd> biases_;
    double dropout_prob_;
};

inline Eigen::MatrixXd softmax(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
    Eigen::MatrixXd shifted = logits.colwise() - logits.rowwise().maxCoeff();
    Eigen::MatrixXd e = shifted.array().exp();
    return e.array().colwise() / e.rowwise().sum().array();
}

/// Classification residual: one-hot(label) - softmax(logits), rowwise.
/// Each row sums to zero.
inline Eigen::MatrixXd
softmax_residual(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                 const Eigen::Ref<const Eigen::VectorXi>& labels) {
    const Eigen::Index m = logits.rows();
    const Eigen::Index k = logits.cols();
    if (labels.size() != m)
        throw InvalidArgument("softmax_residual: label count mismatch");
    for (Eigen::Index i = 0; i < m; ++i)
        if (labels(i) < 0 || labels(i) >= k)
            throw InvalidArgument("softmax_residual: label out of range");
    Eigen::MatrixXd res = -softmax(logits);
    for (Eigen::Index i = 0; i < m; ++i) res(i, labels(i)) += 1.0;
    return res;
}

} // namespace hsic
