#pragma once

#include <cmath>
#include <cstdint>

#include "hsic/errors.hpp"
#include "hsic/models.hpp"

namespace hsic {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. One instance per training loop; moment shapes are
/// fixed by the first step.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {
        if (!(cfg_.lr > 0.0)) throw InvalidArgument("Adam: lr must be positive");
    }

    const AdamConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return t_; }

    void step(TensorSet& params, const GradientSet& grads) {
        if (!params.same_shape(grads))
            throw InvalidArgument("Adam::step: parameter/gradient shape mismatch");
        if (t_ == 0) {
            m_ = TensorSet::zeros_like(params);
            v_ = TensorSet::zeros_like(params);
        } else if (!m_.same_shape(params)) {
            throw InvalidArgument("Adam::step: shape changed between steps");
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

        auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
            m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
            v.array() = cfg_.beta2 * v.array() + (1.0 - cfg_.beta2) * g.array().square();
            p.array() -=
                cfg_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
        };
        for (std::size_t i = 0; i < params.weights.size(); ++i)
            update(params.weights[i], m_.weights[i], v_.weights[i], grads.weights[i]);
        for (std::size_t i = 0; i < params.biases.size(); ++i)
            update(params.biases[i], m_.biases[i], v_.biases[i], grads.biases[i]);
    }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    TensorSet m_, v_;
};

/// Inverse-scaling schedule lr_t = lr0 / t^p.
struct SgdSchedule {
    double lr0 = 0.01;
    double decay_exponent = 0.25;

    double rate(std::int64_t t) const {
        if (t < 1) throw InvalidArgument("SgdSchedule::rate: t must be >= 1");
        return lr0 / std::pow(static_cast<double>(t), decay_exponent);
    }
};

inline void sgd_step(const SgdSchedule& schedule, std::int64_t t,
                     TensorSet& params, const GradientSet& grads) {
    if (!params.same_shape(grads))
        throw InvalidArgument("sgd_step: parameter/gradient shape mismatch");
    const double lr = schedule.rate(t);
    for (std::size_t i = 0; i < params.weights.size(); ++i)
        params.weights[i] -= lr * grads.weights[i];
    for (std::size_t i = 0; i < params.biases.size(); ++i)
        params.biases[i] -= lr * grads.biases[i];
}

/// Gradient of the penalty lambda * ||theta||^2 over weight tensors only;
/// bias entries always receive zero.
inline GradientSet l2_grad(double lambda, const TensorSet& params) {
    if (lambda < 0.0) throw InvalidArgument("l2_grad: lambda must be >= 0");
    GradientSet g = TensorSet::zeros_like(params);
    for (std::size_t i = 0; i < params.weights.size(); ++i)
        g.weights[i] = 2.0 * lambda * params.weights[i];
    return g;
}

struct EarlyStopConfig {
    int patience = 10;              // epochs without improvement before stopping
    double validation_fraction = 0.1;

    void validate() const {
        if (patience < 1) throw InvalidArgument("EarlyStopConfig: patience must be >= 1");
        if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
            throw InvalidArgument("EarlyStopConfig: validation_fraction must be in (0,1)");
    }
};

} // namespace hsic
