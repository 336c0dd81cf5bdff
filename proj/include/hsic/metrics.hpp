#pragma once

#include <Eigen/Dense>
#include <vector>

#include "hsic/errors.hpp"

namespace hsic {

inline double mse(const Eigen::Ref<const Eigen::VectorXd>& y,
                  const Eigen::Ref<const Eigen::VectorXd>& predictions) {
    if (y.size() != predictions.size() || y.size() < 1)
        throw InvalidArgument("mse: size mismatch or empty input");
    return (y - predictions).squaredNorm() / static_cast<double>(y.size());
}

/// Population (1/n) variance of the residuals y - prediction. Invariant
/// to adding the same constant to all predictions.
inline double residual_variance(const Eigen::Ref<const Eigen::VectorXd>& y,
                                const Eigen::Ref<const Eigen::VectorXd>& predictions) {
    if (y.size() != predictions.size())
        throw InvalidArgument("residual_variance: size mismatch");
    if (y.size() < 2) throw InvalidArgument("residual_variance: need >= 2 samples");
    Eigen::VectorXd r = y - predictions;
    const double mean = r.mean();
    return (r.array() - mean).square().sum() / static_cast<double>(r.size());
}

inline double accuracy(const Eigen::Ref<const Eigen::VectorXi>& labels,
                       const Eigen::Ref<const Eigen::VectorXi>& predicted) {
    if (labels.size() != predicted.size() || labels.size() < 1)
        throw InvalidArgument("accuracy: size mismatch or empty input");
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        if (labels(i) == predicted(i)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

/// Mean over classes of per-class accuracy. Every class in [0, k) must be
/// present in `labels` at least once.
inline double class_balanced_accuracy(const Eigen::Ref<const Eigen::VectorXi>& labels,
                                      const Eigen::Ref<const Eigen::VectorXi>& predicted,
                                      int k) {
    if (labels.size() != predicted.size() || labels.size() < 1)
        throw InvalidArgument("class_balanced_accuracy: size mismatch or empty input");
    if (k < 1) throw InvalidArgument("class_balanced_accuracy: k must be >= 1");
    std::vector<Eigen::Index> total(static_cast<std::size_t>(k), 0);
    std::vector<Eigen::Index> hits(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        const int c = labels(i);
        if (c < 0 || c >= k)
            throw InvalidArgument("class_balanced_accuracy: label out of range");
        ++total[static_cast<std::size_t>(c)];
        if (predicted(i) == c) ++hits[static_cast<std::size_t>(c)];
    }
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
        if (total[static_cast<std::size_t>(c)] == 0)
            throw InvalidArgument("class_balanced_accuracy: class missing from labels");
        sum += static_cast<double>(hits[static_cast<std::size_t>(c)]) /
               static_cast<double>(total[static_cast<std::size_t>(c)]);
    }
    return sum / static_cast<double>(k);
}

} // namespace hsic
