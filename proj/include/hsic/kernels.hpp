#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "hsic/errors.hpp"

namespace hsic {

/// Kernel selection. Only the RBF kernel exp(-gamma * ||u - v||^2) is
/// implemented; the enum is the extension point for other kernels.
struct KernelConfig {
    enum class Kind { Rbf };
    Kind kind = Kind::Rbf;
    double gamma = 1.0; // inverse squared input distance

    KernelConfig() = default;
    explicit KernelConfig(double g) : gamma(g) {
        if (!(g > 0.0)) throw InvalidArgument("KernelConfig: gamma must be positive");
    }
};

/// n x n symmetric kernel matrix. `centered` marks whether the rank-one
/// centering H G H has already been applied.
struct GramMatrix {
    Eigen::MatrixXd entries;
    bool centered = false;

    Eigen::Index n() const { return entries.rows(); }
};

/// RBF kernel exp(-gamma * ||u - v||^2). Note the convention: gamma
/// multiplies the squared distance directly (not 1/(2 sigma^2)).
inline double rbf(const Eigen::Ref<const Eigen::VectorXd>& u,
                  const Eigen::Ref<const Eigen::VectorXd>& v, double gamma) {
    if (u.size() != v.size())
        throw InvalidArgument("rbf: vectors have different dimensions");
    if (!(gamma > 0.0)) throw InvalidArgument("rbf: gamma must be positive");
    return std::exp(-gamma * (u - v).squaredNorm());
}

/// Gram matrix of RBF evaluations over the rows of `points`.
inline GramMatrix gram(const Eigen::Ref<const Eigen::MatrixXd>& points,
                       const KernelConfig& cfg) {
    const Eigen::Index n = points.rows();
    if (n < 1) throw InvalidArgument("gram: need at least one point");
    if (!(cfg.gamma > 0.0)) throw InvalidArgument("gram: gamma must be positive");

    // ||x_i - x_j||^2 = ||x_i||^2 + ||x_j||^2 - 2 x_i.x_j
    Eigen::VectorXd sq = points.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = sq.replicate(1, n) + sq.transpose().replicate(n, 1)
                         - 2.0 * (points * points.transpose());
    GramMatrix g;
    g.entries = (-cfg.gamma * d2.cwiseMax(0.0)).array().exp();
    // Symmetrize away the last bits of rounding from the expansion above.
    g.entries = 0.5 * (g.entries + g.entries.transpose()).eval();
    g.entries.diagonal().setOnes();
    g.centered = false;
    return g;
}

/// Apply the centering H G H with H = I - (1/n) 11^T, using the
/// rank-structured O(n^2) formula instead of materializing H.
inline GramMatrix center(const GramMatrix& g) {
    const Eigen::Index n = g.n();
    Eigen::VectorXd row_mean = g.entries.rowwise().mean();
    Eigen::VectorXd col_mean = g.entries.colwise().mean();
    const double grand_mean = row_mean.mean();
    GramMatrix out;
    out.entries = g.entries;
    out.entries.colwise() -= row_mean;
    out.entries.rowwise() -= col_mean.transpose();
    out.entries.array() += grand_mean;
    out.centered = true;
    return out;
}

/// Median-distance bandwidth heuristic: gamma = 1 / (2 m^2) where m is
/// the median of all pairwise Euclidean distances (mean of the two middle
/// values when the count is even).
inline double median_gamma(const Eigen::Ref<const Eigen::MatrixXd>& points) {
    const Eigen::Index n = points.rows();
    if (n < 2) throw InvalidArgument("median_gamma: need at least two points");
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            dists.push_back((points.row(i) - points.row(j)).norm());

    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
    double median = dists[mid];
    if (dists.size() % 2 == 0) {
        double lower = *std::max_element(dists.begin(), dists.begin() + mid);
        median = 0.5 * (median + lower);
    }
    if (!(median > 0.0))
        throw DegenerateData("median_gamma: median pairwise distance is zero");
    return 1.0 / (2.0 * median * median);
}

} // namespace hsic
