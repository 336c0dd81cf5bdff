#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "hsic/errors.hpp"
#include "hsic/kernels.hpp"

namespace hsic {

/// Biased (V-statistic) estimator tr(K H L H) / (n-1)^2, evaluated as an
/// elementwise sum over (H K H) o L so no n x n matrix product is formed.
/// Bias is O(1/n); always >= 0 up to round-off.
inline double hsic_biased(const GramMatrix& k, const GramMatrix& l) {
    const Eigen::Index n = k.n();
    if (n != l.n()) throw InvalidArgument("hsic_biased: Gram sizes differ");
    if (n < 2) throw InvalidArgument("hsic_biased: need at least two samples");
    GramMatrix kc = center(k);
    const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
    return kc.entries.cwiseProduct(l.entries).sum() / denom;
}

/// HSIC-loss of a batch: hsic_biased over the input Gram and the residual
/// Gram. Residual rows are k-dimensional (k = 1 for regression).
/// Invariant under adding the same constant vector to every residual row.
inline double hsic_loss(const Eigen::Ref<const Eigen::MatrixXd>& x_batch,
                        const Eigen::Ref<const Eigen::MatrixXd>& residuals,
                        const KernelConfig& cfg_x, const KernelConfig& cfg_r) {
    if (x_batch.rows() != residuals.rows())
        throw InvalidArgument("hsic_loss: batch and residual counts differ");
    return hsic_biased(gram(x_batch, cfg_x), gram(residuals, cfg_r));
}

/// Gradient of hsic_loss with respect to the residual rows.
///
/// With M = H K H fixed and L_pj = exp(-gamma_r ||r_p - r_j||^2),
///   d loss / d r_p = (2 / (m-1)^2) sum_j M_pj * (-2 gamma_r) (r_p - r_j) L_pj.
inline Eigen::MatrixXd
hsic_grad_residuals(const Eigen::Ref<const Eigen::MatrixXd>& x_batch,
                    const Eigen::Ref<const Eigen::MatrixXd>& residuals,
                    const KernelConfig& cfg_x, const KernelConfig& cfg_r) {
    const Eigen::Index m = x_batch.rows();
    if (m != residuals.rows())
        throw InvalidArgument("hsic_grad_residuals: batch and residual counts differ");
    if (m < 2) throw InvalidArgument("hsic_grad_residuals: need at least two samples");

    GramMatrix kc = center(gram(x_batch, cfg_x));
    GramMatrix l = gram(residuals, cfg_r);
    const double denom = static_cast<double>(m - 1) * static_cast<double>(m - 1);

    // w_pj = M_pj * L_pj; grad row p = (-4 gamma_r / (m-1)^2) *
    //   sum_j w_pj (r_p - r_j). Summed over exact pairwise differences so
    //   constant residuals yield an exact zero gradient.
    Eigen::MatrixXd w = kc.entries.cwiseProduct(l.entries);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(m, residuals.cols());
    for (Eigen::Index p = 0; p < m; ++p)
        for (Eigen::Index j = 0; j < m; ++j)
            grad.row(p) += w(p, j) * (residuals.row(p) - residuals.row(j));
    grad *= -4.0 * cfg_r.gamma / denom;
    return grad;
}

/// Empirical constrained-covariance companion of HSIC: the largest
/// singular value of A^T H B / (n-1) where K = A A^T and L = B B^T are
/// symmetric eigendecomposition square roots. Satisfies
/// empirical_coco(K, L)^2 <= hsic_biased(K, L) up to round-off (operator
/// norm vs Hilbert-Schmidt norm of the same cross matrix).
inline double empirical_coco(const GramMatrix& k, const GramMatrix& l) {
    const Eigen::Index n = k.n();
    if (n != l.n()) throw InvalidArgument("empirical_coco: Gram sizes differ");
    if (n < 2) throw InvalidArgument("empirical_coco: need at least two samples");

    auto sqrt_factor = [n](const Eigen::MatrixXd& g) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
        if (es.info() != Eigen::Success)
            throw NumericalError("empirical_coco: eigendecomposition failed");
        Eigen::VectorXd ev = es.eigenvalues();
        if (ev.minCoeff() < -1e-8 * static_cast<double>(n))
            throw NumericalError("empirical_coco: Gram matrix is indefinite");
        return Eigen::MatrixXd(es.eigenvectors() *
                               ev.cwiseMax(0.0).cwiseSqrt().asDiagonal());
    };

    Eigen::MatrixXd a = sqrt_factor(k.entries);
    Eigen::MatrixXd b = sqrt_factor(l.entries);
    // H b = b with column means removed (H is symmetric idempotent).
    Eigen::MatrixXd hb = b.rowwise() - b.colwise().mean();
    Eigen::MatrixXd cross = a.transpose() * hb;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
    return svd.singularValues()(0) / static_cast<double>(n - 1);
}

} // namespace hsic
