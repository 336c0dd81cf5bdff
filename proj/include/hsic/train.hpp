#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "hsic/data.hpp"
#include "hsic/errors.hpp"
#include "hsic/estimator.hpp"
#include "hsic/kernels.hpp"
#include "hsic/metrics.hpp"
#include "hsic/models.hpp"
#include "hsic/optim.hpp"
#include "hsic/rng.hpp"

namespace hsic {

enum class LossKind { Hsic, Squared, Absolute, CrossEntropy };

inline const char* loss_kind_name(LossKind k) {
    switch (k) {
    case LossKind::Hsic: return "hsic";
    case LossKind::Squared: return "squared";
    case LossKind::Absolute: return "absolute";
    case LossKind::CrossEntropy: return "cross_entropy";
    }
    return "unknown";
}

struct OptimizerSpec {
    enum class Kind { Adam, Sgd };
    Kind kind = Kind::Adam;
    double lr = 0.001;
    double sgd_decay_exponent = 0.25; // inverse scaling lr_t = lr / t^p

    AdamConfig adam_config() const {
        AdamConfig c;
        c.lr = lr;
        return c;
    }
    SgdSchedule sgd_schedule() const { return SgdSchedule{lr, sgd_decay_exponent}; }
};

struct TrainConfig {
    LossKind loss = LossKind::Hsic;
    int batch_size = 32;
    int epochs = 200;
    OptimizerSpec optimizer;
    double l2 = 0.0;
    KernelConfig kernel_x{1.0}; // HSIC only
    KernelConfig kernel_r{1.0}; // HSIC only
    std::uint64_t seed = 0;
    std::optional<EarlyStopConfig> early_stop;

    void validate() const {
        if (loss == LossKind::Hsic && batch_size < 2)
            throw InvalidArgument("TrainConfig: HSIC needs batch_size >= 2");
        if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
        if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be >= 1");
        if (l2 < 0.0) throw InvalidArgument("TrainConfig: l2 must be >= 0");
        if (!(optimizer.lr > 0.0)) throw InvalidArgument("TrainConfig: lr must be positive");
        if (early_stop) early_stop->validate();
    }
};

/// Model plus the post-hoc constant: predictions = predict(model, X) + b.
/// b is scalar for regression and a zero vector for classification.
template <class Model>
struct BiasAdjusted {
    Model model;
    Eigen::VectorXd bias_correction;

    Eigen::MatrixXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
        Eigen::MatrixXd out = model.predict(x);
        out.rowwise() += bias_correction.transpose();
        return out;
    }
};

/// b = mean(y) - mean(h(X)) over the given data.
template <class Model>
double estimate_bias(const Model& model, const Dataset& data) {
    if (data.n() < 1) throw InvalidArgument("estimate_bias: empty data");
    if (data.is_classification())
        throw InvalidArgument("estimate_bias: regression data required");
    return data.y.mean() - model.predict(data.X).col(0).mean();
}

namespace detail {

inline Eigen::VectorXi predicted_labels(const Eigen::MatrixXd& logits) {
    Eigen::VectorXi out(logits.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index arg;
        logits.row(i).maxCoeff(&arg);
        out(i) = static_cast<int>(arg);
    }
    return out;
}

inline double cross_entropy(const Eigen::MatrixXd& logits,
                            const Eigen::Ref<const Eigen::VectorXi>& labels) {
    Eigen::MatrixXd p = softmax(logits);
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        total -= std::log(std::max(p(i, labels(i)), 1e-300));
    return total / static_cast<double>(logits.rows());
}

inline Eigen::MatrixXd residuals_of(const Eigen::MatrixXd& outputs, const Dataset& data,
                                    const std::vector<Eigen::Index>& batch_idx) {
    if (data.is_classification()) {
        Eigen::VectorXi labels(static_cast<Eigen::Index>(batch_idx.size()));
        for (std::size_t i = 0; i < batch_idx.size(); ++i)
            labels(static_cast<Eigen::Index>(i)) = data.labels(batch_idx[i]);
        return softmax_residual(outputs, labels);
    }
    Eigen::MatrixXd r(outputs.rows(), 1);
    for (std::size_t i = 0; i < batch_idx.size(); ++i)
        r(static_cast<Eigen::Index>(i), 0) =
            data.y(batch_idx[i]) - outputs(static_cast<Eigen::Index>(i), 0);
    return r;
}

inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m,
                                   const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
}

/// HSIC objective over a full dataset, evaluated over consecutive chunks
/// of up to 256 samples (weighted by chunk size) to keep the cost linear
/// in n. Used for validation monitoring and cross-validation.
template <class Model>
double chunked_hsic_objective(const Model& model, const Dataset& data,
                              const TrainConfig& cfg) {
    constexpr Eigen::Index kChunk = 256;
    Eigen::MatrixXd outputs = model.predict(data.X);
    double total = 0.0;
    Eigen::Index counted = 0;
    for (Eigen::Index start = 0; start < data.n(); start += kChunk) {
        const Eigen::Index len = std::min(kChunk, data.n() - start);
        if (len < 2) break;
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(len));
        std::iota(idx.begin(), idx.end(), start);
        Eigen::MatrixXd r = residuals_of(outputs.middleRows(start, len), data, idx);
        total += hsic_loss(data.X.middleRows(start, len), r, cfg.kernel_x, cfg.kernel_r) *
                 static_cast<double>(len);
        counted += len;
    }
    if (counted == 0) throw InvalidArgument("chunked_hsic_objective: too few samples");
    return total / static_cast<double>(counted);
}

} // namespace detail

/// The objective named in cfg.loss, evaluated on the whole dataset. For
/// HSIC this is the chunked estimator above.
template <class Model>
double evaluate_objective(const Model& model, const Dataset& data,
                          const TrainConfig& cfg) {
    if (data.n() < 1) throw InvalidArgument("evaluate_objective: empty data");
    switch (cfg.loss) {
    case LossKind::Hsic:
        return detail::chunked_hsic_objective(model, data, cfg);
    case LossKind::Squared:
        return mse(data.y, model.predict(data.X).col(0));
    case LossKind::Absolute:
        return (data.y - model.predict(data.X).col(0)).cwiseAbs().mean();
    case LossKind::CrossEntropy:
        return detail::cross_entropy(model.predict(data.X), data.labels);
    }
    throw InvalidArgument("evaluate_objective: unknown loss");
}

namespace detail {

/// Shared epoch/optimizer/early-stop skeleton. `batch_grad` maps a batch
/// index list to the output-gradient matrix (d loss / d outputs) and must
/// also report the models' outputs it used.
template <class Model, class BatchGradFn>
void run_training(Model& model, const Dataset& data, const TrainConfig& cfg,
                  bool drop_partial_batches, BatchGradFn&& batch_grad,
                  const std::function<void(int, double)>& on_epoch) {
    cfg.validate();
    if (data.n() < cfg.batch_size && cfg.loss == LossKind::Hsic)
        throw InvalidArgument("train: fewer samples than HSIC batch size");

    // Optional validation holdout for early stopping.
    Dataset train_view = data;
    Dataset val_view;
    if (cfg.early_stop) {
        auto split_rng = rng::engine(cfg.seed, rng::Stream::Split);
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.n()));
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), split_rng);
        const auto n_val = std::max<Eigen::Index>(
            1, static_cast<Eigen::Index>(cfg.early_stop->validation_fraction *
                                         static_cast<double>(data.n())));
        std::vector<Eigen::Index> val_idx(idx.begin(), idx.begin() + n_val);
        std::vector<Eigen::Index> train_idx(idx.begin() + n_val, idx.end());
        val_view = data.take(val_idx);
        train_view = data.take(train_idx);
    }

    Adam adam(cfg.optimizer.adam_config());
    SgdSchedule sgd = cfg.optimizer.sgd_schedule();
    std::int64_t sgd_t = 0;
    auto dropout_rng = rng::engine(cfg.seed, rng::Stream::Dropout);

    double best_val = std::numeric_limits<double>::infinity();
    TensorSet best_params;
    int epochs_since_best = 0;

    const Eigen::Index n = train_view.n();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng =
            rng::engine(cfg.seed, rng::Stream::Shuffle, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
            if (len < cfg.batch_size && drop_partial_batches) break;
            if (len < 2 && cfg.loss == LossKind::Hsic) break;
            std::vector<Eigen::Index> batch(order.begin() + start,
                                            order.begin() + start + len);
            Eigen::MatrixXd xb = select_rows(train_view.X, batch);
            auto [outputs, cache] = model.forward(xb, true, &dropout_rng);
            Eigen::MatrixXd out_grad = batch_grad(train_view, batch, outputs);
            GradientSet grads = model.backward(cache, out_grad);
            TensorSet params = model.params();
            if (cfg.l2 > 0.0) grads += l2_grad(cfg.l2, params);
            if (cfg.optimizer.kind == OptimizerSpec::Kind::Adam)
                adam.step(params, grads);
            else
                sgd_step(sgd, ++sgd_t, params, grads);
            model.set_params(params);
        }

        if (on_epoch) on_epoch(epoch, evaluate_objective(model, train_view, cfg));

        if (cfg.early_stop) {
            const double val = evaluate_objective(model, val_view, cfg);
            if (val < best_val) {
                best_val = val;
                best_params = model.params();
                epochs_since_best = 0;
            } else if (++epochs_since_best >= cfg.early_stop->patience) {
                // Halt and fall back to the best validated parameters. A run
                // that finishes its full budget keeps the final parameters:
                // the small validation split is too noisy to arbitrate
                // between late epochs.
                if (best_params.flat_size() > 0) model.set_params(best_params);
                break;
            }
        }
    }
}

} // namespace detail

/// HSIC training: per batch the loss gradient flows to the model outputs
/// as d loss / d h = -(d loss / d r), through the softmax Jacobian for
/// classification. Partial final batches are dropped. Afterwards the
/// source bias b = mean(y) - mean(h(X)) is computed over the full
/// training set.
template <class Model>
BiasAdjusted<Model> train_hsic(const Dataset& data, Model model, const TrainConfig& cfg,
                               const std::function<void(int, double)>& on_epoch = {}) {
    if (cfg.loss != LossKind::Hsic)
        throw InvalidArgument("train_hsic: cfg.loss must be Hsic");
    if (data.n() < cfg.batch_size)
        throw InvalidArgument("train_hsic: fewer samples than batch size");

    auto batch_grad = [&cfg](const Dataset& view, const std::vector<Eigen::Index>& batch,
                             const Eigen::MatrixXd& outputs) {
        Eigen::MatrixXd xb = detail::select_rows(view.X, batch);
        Eigen::MatrixXd r = detail::residuals_of(outputs, view, batch);
        Eigen::MatrixXd grad_r = hsic_grad_residuals(xb, r, cfg.kernel_x, cfg.kernel_r);
        if (!view.is_classification()) return Eigen::MatrixXd(-grad_r);
        // d r / d logits for r = onehot - softmax: chain through
        // -(diag(s) - s s^T) per row.
        Eigen::MatrixXd s = softmax(outputs);
        Eigen::MatrixXd out_grad(outputs.rows(), outputs.cols());
        for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
            const double dot = s.row(i).dot(grad_r.row(i));
            out_grad.row(i) =
                -(s.row(i).cwiseProduct(grad_r.row(i)) - dot * s.row(i));
        }
        return out_grad;
    };
    detail::run_training(model, data, cfg, /*drop_partial_batches=*/true, batch_grad,
                         on_epoch);

    const Eigen::Index k = model.output_dim();
    BiasAdjusted<Model> out{std::move(model), Eigen::VectorXd::Zero(k)};
    if (!data.is_classification())
        out.bias_correction(0) = estimate_bias(out.model, data);
    return out;
}

/// Mini-batch training with a per-sample loss: squared, absolute (sign(0)
/// taken as 0), or cross-entropy. Partial final batches are kept.
template <class Model>
Model train_baseline(const Dataset& data, Model model, const TrainConfig& cfg,
                     const std::function<void(int, double)>& on_epoch = {}) {
    if (cfg.loss == LossKind::Hsic)
        throw InvalidArgument("train_baseline: use train_hsic for the HSIC loss");
    if (cfg.loss == LossKind::CrossEntropy) {
        if (!data.is_classification())
            throw InvalidArgument("train_baseline: cross-entropy needs labels");
        if (model.output_dim() < 2)
            throw InvalidArgument("train_baseline: cross-entropy needs k >= 2 outputs");
    } else if (data.is_classification()) {
        throw InvalidArgument("train_baseline: regression loss on labeled data");
    }

    auto batch_grad = [&cfg](const Dataset& view, const std::vector<Eigen::Index>& batch,
                             const Eigen::MatrixXd& outputs) {
        const double m = static_cast<double>(batch.size());
        if (cfg.loss == LossKind::CrossEntropy) {
            Eigen::VectorXi labels(static_cast<Eigen::Index>(batch.size()));
            for (std::size_t i = 0; i < batch.size(); ++i)
                labels(static_cast<Eigen::Index>(i)) = view.labels(batch[i]);
            return Eigen::MatrixXd(-softmax_residual(outputs, labels) / m);
        }
        Eigen::MatrixXd r = detail::residuals_of(outputs, view, batch);
        if (cfg.loss == LossKind::Squared) return Eigen::MatrixXd(-2.0 * r / m);
        return Eigen::MatrixXd(-r.array().sign().matrix() / m); // absolute
    };
    detail::run_training(model, data, cfg, /*drop_partial_batches=*/false, batch_grad,
                         on_epoch);
    return model;
}

/// Hyperparameter grid specification for cross_validate.
struct CvSpec {
    double validation_fraction = 0.1;
    std::vector<double> l2_grid;
    std::vector<double> lr_grid;
};

/// Hold out a seeded validation split, train one model per (l2, lr) grid
/// point, and return the config with the smallest validation loss of the
/// trained objective. Ties break toward the smaller l2.
template <class ModelFactory>
TrainConfig cross_validate(const Dataset& data, ModelFactory&& factory,
                           const CvSpec& cv, const TrainConfig& base_cfg) {
    if (cv.l2_grid.empty() || cv.lr_grid.empty())
        throw InvalidArgument("cross_validate: grids must be non-empty");
    if (!(cv.validation_fraction > 0.0 && cv.validation_fraction < 1.0))
        throw InvalidArgument("cross_validate: validation_fraction must be in (0,1)");

    auto split_rng = rng::engine(base_cfg.seed, rng::Stream::Split);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.n()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), split_rng);
    const auto n_val = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(cv.validation_fraction *
                                     static_cast<double>(data.n())));
    Dataset val = data.take({idx.begin(), idx.begin() + n_val});
    Dataset train = data.take({idx.begin() + n_val, idx.end()});

    TrainConfig best = base_cfg;
    double best_loss = std::numeric_limits<double>::infinity();
    bool found = false;
    for (double lr : cv.lr_grid) {
        for (double l2 : cv.l2_grid) {
            TrainConfig cfg = base_cfg;
            cfg.l2 = l2;
            cfg.optimizer.lr = lr;
            auto model = factory(cfg.seed);
            double val_loss;
            if (cfg.loss == LossKind::Hsic) {
                auto trained = train_hsic(train, std::move(model), cfg);
                val_loss = evaluate_objective(trained.model, val, cfg);
            } else {
                auto trained = train_baseline(train, std::move(model), cfg);
                val_loss = evaluate_objective(trained, val, cfg);
            }
            if (!std::isfinite(val_loss)) continue;
            const bool better =
                val_loss < best_loss ||
                (val_loss == best_loss && found && l2 < best.l2);
            if (!found || better) {
                best = cfg;
                best_loss = val_loss;
                found = true;
            }
        }
    }
    if (!found)
        throw NumericalError("cross_validate: no grid point produced a finite loss");
    return best;
}

} // namespace hsic
