#include <doctest.h>

#include <random>

#include "hsic/train.hpp"
#include "oracles.hpp"

using hsic::Dataset;
using hsic::KernelConfig;
using hsic::LinearModel;
using hsic::LossKind;
using hsic::MlpModel;
using hsic::TrainConfig;

namespace {

Dataset linear_dataset(Eigen::Index n, Eigen::Index d, std::uint64_t seed,
                       double noise_sigma = 0.05) {
    std::mt19937_64 rng(seed);
    Dataset data;
    data.X = oracle::random_matrix(n, d, rng);
    Eigen::VectorXd beta = oracle::random_matrix(d, 1, rng).col(0);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    data.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        data.y(i) = data.X.row(i).dot(beta) + noise(rng);
    return data;
}

} // namespace

TEST_CASE("constant targets leave HSIC-trained parameters unchanged") {
    Dataset data;
    std::mt19937_64 rng(5);
    data.X = oracle::random_matrix(64, 3, rng);
    data.y = Eigen::VectorXd::Constant(64, 2.5);

    TrainConfig cfg;
    cfg.loss = LossKind::Hsic;
    cfg.batch_size = 32;
    cfg.epochs = 3;
    auto adjusted = hsic::train_hsic(data, LinearModel(3), cfg);
    CHECK(adjusted.model.weights().cwiseAbs().maxCoeff() < 1e-12);
    // Bias adjustment alone carries the prediction.
    CHECK(adjusted.bias_correction(0) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(adjusted.predict(data.X).col(0).mean() == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("bias adjustment zeroes the mean training residual") {
    Dataset data = linear_dataset(128, 4, 11);
    TrainConfig cfg;
    cfg.loss = LossKind::Hsic;
    cfg.batch_size = 32;
    cfg.epochs = 10;
    cfg.optimizer.lr = 0.01;
    auto adjusted = hsic::train_hsic(data, LinearModel(4), cfg);
    const double mean_residual = (data.y - adjusted.predict(data.X).col(0)).mean();
    CHECK(std::abs(mean_residual) < 1e-10);
}

TEST_CASE("squared-loss training fits realizable linear data") {
    Dataset data = linear_dataset(256, 3, 17, 0.01);
    TrainConfig cfg;
    cfg.loss = LossKind::Squared;
    cfg.batch_size = 32;
    cfg.epochs = 120;
    cfg.optimizer.lr = 0.02;
    auto model = hsic::train_baseline(data, LinearModel(3), cfg);
    CHECK(hsic::mse(data.y, model.predict(data.X).col(0)) < 0.01);
}

TEST_CASE("hsic gradient flows correctly through softmax for classification") {
    std::mt19937_64 rng(23);
    const Eigen::Index n = 8, k = 3;
    Eigen::MatrixXd x = oracle::random_matrix(n, 4, rng);
    Eigen::MatrixXd logits = oracle::random_matrix(n, k, rng);
    Eigen::VectorXi labels(n);
    for (Eigen::Index i = 0; i < n; ++i) labels(i) = static_cast<int>(i % k);
    KernelConfig kx(1.0), kr(1.0);

    // Analytic d loss / d logits via the softmax Jacobian chain.
    Eigen::MatrixXd r = hsic::softmax_residual(logits, labels);
    Eigen::MatrixXd grad_r = hsic::hsic_grad_residuals(x, r, kx, kr);
    Eigen::MatrixXd s = hsic::softmax(logits);
    Eigen::MatrixXd analytic(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dot = s.row(i).dot(grad_r.row(i));
        analytic.row(i) = -(s.row(i).cwiseProduct(grad_r.row(i)) - dot * s.row(i));
    }

    Eigen::VectorXd flat = Eigen::Map<Eigen::VectorXd>(logits.data(), logits.size());
    Eigen::VectorXd fd = oracle::central_diff(
        [&](const Eigen::VectorXd& v) {
            Eigen::MatrixXd lv = Eigen::Map<const Eigen::MatrixXd>(v.data(), n, k);
            return hsic::hsic_loss(x, hsic::softmax_residual(lv, labels), kx, kr);
        },
        flat);
    Eigen::VectorXd analytic_flat =
        Eigen::Map<Eigen::VectorXd>(analytic.data(), analytic.size());
    CHECK((analytic_flat - fd).norm() / std::max(1e-12, fd.norm()) <= 1e-5);
}

TEST_CASE("evaluate_objective matches hand values") {
    Dataset data;
    data.X = Eigen::MatrixXd::Zero(2, 1);
    data.y.resize(2);
    data.y << 4.0, 6.0;
    LinearModel zero(1);
    TrainConfig cfg;
    cfg.loss = LossKind::Squared;
    CHECK(hsic::evaluate_objective(zero, data, cfg) == doctest::Approx(26.0));
    cfg.loss = LossKind::Absolute;
    CHECK(hsic::evaluate_objective(zero, data, cfg) == doctest::Approx(5.0));
}

TEST_CASE("train_baseline validates loss/data combinations") {
    Dataset regression = linear_dataset(40, 2, 31);
    TrainConfig cfg;
    cfg.loss = LossKind::CrossEntropy;
    cfg.epochs = 1;
    CHECK_THROWS_AS(hsic::train_baseline(regression, LinearModel(2), cfg),
                    hsic::InvalidArgument);

    cfg.loss = LossKind::Hsic;
    CHECK_THROWS_AS(hsic::train_baseline(regression, LinearModel(2), cfg),
                    hsic::InvalidArgument);

    Dataset classified;
    std::mt19937_64 rng(33);
    classified.X = oracle::random_matrix(40, 2, rng);
    classified.labels.resize(40);
    for (int i = 0; i < 40; ++i) classified.labels(i) = i % 2;
    cfg.loss = LossKind::Squared;
    CHECK_THROWS_AS(hsic::train_baseline(classified, LinearModel(2), cfg),
                    hsic::InvalidArgument);
}

TEST_CASE("cross-entropy training separates a toy problem") {
    std::mt19937_64 rng(37);
    Dataset data;
    const Eigen::Index n = 200;
    data.X = oracle::random_matrix(n, 2, rng);
    data.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        data.labels(i) = data.X(i, 0) + data.X(i, 1) > 0.0 ? 1 : 0;

    std::mt19937_64 init(1);
    MlpModel model({2, 16, 2}, 0.0, init);
    TrainConfig cfg;
    cfg.loss = LossKind::CrossEntropy;
    cfg.batch_size = 32;
    cfg.epochs = 60;
    cfg.optimizer.lr = 0.01;
    auto trained = hsic::train_baseline(data, std::move(model), cfg);
    const double acc = hsic::accuracy(
        data.labels, hsic::detail::predicted_labels(trained.predict(data.X)));
    CHECK(acc >= 0.95);
}

TEST_CASE("training is deterministic given the seed") {
    Dataset data = linear_dataset(96, 3, 41);
    TrainConfig cfg;
    cfg.loss = LossKind::Hsic;
    cfg.batch_size = 32;
    cfg.epochs = 5;
    cfg.seed = 7;
    auto a = hsic::train_hsic(data, LinearModel(3), cfg);
    auto b = hsic::train_hsic(data, LinearModel(3), cfg);
    CHECK((a.model.weights() - b.model.weights()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.bias_correction(0) == b.bias_correction(0));
}

TEST_CASE("cross_validate returns the singleton grid point") {
    Dataset data = linear_dataset(80, 2, 43);
    TrainConfig base;
    base.loss = LossKind::Squared;
    base.epochs = 5;
    base.seed = 3;
    hsic::CvSpec cv;
    cv.l2_grid = {0.25};
    cv.lr_grid = {0.01};
    auto chosen = hsic::cross_validate(
        data, [](std::uint64_t) { return LinearModel(2); }, cv, base);
    CHECK(chosen.l2 == doctest::Approx(0.25));
    CHECK(chosen.optimizer.lr == doctest::Approx(0.01));
}

TEST_CASE("cross_validate rejects catastrophic shrinkage") {
    Dataset data = linear_dataset(200, 2, 47, 0.01);
    TrainConfig base;
    base.loss = LossKind::Squared;
    base.epochs = 40;
    base.optimizer.lr = 0.02;
    base.seed = 3;
    hsic::CvSpec cv;
    cv.l2_grid = {0.0, 1e6};
    cv.lr_grid = {0.02};
    auto chosen = hsic::cross_validate(
        data, [](std::uint64_t) { return LinearModel(2); }, cv, base);
    CHECK(chosen.l2 == doctest::Approx(0.0));

    auto again = hsic::cross_validate(
        data, [](std::uint64_t) { return LinearModel(2); }, cv, base);
    CHECK(again.l2 == chosen.l2);
    CHECK(again.optimizer.lr == chosen.optimizer.lr);
}

TEST_CASE("TrainConfig validation") {
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.loss = LossKind::Hsic;
    CHECK_THROWS_AS(cfg.validate(), hsic::InvalidArgument);
    cfg.loss = LossKind::Squared;
    CHECK_NOTHROW(cfg.validate());
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), hsic::InvalidArgument);
}
