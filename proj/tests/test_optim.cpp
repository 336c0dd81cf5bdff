#include <doctest.h>

#include "hsic/optim.hpp"

using hsic::Adam;
using hsic::AdamConfig;
using hsic::GradientSet;
using hsic::SgdSchedule;
using hsic::TensorSet;

namespace {

TensorSet scalar_params(double value) {
    TensorSet p;
    p.weights.push_back(Eigen::MatrixXd::Constant(1, 1, value));
    p.biases.push_back(Eigen::VectorXd::Zero(1));
    return p;
}

GradientSet scalar_grad(double value) {
    GradientSet g;
    g.weights.push_back(Eigen::MatrixXd::Constant(1, 1, value));
    g.biases.push_back(Eigen::VectorXd::Zero(1));
    return g;
}

} // namespace

TEST_CASE("Adam leaves parameters unchanged under zero gradient") {
    Adam adam;
    TensorSet p = scalar_params(1.5);
    adam.step(p, scalar_grad(0.0));
    CHECK(p.weights[0](0, 0) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("Adam first bias-corrected step") {
    AdamConfig cfg;
    cfg.lr = 0.001;
    Adam adam(cfg);
    TensorSet p = scalar_params(0.0);
    adam.step(p, scalar_grad(1.0));
    // m-hat = v-hat = 1 at t=1, so the step is -lr / (1 + eps).
    CHECK(p.weights[0](0, 0) == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("Adam moves monotonically against a constant gradient") {
    Adam adam;
    TensorSet p = scalar_params(0.0);
    double prev = 0.0;
    for (int i = 0; i < 5; ++i) {
        adam.step(p, scalar_grad(1.0));
        CHECK(p.weights[0](0, 0) < prev);
        prev = p.weights[0](0, 0);
    }
}

TEST_CASE("SGD inverse scaling schedule") {
    SgdSchedule s{0.04, 0.25};
    CHECK(s.rate(1) == doctest::Approx(0.04).epsilon(1e-15));
    CHECK(s.rate(16) == doctest::Approx(0.02).epsilon(1e-12)); // 16^0.25 = 2
    CHECK_THROWS_AS(s.rate(0), hsic::InvalidArgument);
}

TEST_CASE("sgd_step applies the scheduled rate") {
    SgdSchedule s{0.1, 0.25};
    TensorSet p = scalar_params(1.0);
    hsic::sgd_step(s, 1, p, scalar_grad(2.0));
    CHECK(p.weights[0](0, 0) == doctest::Approx(0.8).epsilon(1e-12));
    hsic::sgd_step(s, 16, p, scalar_grad(0.0));
    CHECK(p.weights[0](0, 0) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("l2_grad touches weights only") {
    TensorSet p;
    p.weights.push_back((Eigen::MatrixXd(2, 1) << 1.0, -2.0).finished());
    p.biases.push_back(Eigen::VectorXd::Constant(1, 5.0));

    GradientSet zero = hsic::l2_grad(0.0, p);
    CHECK(zero.weights[0].cwiseAbs().maxCoeff() == 0.0);

    GradientSet g = hsic::l2_grad(0.5, p);
    CHECK(g.weights[0](0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g.weights[0](1, 0) == doctest::Approx(-2.0).epsilon(1e-15));
    CHECK(g.biases[0](0) == 0.0);

    CHECK_THROWS_AS(hsic::l2_grad(-1.0, p), hsic::InvalidArgument);
}

TEST_CASE("EarlyStopConfig validation") {
    hsic::EarlyStopConfig ok{5, 0.2};
    CHECK_NOTHROW(ok.validate());
    CHECK_THROWS_AS((hsic::EarlyStopConfig{0, 0.2}.validate()), hsic::InvalidArgument);
    CHECK_THROWS_AS((hsic::EarlyStopConfig{5, 0.0}.validate()), hsic::InvalidArgument);
    CHECK_THROWS_AS((hsic::EarlyStopConfig{5, 1.0}.validate()), hsic::InvalidArgument);
}
