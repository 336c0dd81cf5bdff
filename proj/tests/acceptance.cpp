// Acceptance battery: one line per criterion, PASS / FAIL / SKIP.
// Criteria 8 and 10 need the public datasets in the cache directory
// (env HSIC_DATA_DIR, default ./data_cache); without them they SKIP
// with a hint instead of failing.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hsic/experiments.hpp"
#include "hsic/train.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using hsic::KernelConfig;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::cout << "CRITERION " << criterion << ": " << (pass ? "PASS" : "FAIL") << " - "
              << detail << std::endl;
    if (!pass) ++g_failures;
}

void report_skip(int criterion, const std::string& detail) {
    std::cout << "CRITERION " << criterion << ": SKIP - " << detail << std::endl;
}

fs::path data_dir() {
    if (const char* env = std::getenv("HSIC_DATA_DIR")) return env;
    return "data_cache";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- 1: estimator vs naive dense oracle ------------------------------------
void criterion_1() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> n_dist(2, 64);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto [k, l] = oracle::random_gram_pair(n_dist(rng), rng);
        const double fast = hsic::hsic_biased(k, l);
        const double ref = oracle::naive_hsic(k.entries, l.entries);
        worst = std::max(worst, std::abs(fast - ref) / std::max(1.0, std::abs(ref)));
    }
    std::ostringstream msg;
    msg << "estimator vs materialized-H oracle, 100 Gram pairs, max rel err " << worst;
    report(1, worst <= 1e-10, msg.str());
}

// --- 2: analytic invariants --------------------------------------------------
void criterion_2() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> n_dist(3, 30);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool nonneg = true, shift = true, perm = true, closed = true;

    for (int trial = 0; trial < 100; ++trial) {
        const int n = n_dist(rng);
        Eigen::MatrixXd x = oracle::random_matrix(n, 3, rng);
        Eigen::MatrixXd r = oracle::random_matrix(n, 1, rng);
        KernelConfig kx(0.8), kr(1.1);
        const double h = hsic::hsic_loss(x, r, kx, kr);
        nonneg = nonneg && h >= -1e-12;

        Eigen::MatrixXd rs = r;
        rs.array() += 4.2;
        shift = shift && std::abs(hsic::hsic_loss(x, rs, kx, kr) - h) <= 1e-9;

        std::vector<Eigen::Index> p(static_cast<std::size_t>(n));
        std::iota(p.begin(), p.end(), 0);
        std::shuffle(p.begin(), p.end(), rng);
        Eigen::MatrixXd xp(n, 3), rp(n, 1);
        for (int i = 0; i < n; ++i) {
            xp.row(i) = x.row(p[static_cast<std::size_t>(i)]);
            rp.row(i) = r.row(p[static_cast<std::size_t>(i)]);
        }
        perm = perm && std::abs(hsic::hsic_loss(xp, rp, kx, kr) - h) <= 1e-12;

        const double a = u(rng), b = u(rng);
        hsic::GramMatrix ka, lb;
        ka.entries.resize(2, 2);
        ka.entries << 1.0, a, a, 1.0;
        lb.entries.resize(2, 2);
        lb.entries << 1.0, b, b, 1.0;
        closed = closed &&
                 std::abs(hsic::hsic_biased(ka, lb) - (1.0 - a) * (1.0 - b)) <= 1e-12;
    }
    std::ostringstream msg;
    msg << "invariants over 100 cases: non-negativity " << (nonneg ? "ok" : "violated")
        << ", shift " << (shift ? "ok" : "violated") << ", permutation "
        << (perm ? "ok" : "violated") << ", n=2 closed form "
        << (closed ? "ok" : "violated");
    report(2, nonneg && shift && perm && closed, msg.str());
}

// --- 3: coco^2 <= HSIC -------------------------------------------------------
void criterion_3() {
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> n_dist(2, 32);
    double worst_excess = -1.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto [k, l] = oracle::random_gram_pair(n_dist(rng), rng);
        const double c = hsic::empirical_coco(k, l);
        worst_excess = std::max(worst_excess, c * c - hsic::hsic_biased(k, l));
    }
    std::ostringstream msg;
    msg << "coco^2 - HSIC over 100 instances, max excess " << worst_excess;
    report(3, worst_excess <= 1e-10, msg.str());
}

// --- 4: end-to-end gradient checks ------------------------------------------
template <class Model>
double model_gradient_rel_err(Model& model, const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& y, KernelConfig kx,
                              KernelConfig kr) {
    auto loss_at = [&](const Eigen::VectorXd& flat) {
        Model probe = model;
        hsic::TensorSet p = probe.params();
        p.assign_from_flat(flat);
        probe.set_params(p);
        Eigen::MatrixXd out = probe.predict(x);
        Eigen::MatrixXd r = y - out.col(0);
        return hsic::hsic_loss(x, r, kx, kr);
    };

    auto [out, cache] = model.forward(x, false);
    Eigen::MatrixXd r = y - out.col(0);
    Eigen::MatrixXd grad_r = hsic::hsic_grad_residuals(x, r, kx, kr);
    hsic::GradientSet g = model.backward(cache, Eigen::MatrixXd(-grad_r));

    Eigen::VectorXd analytic = g.flatten();
    Eigen::VectorXd fd = oracle::central_diff(loss_at, model.params().flatten(), 1e-4);
    return (analytic - fd).norm() / std::max(1e-12, fd.norm());
}

void criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(404);
    double worst = 0.0;
    int cases = 0;
    for (int trial = 0; trial < 30; ++trial) {
        Eigen::MatrixXd x = oracle::random_matrix(10, 5, rng);
        Eigen::VectorXd y = oracle::random_matrix(10, 1, rng).col(0);
        hsic::LinearModel m = hsic::LinearModel::random_init(5, rng);
        worst = std::max(worst,
                         model_gradient_rel_err(m, x, y, KernelConfig(0.9), KernelConfig(1.2)));
        ++cases;
    }
    std::uniform_real_distribution<double> bias_dist(-0.3, 0.3);
    int mlp_cases = 0;
    while (mlp_cases < 25) {
        Eigen::MatrixXd x = oracle::random_matrix(8, 4, rng);
        Eigen::VectorXd y = oracle::random_matrix(8, 1, rng).col(0);
        hsic::MlpModel m({4, 6, 5, 1}, 0.0, rng);
        // Random biases, then reject cases with a pre-activation near a ReLU
        // kink: central differences are meaningless at nondifferentiable
        // points (zero-initialized biases put dead rows exactly on the kink).
        hsic::TensorSet p = m.params();
        for (auto& b : p.biases)
            for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = bias_dist(rng);
        m.set_params(p);
        auto [out, cache] = m.forward(x, false);
        double min_pre = std::numeric_limits<double>::infinity();
        for (std::size_t layer = 0; layer + 1 < cache.pre_activations.size(); ++layer)
            min_pre = std::min(min_pre,
                               cache.pre_activations[layer].cwiseAbs().minCoeff());
        if (min_pre < 1e-3) continue;
        worst = std::max(worst,
                         model_gradient_rel_err(m, x, y, KernelConfig(1.0), KernelConfig(0.8)));
        ++cases;
        ++mlp_cases;
    }
    std::ostringstream msg;
    msg << "finite-difference gradient checks, " << cases
        << " cases (linear + 2-hidden MLP), max rel err " << worst << ", "
        << seconds_since(t0) << "s";
    report(4, worst <= 1e-5, msg.str());
}

// --- 5: O(1/n) bias decay ----------------------------------------------------
void criterion_5() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(505);
    const std::vector<Eigen::Index> ns = {50, 100, 200, 400};
    std::vector<double> log_n, log_med;
    for (Eigen::Index n : ns) {
        std::vector<double> vals;
        for (int rep = 0; rep < 50; ++rep) {
            Eigen::MatrixXd x = oracle::random_matrix(n, 1, rng);
            Eigen::MatrixXd r = oracle::random_matrix(n, 1, rng);
            vals.push_back(hsic::hsic_loss(x, r, KernelConfig(1.0), KernelConfig(1.0)));
        }
        log_n.push_back(std::log(static_cast<double>(n)));
        log_med.push_back(std::log(hsic::median_of(vals)));
    }
    // Least-squares slope of log median vs log n.
    const double mx = hsic::mean_of(log_n), my = hsic::mean_of(log_med);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < log_n.size(); ++i) {
        num += (log_n[i] - mx) * (log_med[i] - my);
        den += (log_n[i] - mx) * (log_n[i] - mx);
    }
    const double slope = num / den;
    std::ostringstream msg;
    msg << "bias decay for independent inputs/residuals, log-log slope " << slope
        << " (target [-1.3,-0.7]), " << seconds_since(t0) << "s";
    report(5, slope >= -1.3 && slope <= -0.7, msg.str());
}

// --- 6: realizable recovery ---------------------------------------------------
void criterion_6() {
    const auto t0 = std::chrono::steady_clock::now();
    hsic::SyntheticSpec spec;
    spec.d = 10;
    spec.noise = {hsic::NoiseSpec::Kind::Gaussian, 0.1};
    auto [data, beta] = hsic::gen_synthetic(spec, 4096, hsic::Split::Source, 606);

    hsic::TrainConfig cfg;
    cfg.loss = hsic::LossKind::Hsic;
    cfg.batch_size = 32;
    cfg.epochs = 25;
    cfg.optimizer.lr = 0.005;
    cfg.seed = 606;
    auto adjusted = hsic::train_hsic(data, hsic::LinearModel(10), cfg);

    const Eigen::VectorXd w = adjusted.model.weights();
    const double cosine = w.dot(beta) / (w.norm() * beta.norm());
    const double mean_residual =
        std::abs((data.y - adjusted.predict(data.X).col(0)).mean());
    const double y_std = std::sqrt((data.y.array() - data.y.mean()).square().mean());

    std::ostringstream msg;
    msg << "realizable recovery d=10 n=4096: cosine(w, beta) " << cosine
        << " (>= 0.99), |mean residual| " << mean_residual << " (<= " << 1e-3 * y_std
        << "), " << seconds_since(t0) << "s";
    report(6, cosine >= 0.99 && mean_residual <= 1e-3 * y_std, msg.str());
}

// --- helpers for the experiment-level criteria --------------------------------
double aggregate_value(const hsic::ResultsTable& t,
                       const std::map<std::string, std::string>& where,
                       const std::string& column) {
    auto col_index = [&t](const std::string& name) {
        for (std::size_t i = 0; i < t.columns.size(); ++i)
            if (t.columns[i] == name) return i;
        throw hsic::InvalidArgument("aggregate_value: no column " + name);
    };
    const std::size_t target = col_index(column);
    for (const auto& row : t.rows) {
        bool match = true;
        for (const auto& [key, value] : where)
            if (row[col_index(key)] != value) match = false;
        if (match) return std::stod(row[target]);
    }
    throw hsic::InvalidArgument("aggregate_value: no matching row");
}

// --- 7: synthetic covariate shift (directional) -------------------------------
void criterion_7() {
    const auto t0 = std::chrono::steady_clock::now();
    hsic::ExperimentSpec spec;
    spec.repeats = 20;
    spec.seed = 707;
    spec.n_grid = {512};
    spec.losses = {hsic::LossKind::Squared, hsic::LossKind::Hsic};
    spec.noise_kinds = {hsic::NoiseSpec::Kind::Gaussian, hsic::NoiseSpec::Kind::Laplacian};
    auto result = hsic::run_synthetic(spec);

    const double lap_hsic = aggregate_value(
        result.aggregates, {{"noise", "laplacian"}, {"loss", "hsic"}}, "median_mse_target");
    const double lap_sq = aggregate_value(
        result.aggregates, {{"noise", "laplacian"}, {"loss", "squared"}}, "median_mse_target");
    const double gauss_hsic = aggregate_value(
        result.aggregates, {{"noise", "gaussian"}, {"loss", "hsic"}}, "median_mse_target");
    const double gauss_sq = aggregate_value(
        result.aggregates, {{"noise", "gaussian"}, {"loss", "squared"}}, "median_mse_target");

    const bool lap_ok = lap_hsic <= lap_sq;
    const bool gauss_ok = gauss_hsic <= 1.15 * gauss_sq;
    std::ostringstream msg;
    msg << "synthetic shift n=512, 20 repeats: laplacian median target MSE hsic "
        << lap_hsic << " vs squared " << lap_sq << "; gaussian hsic " << gauss_hsic
        << " vs 1.15*squared " << 1.15 * gauss_sq << "; " << seconds_since(t0) << "s";
    report(7, lap_ok && gauss_ok, msg.str());
}

// --- 8: bike sharing ----------------------------------------------------------
void criterion_8() {
    const fs::path csv = data_dir() / "hour.csv";
    if (!fs::exists(csv)) {
        report_skip(8, "hour.csv not in " + data_dir().string() +
                           "; run `hsic_cli fetch` with network access first");
        return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    hsic::Dataset bike = hsic::load_bike_csv(csv.string());

    const double full_ols = hsic::bike_full_data_ols(bike, 0, 2);
    const bool calibration_ok = std::abs(full_ols - 23.1) <= 0.3;

    hsic::ExperimentSpec spec;
    spec.repeats = 20;
    spec.seed = 808;
    spec.cache_dir = data_dir();
    auto result = hsic::run_bike(spec);

    bool hsic_ok = true;
    std::ostringstream per_season;
    for (int season = 2; season <= 4; ++season) {
        const double ols_mean = aggregate_value(
            result.aggregates, {{"year", "0"}, {"season", std::to_string(season)}},
            "ols_mean");
        const double hsic_median = aggregate_value(
            result.aggregates, {{"year", "0"}, {"season", std::to_string(season)}},
            "hsic_median");
        hsic_ok = hsic_ok && hsic_median <= ols_mean + 0.5;
        per_season << " S" << season << " hsic " << hsic_median << " vs ols " << ols_mean;
    }
    std::ostringstream msg;
    msg << "bike: full-data OLS (Y1,S2) " << full_ols << " (target 23.1 +/- 0.3);"
        << per_season.str() << "; " << seconds_since(t0) << "s";
    report(8, calibration_ok && hsic_ok, msg.str());
}

// --- 9: batch-size study (directional) -----------------------------------------
void criterion_9() {
    const auto t0 = std::chrono::steady_clock::now();
    hsic::ExperimentSpec spec;
    spec.repeats = 20;
    spec.seed = 909;
    spec.batch_grid = {32, 128};
    auto result = hsic::run_batch_size(spec);
    const double m32 = aggregate_value(result.aggregates, {{"batch_size", "32"}},
                                       "median_mse_target");
    const double m128 = aggregate_value(result.aggregates, {{"batch_size", "128"}},
                                        "median_mse_target");
    std::ostringstream msg;
    msg << "batch-size study, 20 repeats: median target MSE m=32 " << m32
        << " <= m=128 " << m128 << "; " << seconds_since(t0) << "s";
    report(9, m32 <= m128, msg.str());
}

// --- 10: rotated MNIST ----------------------------------------------------------
void criterion_10() {
    const fs::path dir = data_dir();
    for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                          "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}) {
        if (!fs::exists(dir / f)) {
            report_skip(10, std::string(f) + " not in " + dir.string() +
                                "; run `hsic_cli fetch` with network access first");
            return;
        }
    }
    const auto t0 = std::chrono::steady_clock::now();
    hsic::ExperimentSpec spec;
    spec.seed = 1010;
    spec.cache_dir = dir;
    spec.mnist_repeats = 5;
    auto result = hsic::run_mnist_rotated(spec);

    const double hsic_target = aggregate_value(result.aggregates, {{"loss", "hsic"}},
                                               "median_acc_target");
    const double ce_target = aggregate_value(result.aggregates, {{"loss", "cross_entropy"}},
                                             "median_acc_target");
    const double hsic_source = aggregate_value(result.aggregates, {{"loss", "hsic"}},
                                               "median_acc_source");
    const double ce_source = aggregate_value(result.aggregates, {{"loss", "cross_entropy"}},
                                             "median_acc_source");
    const bool ok = hsic_target >= ce_target - 0.005 && hsic_source >= 0.90 &&
                    ce_source >= 0.90;
    std::ostringstream msg;
    msg << "rotated MNIST, 5 repeats: target median hsic " << hsic_target << " vs ce "
        << ce_target << "; source medians hsic " << hsic_source << ", ce " << ce_source
        << " (both >= 0.90); " << seconds_since(t0) << "s";
    report(10, ok, msg.str());
}

} // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    if (g_failures > 0) {
        std::cout << g_failures << " criterion(s) failed" << std::endl;
        return 1;
    }
    std::cout << "all executed criteria passed" << std::endl;
    return 0;
}
