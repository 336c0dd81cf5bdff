// Command-line front end for the experiment runners. Subcommands:
//   fetch      download and unpack the public datasets into the cache
//   synthetic  covariate-shift study on the linear synthetic generator
//   bike       season-holdout study on the UCI bike-sharing data
//   mnist      rotated-MNIST study (long-running)
//   batchsize  HSIC batch-size sensitivity study
//   proptest   randomized estimator property battery
//
// Every experiment writes results.csv (per-run records), table.md
// (aggregates) and meta.json (resolved configuration) into --out.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <exception>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "hsic/estimator.hpp"
#include "hsic/experiments.hpp"
#include "hsic/fetch.hpp"

namespace {

using nlohmann::json;

hsic::BikeTransform transform_from_name(const std::string& name) {
    if (name == "identity") return hsic::BikeTransform::Identity;
    if (name == "sqrt") return hsic::BikeTransform::Sqrt;
    if (name == "div100") return hsic::BikeTransform::Div100;
    throw hsic::InvalidArgument("unknown bike transform: " + name);
}

// Apply a JSON config file on top of the defaults. Unknown keys are a
// hard error so typos do not silently fall back to defaults.
void apply_config(hsic::ExperimentSpec& spec, const json& cfg) {
    for (const auto& [key, value] : cfg.items()) {
        if (key == "repeats") spec.repeats = value.get<int>();
        else if (key == "seed") spec.seed = value.get<std::uint64_t>();
        else if (key == "threads") spec.threads = value.get<int>();
        else if (key == "paper_scale") spec.paper_scale = value.get<bool>();
        else if (key == "synthetic_d") spec.synthetic_d = value.get<int>();
        else if (key == "n_grid") {
            spec.n_grid.clear();
            for (const auto& v : value) spec.n_grid.push_back(v.get<Eigen::Index>());
        } else if (key == "noise_scale") spec.noise_scale = value.get<double>();
        else if (key == "n_test") spec.n_test = value.get<Eigen::Index>();
        else if (key == "synthetic_epochs") spec.synthetic_epochs = value.get<int>();
        else if (key == "synthetic_l2") spec.synthetic_l2 = value.get<double>();
        else if (key == "hsic_lr_low") spec.hsic_lr_low = value.get<double>();
        else if (key == "hsic_lr_high") spec.hsic_lr_high = value.get<double>();
        else if (key == "baseline_lr") spec.baseline_lr = value.get<double>();
        else if (key == "hsic_batch_size") spec.hsic_batch_size = value.get<int>();
        else if (key == "batch_grid") {
            spec.batch_grid.clear();
            for (const auto& v : value) spec.batch_grid.push_back(v.get<int>());
        } else if (key == "batch_study_n") spec.batch_study_n = value.get<Eigen::Index>();
        else if (key == "bike_subsample_fraction")
            spec.bike_subsample_fraction = value.get<double>();
        else if (key == "bike_epochs") spec.bike_epochs = value.get<int>();
        else if (key == "bike_lr_low") spec.bike_lr_low = value.get<double>();
        else if (key == "bike_lr_high") spec.bike_lr_high = value.get<double>();
        else if (key == "bike_gamma_x") spec.bike_gamma_x = value.get<double>();
        else if (key == "bike_gamma_r") spec.bike_gamma_r = value.get<double>();
        else if (key == "bike_transform")
            spec.bike_transform = transform_from_name(value.get<std::string>());
        else if (key == "mnist_repeats") spec.mnist_repeats = value.get<int>();
        else if (key == "mnist_hidden") spec.mnist_hidden = value.get<int>();
        else if (key == "mnist_train_samples")
            spec.mnist_train_samples = value.get<Eigen::Index>();
        else if (key == "mnist_epochs") spec.mnist_epochs = value.get<int>();
        else if (key == "mnist_gamma_x") spec.mnist_gamma_x = value.get<double>();
        else if (key == "mnist_gamma_r") spec.mnist_gamma_r = value.get<double>();
        else if (key == "mnist_lr_low") spec.mnist_lr_low = value.get<double>();
        else if (key == "mnist_lr_high") spec.mnist_lr_high = value.get<double>();
        else if (key == "cache_dir") spec.cache_dir = value.get<std::string>();
        else if (key == "out_dir") spec.out_dir = value.get<std::string>();
        else if (key == "downloads") {
            // handled by the fetch subcommand
        } else {
            throw hsic::InvalidArgument("unknown config key: " + key);
        }
    }
}

json spec_to_json(const hsic::ExperimentSpec& s, const std::string& experiment) {
    json j;
    j["experiment"] = experiment;
    j["repeats"] = s.repeats;
    j["seed"] = s.seed;
    j["paper_scale"] = s.paper_scale;
    j["threads"] = s.worker_count();
    j["out_dir"] = s.out_dir.string();
    j["cache_dir"] = s.cache_dir.string();
    j["synthetic_d"] = s.synthetic_d;
    j["n_grid"] = s.n_grid;
    j["noise_scale"] = s.noise_scale;
    j["n_test"] = s.n_test;
    j["synthetic_epochs"] = s.synthetic_epochs;
    j["synthetic_l2"] = s.synthetic_l2;
    j["hsic_lr_low"] = s.hsic_lr_low;
    j["hsic_lr_high"] = s.hsic_lr_high;
    j["baseline_lr"] = s.baseline_lr;
    j["hsic_batch_size"] = s.hsic_batch_size;
    j["batch_grid"] = s.batch_grid;
    j["batch_study_n"] = s.batch_study_n;
    j["bike_subsample_fraction"] = s.bike_subsample_fraction;
    j["bike_epochs"] = s.bike_epochs;
    j["bike_lr_low"] = s.bike_lr_low;
    j["bike_lr_high"] = s.bike_lr_high;
    j["bike_gamma_x"] = s.bike_gamma_x;
    j["bike_gamma_r"] = s.bike_gamma_r;
    j["mnist_repeats"] = s.mnist_repeats;
    j["mnist_hidden"] = s.mnist_hidden;
    j["mnist_train_samples"] = s.mnist_train_samples;
    j["mnist_epochs"] = s.mnist_epochs;
    j["mnist_gamma_x"] = s.mnist_gamma_x;
    j["mnist_gamma_r"] = s.mnist_gamma_r;
    j["mnist_lr_low"] = s.mnist_lr_low;
    j["mnist_lr_high"] = s.mnist_lr_high;
    return j;
}

void write_outputs(const hsic::ExperimentSpec& spec, const std::string& experiment,
                   const hsic::ExperimentResult& result, double seconds,
                   const std::string& extra_markdown = "") {
    std::filesystem::create_directories(spec.out_dir);
    result.per_run.write_csv((spec.out_dir / "results.csv").string());

    std::string md = result.aggregates.to_markdown();
    if (!extra_markdown.empty()) md += "\n" + extra_markdown;
    std::ofstream table(spec.out_dir / "table.md", std::ios::binary);
    table << md;

    json meta = spec_to_json(spec, experiment);
    meta["wall_seconds"] = seconds;
    meta["rows"] = result.per_run.rows.size();
    std::ofstream out(spec.out_dir / "meta.json");
    out << meta.dump(2) << "\n";

    std::cout << result.aggregates.to_markdown();
    std::cout << "wrote " << (spec.out_dir / "results.csv").string() << ", table.md, "
              << "meta.json (" << hsic::format_value(seconds) << "s)\n";
}

// Randomized estimator properties; returns the number of failures.
int run_proptest(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> n_dist(5, 40);
    std::uniform_int_distribution<int> d_dist(1, 6);
    std::uniform_real_distribution<double> gamma_dist(0.1, 3.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    int failures = 0;
    auto check = [&failures](const std::string& name, bool ok) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
        if (!ok) ++failures;
    };

    const int trials = 100;
    bool nonneg = true, shift = true, perm = true, coco = true;
    for (int t = 0; t < trials; ++t) {
        const int n = n_dist(rng), dx = d_dist(rng), dr = d_dist(rng);
        Eigen::MatrixXd x(n, dx), r(n, dr);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < dx; ++j) x(i, j) = gauss(rng);
            for (int j = 0; j < dr; ++j) r(i, j) = gauss(rng);
        }
        hsic::KernelConfig kx(gamma_dist(rng)), kr(gamma_dist(rng));
        const double h = hsic::hsic_loss(x, r, kx, kr);

        nonneg = nonneg && h >= 0.0;

        Eigen::MatrixXd x_shift = x;
        x_shift.array() += 2.5;
        Eigen::MatrixXd r_shift = r;
        r_shift.array() -= 1.25;
        shift = shift &&
                std::abs(hsic::hsic_loss(x_shift, r_shift, kx, kr) - h) <= 1e-12 + 1e-9 * h;

        std::vector<Eigen::Index> p(static_cast<std::size_t>(n));
        std::iota(p.begin(), p.end(), 0);
        std::shuffle(p.begin(), p.end(), rng);
        Eigen::MatrixXd xp(n, dx), rp(n, dr);
        for (int i = 0; i < n; ++i) {
            xp.row(i) = x.row(p[static_cast<std::size_t>(i)]);
            rp.row(i) = r.row(p[static_cast<std::size_t>(i)]);
        }
        perm = perm && std::abs(hsic::hsic_loss(xp, rp, kx, kr) - h) <= 1e-12 + 1e-9 * h;

        const hsic::GramMatrix K = hsic::gram(x, kx), L = hsic::gram(r, kr);
        const double c = hsic::empirical_coco(K, L);
        coco = coco && c * c <= hsic::hsic_biased(K, L) + 1e-10;
    }
    check("hsic_non_negative", nonneg);
    check("hsic_shift_invariant", shift);
    check("hsic_permutation_invariant", perm);
    check("coco_squared_bounded_by_hsic", coco);
    return failures;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"HSIC residual-independence training experiments"};
    app.require_subcommand(1);
    app.fallthrough(); // accept global flags after the subcommand too

    std::string config_path;
    hsic::ExperimentSpec spec;
    bool seed_set = false, repeats_set = false, out_set = false;
    std::uint64_t seed_flag = 0;
    int repeats_flag = 0;
    std::string out_flag, cache_flag;
    bool paper_scale_flag = false;

    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--seed", seed_flag, "base RNG seed")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--repeats", repeats_flag, "repeats per cell")
        ->each([&](const std::string&) { repeats_set = true; });
    app.add_option("--out", out_flag, "output directory")->each([&](const std::string&) {
        out_set = true;
    });
    app.add_option("--cache", cache_flag, "dataset cache directory");
    app.add_flag("--paper-scale", paper_scale_flag,
                 "use the full published repeat counts");

    auto* fetch_cmd = app.add_subcommand("fetch", "download datasets into the cache");
    auto* synthetic_cmd = app.add_subcommand("synthetic", "synthetic covariate shift");
    auto* bike_cmd = app.add_subcommand("bike", "bike-sharing season holdout");
    auto* mnist_cmd = app.add_subcommand("mnist", "rotated MNIST (long-running)");
    auto* batch_cmd = app.add_subcommand("batchsize", "HSIC batch-size study");
    auto* prop_cmd = app.add_subcommand("proptest", "randomized estimator properties");

    CLI11_PARSE(app, argc, argv);

    try {
        json cfg = json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw hsic::ParseError("cannot open config " + config_path);
            in >> cfg;
            apply_config(spec, cfg);
        }
        if (seed_set) spec.seed = seed_flag;
        if (repeats_set) spec.repeats = repeats_flag;
        if (out_set) spec.out_dir = out_flag;
        if (!cache_flag.empty()) spec.cache_dir = cache_flag;
        if (paper_scale_flag) spec.paper_scale = true;

        const auto t0 = std::chrono::steady_clock::now();
        auto elapsed = [&t0]() {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        };

        if (fetch_cmd->parsed()) {
            std::vector<hsic::DownloadSpec> downloads = hsic::default_downloads();
            if (cfg.contains("downloads")) {
                downloads.clear();
                for (const auto& d : cfg["downloads"])
                    downloads.push_back({d.at("url").get<std::string>(),
                                         d.at("filename").get<std::string>(),
                                         d.value("sha256", std::string())});
            }
            hsic::fetch_data(spec.cache_dir, downloads);
        } else if (synthetic_cmd->parsed()) {
            auto result = hsic::run_synthetic(spec);
            write_outputs(spec, "synthetic", result, elapsed());
        } else if (bike_cmd->parsed()) {
            auto result = hsic::run_bike(spec);
            write_outputs(spec, "bike", result, elapsed(), hsic::bike_markdown(result));
        } else if (mnist_cmd->parsed()) {
            auto result = hsic::run_mnist_rotated(spec);
            write_outputs(spec, "mnist", result, elapsed());
        } else if (batch_cmd->parsed()) {
            auto result = hsic::run_batch_size(spec);
            write_outputs(spec, "batchsize", result, elapsed());
        } else if (prop_cmd->parsed()) {
            const int failures = run_proptest(spec.seed);
            if (failures > 0) {
                std::cerr << "error: " << failures << " property group(s) failed\n";
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
