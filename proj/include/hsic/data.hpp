#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hsic/errors.hpp"
#include "hsic/rng.hpp"

namespace hsic {

/// Feature matrix plus either regression targets or integer labels, with
/// optional integer metadata columns (year, season for the bike data).
struct Dataset {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;       // regression targets; empty for classification
    Eigen::VectorXi labels;  // classification labels; empty for regression
    std::map<std::string, Eigen::VectorXi> meta;

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index dim() const { return X.cols(); }
    bool is_classification() const { return labels.size() > 0; }

    Dataset take(const std::vector<Eigen::Index>& idx) const {
        Dataset out;
        out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
        if (y.size() > 0) out.y.resize(static_cast<Eigen::Index>(idx.size()));
        if (labels.size() > 0) out.labels.resize(static_cast<Eigen::Index>(idx.size()));
        for (auto& [name, col] : meta)
            out.meta[name].resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const Eigen::Index i = idx[r];
            if (i < 0 || i >= n()) throw InvalidArgument("Dataset::take: index out of range");
            out.X.row(static_cast<Eigen::Index>(r)) = X.row(i);
            if (y.size() > 0) out.y(static_cast<Eigen::Index>(r)) = y(i);
            if (labels.size() > 0) out.labels(static_cast<Eigen::Index>(r)) = labels(i);
        }
        for (const auto& [name, col] : meta)
            for (std::size_t r = 0; r < idx.size(); ++r)
                out.meta[name](static_cast<Eigen::Index>(r)) = col(idx[r]);
        return out;
    }
};

/// Zero-mean noise families for the synthetic generator.
struct NoiseSpec {
    enum class Kind { Gaussian, Laplacian, ShiftedExponential };
    Kind kind = Kind::Gaussian;
    double scale = 0.1;

    void validate() const {
        if (!(scale > 0.0)) throw InvalidArgument("NoiseSpec: scale must be positive");
    }

    double sample(std::mt19937_64& rng) const {
        switch (kind) {
        case Kind::Gaussian: {
            std::normal_distribution<double> d(0.0, scale);
            return d(rng);
        }
        case Kind::Laplacian: {
            // Difference of two unit exponentials is Laplace(0, 1).
            std::exponential_distribution<double> e(1.0);
            return scale * (e(rng) - e(rng));
        }
        case Kind::ShiftedExponential: {
            // 1 - Exp(1) has mean zero.
            std::exponential_distribution<double> e(1.0);
            return scale * (1.0 - e(rng));
        }
        }
        throw InvalidArgument("NoiseSpec: unknown kind");
    }
};

inline const char* noise_kind_name(NoiseSpec::Kind k) {
    switch (k) {
    case NoiseSpec::Kind::Gaussian: return "gaussian";
    case NoiseSpec::Kind::Laplacian: return "laplacian";
    case NoiseSpec::Kind::ShiftedExponential: return "shifted_exponential";
    }
    return "unknown";
}

/// Linear ground truth y = beta.x + eps with a source marginal uniform on
/// [-1,1]^d and a target marginal standard normal on R^d.
struct SyntheticSpec {
    int d = 100;
    double beta_sigma = 0.1;
    NoiseSpec noise;

    void validate() const {
        if (d < 1) throw InvalidArgument("SyntheticSpec: d must be >= 1");
        if (!(beta_sigma > 0.0))
            throw InvalidArgument("SyntheticSpec: beta_sigma must be positive");
        noise.validate();
    }
};

enum class Split { Source, Target };

/// Draw a synthetic dataset. beta is drawn from its own seed-derived
/// stream, so source and target splits of the same seed share it.
inline std::pair<Dataset, Eigen::VectorXd>
gen_synthetic(const SyntheticSpec& spec, Eigen::Index n, Split split,
              std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw InvalidArgument("gen_synthetic: n must be >= 1");

    auto beta_rng = rng::engine(seed, rng::Stream::Beta);
    std::normal_distribution<double> beta_dist(0.0, spec.beta_sigma);
    Eigen::VectorXd beta(spec.d);
    for (int i = 0; i < spec.d; ++i) beta(i) = beta_dist(beta_rng);

    auto x_rng = rng::engine(seed, split == Split::Source ? rng::Stream::SourceX
                                                          : rng::Stream::TargetX);
    auto noise_rng = rng::engine(seed, split == Split::Source
                                           ? rng::Stream::SourceNoise
                                           : rng::Stream::TargetNoise);
    Dataset data;
    data.X.resize(n, spec.d);
    if (split == Split::Source) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < spec.d; ++j) data.X(i, j) = u(x_rng);
    } else {
        std::normal_distribution<double> g(0.0, 1.0);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < spec.d; ++j) data.X(i, j) = g(x_rng);
    }
    data.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        data.y(i) = data.X.row(i).dot(beta) + spec.noise.sample(noise_rng);
    return {std::move(data), std::move(beta)};
}

/// Target transform applied to the bike rental count. Sqrt is the frozen
/// default (see README); the others exist for calibration runs.
enum class BikeTransform { Identity, Sqrt, Div100 };

inline double apply_bike_transform(double cnt, BikeTransform t) {
    switch (t) {
    case BikeTransform::Identity: return cnt;
    case BikeTransform::Sqrt: return std::sqrt(cnt);
    case BikeTransform::Div100: return cnt / 100.0;
    }
    throw InvalidArgument("apply_bike_transform: unknown transform");
}

/// Parse the UCI Bike Sharing hourly file. Column order is taken from the
/// header row; features are (temp, atemp, windspeed, hum) as provided.
inline Dataset load_bike_csv(const std::string& path,
                             BikeTransform transform = BikeTransform::Sqrt) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_bike_csv: cannot open " + path);

    auto split_line = [](const std::string& line) {
        std::vector<std::string> out;
        std::string field;
        std::stringstream ss(line);
        while (std::getline(ss, field, ',')) out.push_back(field);
        return out;
    };

    std::string line;
    if (!std::getline(in, line)) throw ParseError("load_bike_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

    const std::vector<std::string> feature_cols = {"temp", "atemp", "windspeed", "hum"};
    for (const auto& name : std::vector<std::string>{"temp", "atemp", "windspeed",
                                                     "hum", "cnt", "yr", "season"})
        if (!col.count(name))
            throw ParseError("load_bike_csv: missing column '" + name + "' in " + path);

    std::vector<std::array<double, 4>> xs;
    std::vector<double> ys;
    std::vector<int> yrs, seasons;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_line(line);
        if (fields.size() != header.size())
            throw ParseError("load_bike_csv: malformed row at line " +
                             std::to_string(line_no) + " in " + path);
        try {
            std::array<double, 4> row{};
            for (std::size_t j = 0; j < 4; ++j)
                row[j] = std::stod(fields[col[feature_cols[j]]]);
            xs.push_back(row);
            ys.push_back(apply_bike_transform(std::stod(fields[col["cnt"]]), transform));
            yrs.push_back(std::stoi(fields[col["yr"]]));
            seasons.push_back(std::stoi(fields[col["season"]]));
        } catch (const std::exception&) {
            throw ParseError("load_bike_csv: bad numeric field at line " +
                             std::to_string(line_no) + " in " + path);
        }
    }
    if (xs.empty()) throw ParseError("load_bike_csv: no data rows in " + path);

    Dataset data;
    const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
    data.X.resize(n, 4);
    data.y.resize(n);
    data.meta["yr"].resize(n);
    data.meta["season"].resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j) data.X(i, j) = xs[i][j];
        data.y(i) = ys[i];
        data.meta["yr"](i) = yrs[i];
        data.meta["season"](i) = seasons[i];
    }
    return data;
}

/// Split one year of the bike data into three training seasons (source)
/// and the held-out season (target).
inline std::pair<Dataset, Dataset> partition_bike(const Dataset& data, int year,
                                                  int heldout_season) {
    if (!data.meta.count("yr") || !data.meta.count("season"))
        throw InvalidArgument("partition_bike: meta columns yr/season missing");
    if (year != 0 && year != 1) throw InvalidArgument("partition_bike: year must be 0 or 1");
    if (heldout_season < 1 || heldout_season > 4)
        throw InvalidArgument("partition_bike: season must be in 1..4");

    const auto& yr = data.meta.at("yr");
    const auto& season = data.meta.at("season");
    std::vector<Eigen::Index> source_idx, target_idx;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (yr(i) != year) continue;
        if (season(i) == heldout_season)
            target_idx.push_back(i);
        else
            source_idx.push_back(i);
    }
    if (source_idx.empty() || target_idx.empty())
        throw InvalidArgument("partition_bike: empty source or target partition");
    return {data.take(source_idx), data.take(target_idx)};
}

/// Sample floor(fraction * n) rows without replacement.
inline Dataset subsample(const Dataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw InvalidArgument("subsample: fraction must be in (0, 1]");
    const auto k = static_cast<Eigen::Index>(
        std::floor(fraction * static_cast<double>(data.n())));
    if (k < 1) throw InvalidArgument("subsample: resulting dataset is empty");
    std::vector<Eigen::Index> all(static_cast<std::size_t>(data.n()));
    for (Eigen::Index i = 0; i < data.n(); ++i) all[static_cast<std::size_t>(i)] = i;
    auto engine = rng::engine(seed, rng::Stream::Subsample);
    std::shuffle(all.begin(), all.end(), engine);
    all.resize(static_cast<std::size_t>(k));
    return data.take(all);
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4))
        throw ParseError("load_mnist_idx: truncated header in " + path);
    return (static_cast<std::uint32_t>(buf[0]) << 24) |
           (static_cast<std::uint32_t>(buf[1]) << 16) |
           (static_cast<std::uint32_t>(buf[2]) << 8) |
           static_cast<std::uint32_t>(buf[3]);
}

} // namespace detail

/// Load MNIST from the big-endian IDX pair. Pixels are scaled to [0,1]
/// and flattened row-major to d = rows*cols (784 for the canonical files).
inline Dataset load_mnist_idx(const std::string& images_path,
                              const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw ParseError("load_mnist_idx: cannot open " + images_path);
    if (detail::read_be32(img, images_path) != 2051)
        throw ParseError("load_mnist_idx: bad magic in " + images_path);
    const std::uint32_t n = detail::read_be32(img, images_path);
    const std::uint32_t rows = detail::read_be32(img, images_path);
    const std::uint32_t cols = detail::read_be32(img, images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw ParseError("load_mnist_idx: cannot open " + labels_path);
    if (detail::read_be32(lab, labels_path) != 2049)
        throw ParseError("load_mnist_idx: bad magic in " + labels_path);
    if (detail::read_be32(lab, labels_path) != n)
        throw ParseError("load_mnist_idx: image/label counts differ");

    const std::size_t d = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> pixel_buf(d);
    Dataset data;
    data.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    data.labels.resize(static_cast<Eigen::Index>(n));
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!img.read(reinterpret_cast<char*>(pixel_buf.data()),
                      static_cast<std::streamsize>(d)))
            throw ParseError("load_mnist_idx: truncated image data in " + images_path);
        for (std::size_t j = 0; j < d; ++j)
            data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                static_cast<double>(pixel_buf[j]) / 255.0;
        char c;
        if (!lab.read(&c, 1))
            throw ParseError("load_mnist_idx: truncated label data in " + labels_path);
        const int label = static_cast<unsigned char>(c);
        if (label > 9) throw ParseError("load_mnist_idx: label out of range");
        data.labels(static_cast<Eigen::Index>(i)) = label;
    }
    return data;
}

/// Rotate one flattened 28x28 image about its center by `angle_deg`
/// (counter-clockwise), using inverse-mapped bilinear interpolation with
/// zero fill outside the frame.
inline Eigen::VectorXd rotate_image(const Eigen::Ref<const Eigen::VectorXd>& image,
                                    double angle_deg) {
    if (image.size() != 784) throw InvalidArgument("rotate_image: expected 784 pixels");
    const double rad = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double cx = 13.5, cy = 13.5;
    Eigen::VectorXd out(784);
    for (int y = 0; y < 28; ++y) {
        for (int x = 0; x < 28; ++x) {
            // Inverse map: rotate the destination pixel back into the source.
            const double dx = x - cx, dy = y - cy;
            const double sx = c * dx + s * dy + cx;
            const double sy = -s * dx + c * dy + cy;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            auto at = [&](int xi, int yi) {
                if (xi < 0 || xi > 27 || yi < 0 || yi > 27) return 0.0;
                return image(yi * 28 + xi);
            };
            out(y * 28 + x) = (1 - fx) * (1 - fy) * at(x0, y0) +
                              fx * (1 - fy) * at(x0 + 1, y0) +
                              (1 - fx) * fy * at(x0, y0 + 1) +
                              fx * fy * at(x0 + 1, y0 + 1);
        }
    }
    return out;
}

/// Rotate every image by its own angle drawn uniformly from
/// [angle_range.first, angle_range.second] degrees. Labels are unchanged.
inline Dataset rotate_images(const Dataset& data,
                             std::pair<double, double> angle_range,
                             std::uint64_t seed) {
    if (data.dim() != 784) throw InvalidArgument("rotate_images: expected d = 784");
    auto engine = rng::engine(seed, rng::Stream::Rotation);
    std::uniform_real_distribution<double> angle(angle_range.first, angle_range.second);
    Dataset out = data;
    for (Eigen::Index i = 0; i < data.n(); ++i)
        out.X.row(i) = rotate_image(data.X.row(i), angle(engine)).transpose();
    return out;
}

inline Dataset rotate_images(const Dataset& data, std::uint64_t seed) {
    return rotate_images(data, {-45.0, 45.0}, seed);
}

} // namespace hsic
