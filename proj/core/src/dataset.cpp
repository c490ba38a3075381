#include "robustq/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "robustq/rng.hpp"

namespace robustq {

Shape Dataset::sample_shape() const {
    const auto& s = inputs.shape();
    return Shape(s.begin() + 1, s.end());
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw std::invalid_argument("Dataset::subset: empty index set");
    const std::size_t per = inputs.numel() / size();
    Shape shape = inputs.shape();
    shape[0] = indices.size();
    std::vector<double> data;
    data.reserve(indices.size() * per);
    std::vector<int> lab;
    lab.reserve(indices.size());
    for (auto i : indices) {
        if (i >= size()) throw std::out_of_range("Dataset::subset: index " + std::to_string(i) + " out of range");
        const auto src = inputs.data().subspan(i * per, per);
        data.insert(data.end(), src.begin(), src.end());
        lab.push_back(labels[i]);
    }
    return Dataset{Tensor(std::move(shape), std::move(data)), std::move(lab), classes};
}

void Dataset::validate() const {
    if (labels.empty()) throw std::invalid_argument("Dataset: no samples");
    if (inputs.rank() < 2 || inputs.dim(0) != labels.size()) {
        throw std::invalid_argument("Dataset: inputs " + shape_to_string(inputs.shape()) + " do not match " +
                                    std::to_string(labels.size()) + " labels");
    }
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= classes) {
            throw std::invalid_argument("Dataset: label " + std::to_string(l) + " outside [0, " +
                                        std::to_string(classes) + ")");
        }
    }
}

Dataset make_blobs(const BlobsConfig& cfg) {
    if (cfg.samples == 0 || cfg.classes < 2 || cfg.features == 0) throw std::invalid_argument("make_blobs: bad config");
    Rng rng(cfg.seed);
    std::vector<std::vector<double>> centres(cfg.classes, std::vector<double>(cfg.features));
    for (auto& c : centres) {
        double norm = 0.0;
        for (auto& v : c) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : c) v *= cfg.separation / norm;
    }
    Tensor x({cfg.samples, cfg.features});
    std::vector<int> y(cfg.samples);
    for (std::size_t i = 0; i < cfg.samples; ++i) {
        const auto k = static_cast<std::size_t>(i % cfg.classes);
        y[i] = static_cast<int>(k);
        for (std::size_t f = 0; f < cfg.features; ++f) x[i * cfg.features + f] = centres[k][f] + cfg.noise * rng.normal();
    }
    return Dataset{std::move(x), std::move(y), cfg.classes};
}

Dataset make_patterns(const PatternsConfig& cfg) {
    if (cfg.samples == 0 || cfg.image_size < 4) throw std::invalid_argument("make_patterns: bad config");
    Rng rng(cfg.seed);
    const std::size_t s = cfg.image_size;
    constexpr std::size_t kClasses = 4;
    Tensor x({cfg.samples, 1, s, s});
    std::vector<int> y(cfg.samples);
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t i = 0; i < cfg.samples; ++i) {
        const auto k = static_cast<int>(i % kClasses);
        y[i] = k;
        const double period = 3.0 + 3.0 * rng.uniform();
        const double phase_a = period * rng.uniform();
        const double phase_b = period * rng.uniform();
        const double contrast = 0.5 + 0.5 * rng.uniform();
        double* img = x.data().data() + i * s * s;
        for (std::size_t r = 0; r < s; ++r) {
            for (std::size_t c = 0; c < s; ++c) {
                const double fr = static_cast<double>(r), fc = static_cast<double>(c);
                double v = 0.0;
                switch (k) {
                    case 0: v = std::sin(two_pi * (fr + phase_a) / period); break;
                    case 1: v = std::sin(two_pi * (fc + phase_a) / period); break;
                    case 2: v = std::sin(two_pi * (fr + fc + phase_a) / (period * std::numbers::sqrt2)); break;
                    default:
                        v = std::cos(two_pi * (fr + phase_a) / period) * std::cos(two_pi * (fc + phase_b) / period);
                        break;
                }
                img[r * s + c] = contrast * v + cfg.noise * rng.normal();
            }
        }
    }
    return Dataset{std::move(x), std::move(y), kClasses};
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("load_idx: truncated header in " + path.string());
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit) {
    std::ifstream img(images, std::ios::binary);
    if (!img) throw std::runtime_error("load_idx: cannot open " + images.string());
    std::ifstream lab(labels, std::ios::binary);
    if (!lab) throw std::runtime_error("load_idx: cannot open " + labels.string());

    if (read_be32(img, images) != 0x00000803u) throw std::runtime_error("load_idx: bad image magic in " + images.string());
    const std::size_t n_img = read_be32(img, images);
    const std::size_t rows = read_be32(img, images);
    const std::size_t cols = read_be32(img, images);
    if (read_be32(lab, labels) != 0x00000801u) throw std::runtime_error("load_idx: bad label magic in " + labels.string());
    const std::size_t n_lab = read_be32(lab, labels);
    if (n_img != n_lab) {
        throw std::runtime_error("load_idx: " + std::to_string(n_img) + " images but " + std::to_string(n_lab) + " labels");
    }
    const std::size_t n = limit ? std::min(limit, n_img) : n_img;
    if (n == 0 || rows == 0 || cols == 0) throw std::runtime_error("load_idx: empty dataset");

    std::vector<unsigned char> raw(n * rows * cols);
    if (!img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw std::runtime_error("load_idx: truncated pixel data in " + images.string());
    }
    std::vector<unsigned char> raw_labels(n);
    if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(n))) {
        throw std::runtime_error("load_idx: truncated label data in " + labels.string());
    }
    Tensor x({n, 1, rows, cols});
    for (std::size_t i = 0; i < raw.size(); ++i) x[i] = static_cast<double>(raw[i]) / 255.0;
    std::vector<int> y(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = raw_labels[i];
        max_label = std::max(max_label, y[i]);
    }
    Dataset d{std::move(x), std::move(y), static_cast<std::size_t>(max_label) + 1};
    d.validate();
    return d;
}

DataSplit split_dataset(const Dataset& all, double validation_fraction, std::size_t calibration_samples,
                        std::uint64_t seed) {
    all.validate();
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw std::invalid_argument("split_dataset: validation fraction must be in (0, 1)");
    }
    Rng rng(seed);
    const auto perm = rng.permutation(all.size());
    const auto n_val = static_cast<std::size_t>(std::round(validation_fraction * static_cast<double>(all.size())));
    if (n_val == 0 || n_val >= all.size()) throw std::invalid_argument("split_dataset: degenerate split");
    std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
    const std::size_t n_cal = std::min(calibration_samples, train.size());
    std::vector<std::size_t> cal(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_cal));
    return DataSplit{all.subset(train), all.subset(val), all.subset(cal)};
}

Dataset with_random_labels(const Dataset& d, std::uint64_t seed) {
    Rng rng(seed);
    Dataset out = d;
    for (auto& l : out.labels) l = static_cast<int>(rng.below(d.classes));
    return out;
}

}  // namespace robustq
