#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "robustq/tensor.hpp"

namespace robustq {

// Inputs are [n, features] or [n, channels, height, width].
struct Dataset {
    Tensor inputs;
    std::vector<int> labels;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    Shape sample_shape() const;
    Dataset subset(std::span<const std::size_t> indices) const;
    void validate() const;
};

struct DataSplit {
    Dataset train;
    Dataset validation;
    Dataset calibration;  // drawn from the training portion
};

struct BlobsConfig {
    std::size_t samples = 4000;
    std::size_t classes = 4;
    std::size_t features = 16;
    double separation = 4.0;  // radius of the class centres
    double noise = 1.0;       // per-feature standard deviation
    std::uint64_t seed = 1;
};

// Isotropic Gaussian clusters around random centres.
Dataset make_blobs(const BlobsConfig& cfg);

struct PatternsConfig {
    std::size_t samples = 2000;
    std::size_t image_size = 12;
    double noise = 0.35;
    std::uint64_t seed = 1;
};

// Four procedural texture classes on a single-channel grid: horizontal
// stripes, vertical stripes, diagonal stripes and a spot lattice, each with
// random period, phase and contrast plus additive Gaussian noise.
Dataset make_patterns(const PatternsConfig& cfg);

// IDX files (MNIST layout): images magic 0x00000803 with u8 pixels scaled to
// [0, 1], labels magic 0x00000801. Up to `limit` samples are read (0 = all).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit = 0);

// Shuffled split; calibration samples are taken from the training part.
DataSplit split_dataset(const Dataset& all, double validation_fraction, std::size_t calibration_samples,
                        std::uint64_t seed);

// Same inputs with labels redrawn uniformly at random.
Dataset with_random_labels(const Dataset& d, std::uint64_t seed);

}  // namespace robustq
