#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace bfl {

// Row-major sample matrix plus integer class labels in [0, num_classes).
struct Dataset {
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::vector<double> features;
    std::vector<std::uint32_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * feature_dim, feature_dim};
    }
    std::span<double> row(std::size_t i) { return {features.data() + i * feature_dim, feature_dim}; }

    Dataset subset(std::span<const std::size_t> indices) const;

    // Throws ConsistencyError on shape or label-range violations and
    // NumericError on non-finite features.
    void validate() const;
};

struct PartitionConfig {
    std::size_t num_clients = 0;
    std::size_t num_classes = 0;
    double bias = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

namespace data {

/// Class c has mean separation/sqrt(2) * e_c (pairwise mean distance equals
/// `class_separation` when num_classes <= feature_dim; otherwise the means
/// sit on seeded random unit directions with the same radius). Samples add
/// unit-variance isotropic noise. Labels cycle 0..M-1 before a seeded
/// shuffle, so classes are balanced up to rounding.
Dataset generate_synthetic(std::size_t num_samples, std::size_t feature_dim, std::size_t num_classes,
                           double class_separation, std::uint64_t seed);

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

// Seeded shuffle, first round(fraction * n) rows go to train.
TrainTestSplit split(const Dataset& data, double train_fraction, std::uint64_t seed);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled to byte/255. num_classes is max label + 1 unless
/// `num_classes` is nonzero.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t num_classes = 0);

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// Sample indices per client. Clients are assigned round-robin to M
/// clusters; a sample of label y goes to cluster y with probability h and to
/// each other cluster with probability (1-h)/(M-1), then to a uniformly
/// random client inside that cluster.
std::vector<std::vector<std::size_t>> partition_indices(const Dataset& data, const PartitionConfig& cfg);

std::vector<Dataset> partition_noniid(const Dataset& data, const PartitionConfig& cfg);

// y -> M - y - 1
Dataset flip_labels(const Dataset& data, std::size_t num_classes);

}  // namespace data
}  // namespace bfl
