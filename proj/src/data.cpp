#include "bflsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "bflsim/errors.hpp"
#include "bflsim/rng.hpp"

namespace bfl {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.feature_dim = feature_dim;
    out.num_classes = num_classes;
    out.features.reserve(indices.size() * feature_dim);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= size()) {
            throw DimensionError("subset index " + std::to_string(i) + " out of range " + std::to_string(size()));
        }
        const auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(labels[i]);
    }
    return out;
}

void Dataset::validate() const {
    if (features.size() != labels.size() * feature_dim) {
        throw ConsistencyError("dataset has " + std::to_string(features.size()) + " feature values for " +
                               std::to_string(labels.size()) + " samples of dimension " +
                               std::to_string(feature_dim));
    }
    for (auto y : labels) {
        if (y >= num_classes) {
            throw ConsistencyError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) +
                                   ")");
        }
    }
    for (double x : features) {
        if (!std::isfinite(x)) {
            throw NumericError("dataset contains a non-finite feature");
        }
    }
}

void PartitionConfig::validate() const {
    if (num_classes < 2) {
        throw ConfigError("partition needs at least 2 classes");
    }
    if (num_clients < num_classes) {
        throw ConfigError("partition: " + std::to_string(num_clients) + " clients cannot fill " +
                          std::to_string(num_classes) + " clusters");
    }
    const double uniform = 1.0 / static_cast<double>(num_classes);
    // Small slack so that bias = 1/M given as a decimal (0.1) is accepted.
    if (!(bias >= uniform - 1e-12) || bias > 1.0) {
        throw ConfigError("partition bias must lie in [1/M, 1], got " + std::to_string(bias));
    }
}

namespace data {

Dataset generate_synthetic(std::size_t num_samples, std::size_t feature_dim, std::size_t num_classes,
                           double class_separation, std::uint64_t seed) {
    if (num_samples == 0 || feature_dim == 0 || num_classes == 0) {
        throw ConfigError("synthetic dataset sizes must be positive");
    }
    if (!(class_separation >= 0.0) || !std::isfinite(class_separation)) {
        throw ConfigError("class_separation must be a finite non-negative number");
    }

    auto engine = rng::make_engine(seed, rng::Stream::data);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double radius = class_separation / std::sqrt(2.0);
    std::vector<double> means(num_classes * feature_dim, 0.0);
    if (num_classes <= feature_dim) {
        for (std::size_t c = 0; c < num_classes; ++c) {
            means[c * feature_dim + c] = radius;
        }
    } else {
        for (std::size_t c = 0; c < num_classes; ++c) {
            double norm = 0.0;
            for (std::size_t k = 0; k < feature_dim; ++k) {
                const double v = normal(engine);
                means[c * feature_dim + k] = v;
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (std::size_t k = 0; k < feature_dim; ++k) {
                means[c * feature_dim + k] *= norm > 0.0 ? radius / norm : 0.0;
            }
        }
    }

    std::vector<std::uint32_t> labels(num_samples);
    for (std::size_t i = 0; i < num_samples; ++i) {
        labels[i] = static_cast<std::uint32_t>(i % num_classes);
    }
    std::shuffle(labels.begin(), labels.end(), engine);

    Dataset out;
    out.feature_dim = feature_dim;
    out.num_classes = num_classes;
    out.labels = std::move(labels);
    out.features.resize(num_samples * feature_dim);
    for (std::size_t i = 0; i < num_samples; ++i) {
        const std::size_t c = out.labels[i];
        for (std::size_t k = 0; k < feature_dim; ++k) {
            out.features[i * feature_dim + k] = means[c * feature_dim + k] + normal(engine);
        }
    }
    return out;
}

TrainTestSplit split(const Dataset& data, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto engine = rng::make_engine(seed, rng::Stream::split);
    std::shuffle(order.begin(), order.end(), engine);

    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(data.size())));
    std::span<const std::size_t> all(order);
    return {data.subset(all.first(n_train)), data.subset(all.subspan(n_train))};
}

std::vector<std::vector<std::size_t>> partition_indices(const Dataset& data, const PartitionConfig& cfg) {
    cfg.validate();
    const std::size_t m = cfg.num_classes;

    std::vector<std::vector<std::size_t>> clusters(m);
    for (std::size_t c = 0; c < cfg.num_clients; ++c) {
        clusters[c % m].push_back(c);
    }

    auto engine = rng::make_engine(cfg.seed, rng::Stream::partition);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> other_cluster(0, m - 2);

    std::vector<std::vector<std::size_t>> out(cfg.num_clients);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t y = data.labels[i];
        if (y >= m) {
            throw ConsistencyError("partition: label " + std::to_string(y) + " outside [0, " + std::to_string(m) +
                                   ")");
        }
        std::size_t cluster = y;
        if (unit(engine) >= cfg.bias) {
            cluster = other_cluster(engine);
            if (cluster >= y) {
                ++cluster;
            }
        }
        const auto& members = clusters[cluster];
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        out[members[pick(engine)]].push_back(i);
    }
    return out;
}

std::vector<Dataset> partition_noniid(const Dataset& data, const PartitionConfig& cfg) {
    const auto indices = partition_indices(data, cfg);
    std::vector<Dataset> out;
    out.reserve(indices.size());
    for (const auto& idx : indices) {
        out.push_back(data.subset(idx));
    }
    return out;
}

Dataset flip_labels(const Dataset& data, std::size_t num_classes) {
    Dataset out = data;
    for (auto& y : out.labels) {
        if (y >= num_classes) {
            throw ConsistencyError("flip_labels: label " + std::to_string(y) + " outside [0, " +
                                   std::to_string(num_classes) + ")");
        }
        y = static_cast<std::uint32_t>(num_classes - y - 1);
    }
    return out;
}

}  // namespace data
}  // namespace bfl
