#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bflsim/aggregators.hpp"
#include "bflsim/attacks.hpp"
#include "bflsim/defense.hpp"
#include "bflsim/model.hpp"

namespace bfl {

enum class DataSource { synthetic, idx };
enum class InitChoice { automatic, zeros, he_normal };

struct DataConfig {
    DataSource source = DataSource::synthetic;
    std::size_t num_samples = 20000;
    std::size_t feature_dim = 20;
    std::size_t num_classes = 10;
    double class_separation = 6.0;
    double train_fraction = 0.8;
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
};

struct DefenseConfig {
    bool adabfl = true;
    BaselineKind baseline = BaselineKind::fedavg;
    Topology topology = Topology::parallel_3;
    WeightMode weight_mode = WeightMode::thresholded;
    // Negative: min(malicious count, (n - 1) / 2).
    long long per_side = -1;
    // m = round(synthetic_fraction * n) synthetic copies / samples.
    double synthetic_fraction = 0.3;
    FilterConfig filter;
    AggWeights weights;

    std::string name() const;
};

struct ExperimentConfig {
    std::size_t total_clients = 50;
    std::size_t participants_per_round = 50;
    std::size_t rounds = 100;
    double malicious_fraction = 0.0;
    std::size_t eval_every = 1;
    std::uint64_t seed = 1;

    ModelKind model_kind = ModelKind::logistic;
    std::size_t hidden_dim = 32;
    InitChoice init = InitChoice::automatic;

    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::size_t local_steps = 1;

    DataConfig data;
    double bias_h = 0.5;
    AttackSpec attack;
    DefenseConfig defense;

    // floor(malicious_fraction * n)
    std::size_t num_malicious() const;
    std::size_t per_side() const;
    std::size_t synthetic_count() const;
    ModelSpec model_spec(std::size_t feature_dim, std::size_t num_classes) const;
    TrainConfig train_config() const;
    InitKind init_kind() const;

    // Every violated constraint, in a stable order. Empty when valid.
    std::vector<std::string> problems() const;
    // Throws ConfigError listing all problems.
    void validate() const;
};

namespace config {

std::string_view to_string(DataSource s);
std::string_view to_string(InitChoice c);

/// Applies one flat dotted key. Throws ConfigError for unknown keys and
/// unparsable values.
void set_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

// Every accepted key with its current value rendered as text.
std::vector<std::pair<std::string, std::string>> entries(const ExperimentConfig& cfg);

/// JSON object, nested sections or flat dotted keys (mixed is fine).
/// Scalars may be numbers, strings or booleans.
ExperimentConfig parse_json(std::string_view text);
ExperimentConfig load_file(const std::filesystem::path& path);

std::string to_json(const ExperimentConfig& cfg);

}  // namespace config
}  // namespace bfl
