#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bflsim/config.hpp"
#include "bflsim/data.hpp"
#include "bflsim/defense.hpp"
#include "bflsim/model.hpp"

namespace bfl {

struct RoundMetrics {
    std::uint64_t round = 0;
    std::optional<double> test_error;  // only on evaluated rounds
    double train_loss = 0.0;
    std::optional<std::size_t> benign_set_size;
    std::optional<std::size_t> malicious_accepted;
    std::optional<std::array<double, 3>> betas;
    std::optional<double> p1;
    std::optional<double> p2;
    double grad_norm_estimate = 0.0;
    double agg_error_norm = 0.0;
    std::optional<double> backdoor_success;

    bool operator==(const RoundMetrics&) const = default;
};

// Everything the server saw in one round; handed to an optional observer.
struct RoundTrace {
    std::uint64_t round = 0;
    const ParamVector* previous_global = nullptr;
    const ParamVector* new_global = nullptr;
    const std::vector<std::size_t>* participants = nullptr;
    const std::vector<ParamVector>* submissions = nullptr;
    // Per submission: trained on clean local data.
    const std::vector<bool>* clean = nullptr;
    // AdaBFL only.
    const FilterResult* benign = nullptr;
};

using RoundObserver = std::function<void(const RoundTrace&)>;

class Simulation {
public:
    // Validates the config, loads or generates data and partitions it.
    explicit Simulation(const ExperimentConfig& cfg, std::size_t workers = 1);

    // Runs round round() + 1.
    RoundMetrics run_round();

    std::uint64_t round() const noexcept { return round_; }
    const ParamVector& global() const noexcept { return global_; }
    const AggWeights& weights() const noexcept { return weights_; }
    const ModelSpec& model_spec() const noexcept { return spec_; }
    const Dataset& test_set() const noexcept { return test_; }
    const std::vector<Dataset>& client_data() const noexcept { return clients_; }
    const std::vector<std::size_t>& malicious_clients() const noexcept { return malicious_; }
    bool is_malicious(std::size_t client) const;

    void set_observer(RoundObserver observer) { observer_ = std::move(observer); }

    // Participants of round t, ascending client id.
    std::vector<std::size_t> participants(std::uint64_t t) const;

private:
    ExperimentConfig cfg_;
    std::size_t workers_;
    ModelSpec spec_;
    TrainConfig train_;
    Dataset test_;
    std::vector<Dataset> clients_;
    std::vector<Dataset> poisoned_;  // per client, only for malicious ones
    std::vector<std::size_t> malicious_;
    std::vector<bool> malicious_mask_;
    ParamVector global_;
    AggWeights weights_;
    std::uint64_t round_ = 0;
    RoundObserver observer_;
};

/// T rounds from the initial model; one record per round.
std::vector<RoundMetrics> run_experiment(const ExperimentConfig& cfg, std::size_t workers = 1,
                                         RoundObserver observer = {});

enum class SweepAxis { malicious_fraction, bias_h, total_clients, synthetic_fraction, attack, defense };

struct SweepRun {
    std::string axis_value;
    std::string defense;
    std::string attack;
    ExperimentConfig config;
    std::vector<RoundMetrics> history;
};

namespace sim {

SweepAxis parse_axis(std::string_view name);
std::string_view to_string(SweepAxis axis);

// Sets one axis value on a copy of base. total_clients also sets the
// per-round participant count.
ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, const std::string& value);

/// One run per (value, defense). An empty defense list means the base
/// config's defense.
std::vector<SweepRun> run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                                const std::vector<std::string>& defenses = {}, std::size_t workers = 1);

// Last record that carries a test error.
std::optional<double> final_test_error(const std::vector<RoundMetrics>& history);

}  // namespace sim

enum class MetricsFormat { csv, jsonl };

namespace metrics {

MetricsFormat parse_format(std::string_view name);
const std::vector<std::string>& field_names();

// Floats use 17 significant digits; missing optionals are empty cells or null.
void write_metrics(const std::vector<RoundMetrics>& history, std::ostream& out, MetricsFormat format);
void write_metrics(const std::vector<RoundMetrics>& history, const std::filesystem::path& path, MetricsFormat format);
std::vector<RoundMetrics> read_metrics(std::istream& in, MetricsFormat format);
std::vector<RoundMetrics> read_metrics(const std::filesystem::path& path, MetricsFormat format);

}  // namespace metrics
}  // namespace bfl
