#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bflsim/params.hpp"

namespace bfl {

enum class LambdaSchedule { constant_inv_T, log_base };

struct FilterConfig {
    double gamma = 0.8;
    double kappa = 1.0;
    LambdaSchedule schedule = LambdaSchedule::constant_inv_T;
    double log_base = 2.718281828459045;
    std::size_t total_rounds = 1;

    // lambda(t) for rounds t >= 1.
    double lambda(std::uint64_t t) const;
    // gamma * exp(-kappa * lambda(t)) / 2
    double tolerance(std::uint64_t t) const;
    void validate() const;
};

struct AggWeights {
    double beta1 = 1.0 / 3.0;
    double beta2 = 1.0 / 3.0;
    double beta3 = 1.0 / 3.0;
    double beta1_min = 0.1;
    double beta2_max = 0.6;
    double beta3_min = 0.1;
    double beta1_base = 0.3;
    double delta_high = 0.1;
    double delta_low = 0.05;
    double rho1 = 0.01;
    double rho2 = 0.7;
    double kappa_w = 0.1;
    double alpha = 0.9;
    double epsilon = 1e-8;
    // false: second branch fires on p2 < rho2; true: on p2 >= rho2.
    bool p2_branch_ge = false;

    std::array<double, 3> betas() const { return {beta1, beta2, beta3}; }
    void validate() const;
};

struct DefenseSignals {
    double p1 = 0.0;
    double p2 = 0.0;
};

enum class Topology { parallel_3, serial_1, serial_2 };
enum class WeightMode { thresholded, threshold_free, momentum };

struct DefenseVariant {
    Topology topology = Topology::parallel_3;
    std::size_t m_synthetic = 0;
    TrimConfig trim;
    WeightMode weight_mode = WeightMode::thresholded;
};

struct FilterResult {
    std::vector<std::size_t> indices;
    bool fell_back = false;
};

struct ClipResult {
    ParamVector theta;
    double p1 = 0.0;
};

struct FusedResult {
    ParamVector theta;
    double p2 = 0.0;
};

// Which branch of the thresholded rule fired and the betas before
// normalization.
struct ThresholdStep {
    int branch = 0;  // 1, 2 or 3
    std::array<double, 3> raw{};
};

struct DefenseOutcome {
    ParamVector global;
    AggWeights weights;
    DefenseSignals signals;
    FilterResult benign;
    std::size_t best = 0;  // i*, as an index into `updates`
};

namespace adabfl {

std::string_view to_string(Topology t);
std::string_view to_string(WeightMode m);
std::string_view to_string(LambdaSchedule s);
Topology parse_topology(std::string_view name);
WeightMode parse_weight_mode(std::string_view name);
LambdaSchedule parse_lambda_schedule(std::string_view name);

/// Client i passes when ||x_i - mean_{j!=i} x_j|| <= tolerance(t) *
/// ||mean_{j!=i} x_j + x_i||. If fewer than 2 * per_side + 1 pass, every
/// index is returned and fell_back is set.
FilterResult filter_benign(std::span<const ParamVector> updates, const FilterConfig& cfg, std::uint64_t t,
                           TrimConfig trim = {});

// theta = trimmed mean, p1 = ||theta - mean|| / d.
ClipResult clip_and_signal(std::span<const ParamVector> benign, TrimConfig trim);

std::vector<double> trust_scores(std::span<const ParamVector> benign);

// argmax, ties toward the smallest index.
std::size_t select_best(std::span<const double> scores);

/// theta = trimmed mean of benign plus m copies of benign[i_star];
/// p2 = mean over benign of ||x_i - theta||.
FusedResult derive_fused(std::span<const ParamVector> benign, std::size_t i_star, std::size_t m, TrimConfig trim);

ThresholdStep thresholded_step(const AggWeights& w, DefenseSignals s);
AggWeights update_weights_thresholded(const AggWeights& w, DefenseSignals s);

// (1, p1, 1/(p2+eps)) / (1 + p1 + 1/(p2+eps))
std::array<double, 3> threshold_free_betas(DefenseSignals s, double eps);
AggWeights update_weights_threshold_free(const AggWeights& w, DefenseSignals s);

// rho <- alpha * rho + (1 - alpha) * p, then the thresholded rule.
AggWeights momentum_thresholds(const AggWeights& w, DefenseSignals s);

AggWeights update_weights(WeightMode mode, const AggWeights& w, DefenseSignals s);

ParamVector aggregate_parallel(std::span<const ParamVector> benign, std::span<const double> theta_tilde,
                               std::span<const double> theta_bar, const AggWeights& w);

DefenseOutcome defend(std::span<const ParamVector> updates, const DefenseVariant& variant, const FilterConfig& filter,
                      const AggWeights& w, std::uint64_t t);

}  // namespace adabfl
}  // namespace bfl
