#include "bflsim/defense.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bflsim/errors.hpp"

namespace bfl {

namespace {

template <typename T, std::size_t N>
using NameTable = std::array<std::pair<std::string_view, T>, N>;

constexpr NameTable<Topology, 3> kTopologies{{
    {"parallel_3", Topology::parallel_3},
    {"serial_1", Topology::serial_1},
    {"serial_2", Topology::serial_2},
}};
constexpr NameTable<WeightMode, 3> kModes{{
    {"thresholded", WeightMode::thresholded},
    {"threshold_free", WeightMode::threshold_free},
    {"momentum", WeightMode::momentum},
}};
constexpr NameTable<LambdaSchedule, 2> kSchedules{{
    {"constant_inv_T", LambdaSchedule::constant_inv_T},
    {"log_base", LambdaSchedule::log_base},
}};

template <typename T, std::size_t N>
std::string_view name_of(const NameTable<T, N>& table, T value) {
    for (const auto& [name, v] : table) {
        if (v == value) {
            return name;
        }
    }
    return "unknown";
}

template <typename T, std::size_t N>
T parse_name(const NameTable<T, N>& table, std::string_view name, const char* what) {
    for (const auto& [n, v] : table) {
        if (n == name) {
            return v;
        }
    }
    throw ConfigError(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

bool finite_in(double x, double lo, double hi) {
    return std::isfinite(x) && x >= lo && x <= hi;
}

std::vector<ParamVector> gather(std::span<const ParamVector> updates, std::span<const std::size_t> idx) {
    std::vector<ParamVector> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        out.push_back(updates[i]);
    }
    return out;
}

AggWeights normalized(AggWeights w, const std::array<double, 3>& raw) {
    for (double b : raw) {
        if (!std::isfinite(b) || b < 0.0) {
            throw DefenseConfigError("weight update produced a negative or non-finite beta");
        }
    }
    const double sum = raw[0] + raw[1] + raw[2];
    if (!(sum > 0.0)) {
        throw DefenseConfigError("beta sum is not positive after the weight update");
    }
    w.beta1 = raw[0] / sum;
    w.beta2 = raw[1] / sum;
    w.beta3 = raw[2] / sum;
    return w;
}

}  // namespace

double FilterConfig::lambda(std::uint64_t t) const {
    switch (schedule) {
        case LambdaSchedule::constant_inv_T:
            return 1.0 / static_cast<double>(total_rounds);
        case LambdaSchedule::log_base:
            return std::log(static_cast<double>(std::max<std::uint64_t>(t, 1))) / std::log(log_base);
    }
    return 0.0;
}

double FilterConfig::tolerance(std::uint64_t t) const {
    return 0.5 * gamma * std::exp(-kappa * lambda(t));
}

void FilterConfig::validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw DefenseConfigError("filter gamma must be positive");
    }
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
        throw DefenseConfigError("filter kappa must be non-negative");
    }
    if (total_rounds == 0) {
        throw DefenseConfigError("filter total_rounds must be positive");
    }
    if (schedule == LambdaSchedule::log_base && !(log_base > 1.0 && std::isfinite(log_base))) {
        throw DefenseConfigError("filter log_base must exceed 1");
    }
}

void AggWeights::validate() const {
    for (double b : {beta1, beta2, beta3}) {
        if (!finite_in(b, 0.0, 1.0)) {
            throw DefenseConfigError("betas must lie in [0, 1]");
        }
    }
    if (std::abs(beta1 + beta2 + beta3 - 1.0) > 1e-9) {
        throw DefenseConfigError("betas must sum to 1");
    }
    for (double b : {beta1_min, beta2_max, beta3_min, beta1_base}) {
        if (!finite_in(b, 0.0, 1.0)) {
            throw DefenseConfigError("beta bounds must lie in [0, 1]");
        }
    }
    for (double v : {delta_high, delta_low, rho1, rho2, kappa_w}) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw DefenseConfigError("deltas, thresholds and kappa_w must be positive");
        }
    }
    if (!finite_in(alpha, 0.0, 1.0)) {
        throw DefenseConfigError("momentum alpha must lie in [0, 1]");
    }
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw DefenseConfigError("epsilon must be non-negative");
    }
}

namespace adabfl {

std::string_view to_string(Topology t) { return name_of(kTopologies, t); }
std::string_view to_string(WeightMode m) { return name_of(kModes, m); }
std::string_view to_string(LambdaSchedule s) { return name_of(kSchedules, s); }
Topology parse_topology(std::string_view name) { return parse_name(kTopologies, name, "defense variant"); }
WeightMode parse_weight_mode(std::string_view name) { return parse_name(kModes, name, "weight mode"); }
LambdaSchedule parse_lambda_schedule(std::string_view name) {
    return parse_name(kSchedules, name, "lambda schedule");
}

FilterResult filter_benign(std::span<const ParamVector> updates, const FilterConfig& cfg, std::uint64_t t,
                           TrimConfig trim) {
    const std::size_t n = updates.size();
    if (n < 2) {
        throw InsufficientPopulationError("filter_benign: needs at least 2 updates");
    }
    const std::size_t d = params::common_dimension(updates);
    const double tol = cfg.tolerance(t);
    const double inv = 1.0 / static_cast<double>(n - 1);

    FilterResult out;
    ParamVector others(d);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(others.begin(), others.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                continue;
            }
            for (std::size_t k = 0; k < d; ++k) {
                others[k] += updates[j][k];
            }
        }
        double lhs = 0.0;
        double rhs = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double m = others[k] * inv;
            const double diff = updates[i][k] - m;
            const double sum = updates[i][k] + m;
            lhs += diff * diff;
            rhs += sum * sum;
        }
        if (std::sqrt(lhs) <= tol * std::sqrt(rhs)) {
            out.indices.push_back(i);
        }
    }
    if (out.indices.size() < 2 * trim.per_side + 1) {
        out.indices.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            out.indices[i] = i;
        }
        out.fell_back = true;
    }
    return out;
}

ClipResult clip_and_signal(std::span<const ParamVector> benign, TrimConfig trim) {
    ClipResult out;
    out.theta = params::coordinate_trimmed_mean(benign, trim);
    const ParamVector mu = params::mean(benign);
    out.p1 = params::l2_distance(out.theta, mu) / static_cast<double>(mu.size());
    return out;
}

std::vector<double> trust_scores(std::span<const ParamVector> benign) {
    if (benign.empty()) {
        throw InsufficientPopulationError("trust_scores: empty benign set");
    }
    const auto [hi, lo] = params::coordinate_extremes(benign);
    std::vector<double> scores(benign.size());
    for (std::size_t i = 0; i < benign.size(); ++i) {
        scores[i] = std::min(params::l2_distance(benign[i], hi), params::l2_distance(benign[i], lo));
    }
    return scores;
}

std::size_t select_best(std::span<const double> scores) {
    if (scores.empty()) {
        throw InsufficientPopulationError("select_best: no scores");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) {
            best = i;
        }
    }
    return best;
}

FusedResult derive_fused(std::span<const ParamVector> benign, std::size_t i_star, std::size_t m, TrimConfig trim) {
    if (i_star >= benign.size()) {
        throw DimensionError("derive_fused: i_star outside the benign set");
    }
    std::vector<ParamVector> augmented(benign.begin(), benign.end());
    augmented.insert(augmented.end(), m, benign[i_star]);

    FusedResult out;
    out.theta = params::coordinate_trimmed_mean(augmented, trim);
    double total = 0.0;
    for (const auto& x : benign) {
        total += params::l2_distance(x, out.theta);
    }
    out.p2 = total / static_cast<double>(benign.size());
    return out;
}

ThresholdStep thresholded_step(const AggWeights& w, DefenseSignals s) {
    ThresholdStep step;
    step.raw = w.betas();
    auto& [b1, b2, b3] = step.raw;
    const bool second = w.p2_branch_ge ? s.p2 >= w.rho2 : s.p2 < w.rho2;
    if (s.p1 >= w.rho1) {
        step.branch = 1;
        b2 = std::min(b2 + w.delta_high, w.beta2_max);
        b1 = std::max(b1 - w.delta_high, w.beta1_min);
    } else if (second) {
        step.branch = 2;
        b3 = std::max(b3 - w.delta_low, w.beta3_min);
        b2 = std::min(b2 + w.delta_high, w.beta2_max);
    } else {
        step.branch = 3;
        b1 = w.beta1_base + w.kappa_w * (1.0 - s.p1);
    }
    return step;
}

AggWeights update_weights_thresholded(const AggWeights& w, DefenseSignals s) {
    return normalized(w, thresholded_step(w, s).raw);
}

std::array<double, 3> threshold_free_betas(DefenseSignals s, double eps) {
    const double denom = s.p2 + eps;
    if (!(denom > 0.0)) {
        throw DefenseConfigError("threshold-free weights need p2 + epsilon > 0");
    }
    const double q = 1.0 / denom;
    const double base = 1.0 + s.p1 + q;
    return {1.0 / base, s.p1 / base, q / base};
}

AggWeights update_weights_threshold_free(const AggWeights& w, DefenseSignals s) {
    const auto b = threshold_free_betas(s, w.epsilon);
    AggWeights out = w;
    out.beta1 = b[0];
    out.beta2 = b[1];
    out.beta3 = b[2];
    return out;
}

AggWeights momentum_thresholds(const AggWeights& w, DefenseSignals s) {
    AggWeights moved = w;
    moved.rho1 = w.alpha * w.rho1 + (1.0 - w.alpha) * s.p1;
    moved.rho2 = w.alpha * w.rho2 + (1.0 - w.alpha) * s.p2;
    return update_weights_thresholded(moved, s);
}

AggWeights update_weights(WeightMode mode, const AggWeights& w, DefenseSignals s) {
    switch (mode) {
        case WeightMode::thresholded:
            return update_weights_thresholded(w, s);
        case WeightMode::threshold_free:
            return update_weights_threshold_free(w, s);
        case WeightMode::momentum:
            return momentum_thresholds(w, s);
    }
    throw DefenseConfigError("unknown weight mode");
}

ParamVector aggregate_parallel(std::span<const ParamVector> benign, std::span<const double> theta_tilde,
                               std::span<const double> theta_bar, const AggWeights& w) {
    const ParamVector mu = params::mean(benign);
    if (theta_tilde.size() != mu.size() || theta_bar.size() != mu.size()) {
        throw DimensionError("aggregate_parallel: branch models differ in length");
    }
    ParamVector out(mu.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = w.beta1 * mu[k] + w.beta2 * theta_tilde[k] + w.beta3 * theta_bar[k];
    }
    return out;
}

DefenseOutcome defend(std::span<const ParamVector> updates, const DefenseVariant& variant, const FilterConfig& filter,
                      const AggWeights& w, std::uint64_t t) {
    DefenseOutcome out;
    out.benign = filter_benign(updates, filter, t, variant.trim);
    const auto& idx = out.benign.indices;
    const std::vector<ParamVector> set = gather(updates, idx);

    const ClipResult clip = clip_and_signal(set, variant.trim);
    out.signals.p1 = clip.p1;

    if (variant.topology == Topology::serial_1) {
        const auto clamped = params::winsorize(set, variant.trim);
        const std::size_t best = select_best(trust_scores(clamped));
        const FusedResult fused = derive_fused(clamped, best, variant.m_synthetic, variant.trim);
        out.best = idx[best];
        out.signals.p2 = fused.p2;
        out.global = fused.theta;
    } else {
        const std::size_t best = select_best(trust_scores(set));
        const FusedResult fused = derive_fused(set, best, variant.m_synthetic, variant.trim);
        out.best = idx[best];
        out.signals.p2 = fused.p2;
        if (variant.topology == Topology::serial_2) {
            out.global = fused.theta;
        } else {
            out.weights = update_weights(variant.weight_mode, w, out.signals);
            out.global = aggregate_parallel(set, clip.theta, fused.theta, out.weights);
            return out;
        }
    }
    out.weights = update_weights(variant.weight_mode, w, out.signals);
    return out;
}

}  // namespace adabfl
}  // namespace bfl
