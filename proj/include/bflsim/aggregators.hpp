#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bflsim/params.hpp"

namespace bfl {

enum class BaselineKind {
    fedavg,
    trim_mean,
    median,
    gau_trim,
    gau_median,
    foundation_mean,
    foundation_trim,
    foundation_median,
    krum,
};

struct BaselineRule {
    BaselineKind kind = BaselineKind::fedavg;
    // per_side doubles as the assumed malicious count for krum.
    TrimConfig trim;
    std::size_t synthetic_count = 0;
    std::uint64_t seed = 0;
};

namespace agg {

std::string_view to_string(BaselineKind kind);
BaselineKind parse_baseline_kind(std::string_view name);
bool is_baseline_name(std::string_view name);

ParamVector fedavg(std::span<const ParamVector> updates);

/// Index of the update with the smallest sum of squared distances to its
/// n - num_malicious - 2 nearest neighbours; ties go to the smallest index.
std::size_t krum_select(std::span<const ParamVector> updates, std::size_t num_malicious);

/// m vectors drawn coordinate-wise from N(mean_k, std_k^2) of the updates
/// (sample std, n - 1 denominator). Keyed by (seed, round).
std::vector<ParamVector> gaussian_synthetic(std::span<const ParamVector> updates, std::size_t m,
                                            std::uint64_t seed, std::uint64_t round);

// min(||g_i - g_max||, ||g_i - g_min||) with coordinate-wise extremes.
std::vector<double> extreme_distance_scores(std::span<const ParamVector> updates);

/// Copies of the m updates with the highest extreme-distance scores, in
/// descending score order (ties: smaller index first).
std::vector<ParamVector> foundation_synthetic(std::span<const ParamVector> updates, std::size_t m);

ParamVector aggregate_baseline(const BaselineRule& rule, std::span<const ParamVector> updates, std::uint64_t round);

}  // namespace agg
}  // namespace bfl
