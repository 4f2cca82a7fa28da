#include "bflsim/aggregators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "bflsim/errors.hpp"
#include "bflsim/rng.hpp"

namespace bfl::agg {

namespace {

struct NamedKind {
    std::string_view name;
    BaselineKind kind;
};

constexpr std::array<NamedKind, 9> kNames{{
    {"fedavg", BaselineKind::fedavg},
    {"trim_mean", BaselineKind::trim_mean},
    {"median", BaselineKind::median},
    {"gau_trim", BaselineKind::gau_trim},
    {"gau_median", BaselineKind::gau_median},
    {"foundation_mean", BaselineKind::foundation_mean},
    {"foundation_trim", BaselineKind::foundation_trim},
    {"foundation_median", BaselineKind::foundation_median},
    {"krum", BaselineKind::krum},
}};

std::vector<ParamVector> with_appended(std::span<const ParamVector> updates, std::vector<ParamVector> extra) {
    std::vector<ParamVector> out(updates.begin(), updates.end());
    out.insert(out.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
    return out;
}

}  // namespace

std::string_view to_string(BaselineKind kind) {
    for (const auto& n : kNames) {
        if (n.kind == kind) {
            return n.name;
        }
    }
    return "unknown";
}

BaselineKind parse_baseline_kind(std::string_view name) {
    for (const auto& n : kNames) {
        if (n.name == name) {
            return n.kind;
        }
    }
    throw ConfigError("unknown aggregation rule '" + std::string(name) + "'");
}

bool is_baseline_name(std::string_view name) {
    return std::any_of(kNames.begin(), kNames.end(), [&](const NamedKind& n) { return n.name == name; });
}

ParamVector fedavg(std::span<const ParamVector> updates) {
    if (updates.empty()) {
        throw InsufficientPopulationError("fedavg: no updates");
    }
    return params::mean(updates);
}

std::size_t krum_select(std::span<const ParamVector> updates, std::size_t num_malicious) {
    const std::size_t n = updates.size();
    if (n < num_malicious + 3) {
        throw InsufficientPopulationError("krum_select: n - f - 2 must be >= 1 (n = " + std::to_string(n) +
                                          ", f = " + std::to_string(num_malicious) + ")");
    }
    params::common_dimension(updates);
    const std::size_t neighbours = n - num_malicious - 2;

    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d2 = params::squared_distance(updates[i], updates[j]);
            dist[i * n + j] = d2;
            dist[j * n + i] = d2;
        }
    }

    std::size_t best = 0;
    double best_score = 0.0;
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                row.push_back(dist[i * n + j]);
            }
        }
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbours), row.end());
        const double score = std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbours), 0.0);
        if (i == 0 || score < best_score) {
            best = i;
            best_score = score;
        }
    }
    return best;
}

std::vector<ParamVector> gaussian_synthetic(std::span<const ParamVector> updates, std::size_t m,
                                            std::uint64_t seed, std::uint64_t round) {
    if (updates.size() < 2) {
        throw InsufficientPopulationError("gaussian_synthetic: need at least 2 updates for a sample std");
    }
    if (m == 0) {
        return {};
    }
    const std::size_t d = params::common_dimension(updates);
    const ParamVector mu = params::mean(updates);
    ParamVector sigma(d, 0.0);
    for (const auto& u : updates) {
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = u[k] - mu[k];
            sigma[k] += diff * diff;
        }
    }
    for (auto& s : sigma) {
        s = std::sqrt(s / static_cast<double>(updates.size() - 1));
    }

    auto engine = rng::make_engine(seed, rng::Stream::aggregation, {round});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<ParamVector> out(m, ParamVector(d));
    for (auto& v : out) {
        for (std::size_t k = 0; k < d; ++k) {
            v[k] = mu[k] + sigma[k] * normal(engine);
        }
    }
    return out;
}

std::vector<double> extreme_distance_scores(std::span<const ParamVector> updates) {
    const auto [hi, lo] = params::coordinate_extremes(updates);
    std::vector<double> scores;
    scores.reserve(updates.size());
    for (const auto& u : updates) {
        scores.push_back(std::min(params::l2_distance(u, hi), params::l2_distance(u, lo)));
    }
    return scores;
}

std::vector<ParamVector> foundation_synthetic(std::span<const ParamVector> updates, std::size_t m) {
    if (m > updates.size()) {
        throw ConfigError("foundation_synthetic: m = " + std::to_string(m) + " exceeds population " +
                          std::to_string(updates.size()));
    }
    if (m == 0) {
        return {};
    }
    const auto scores = extreme_distance_scores(updates);
    std::vector<std::size_t> order(updates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<ParamVector> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        out.push_back(updates[order[i]]);
    }
    return out;
}

ParamVector aggregate_baseline(const BaselineRule& rule, std::span<const ParamVector> updates, std::uint64_t round) {
    switch (rule.kind) {
        case BaselineKind::fedavg:
            return fedavg(updates);
        case BaselineKind::trim_mean:
            return params::coordinate_trimmed_mean(updates, rule.trim);
        case BaselineKind::median:
            return params::coordinate_median(updates);
        case BaselineKind::gau_trim:
            return params::coordinate_trimmed_mean(
                with_appended(updates, gaussian_synthetic(updates, rule.synthetic_count, rule.seed, round)),
                rule.trim);
        case BaselineKind::gau_median:
            return params::coordinate_median(
                with_appended(updates, gaussian_synthetic(updates, rule.synthetic_count, rule.seed, round)));
        case BaselineKind::foundation_mean:
            return params::mean(with_appended(updates, foundation_synthetic(updates, rule.synthetic_count)));
        case BaselineKind::foundation_trim:
            return params::coordinate_trimmed_mean(
                with_appended(updates, foundation_synthetic(updates, rule.synthetic_count)), rule.trim);
        case BaselineKind::foundation_median:
            return params::coordinate_median(
                with_appended(updates, foundation_synthetic(updates, rule.synthetic_count)));
        case BaselineKind::krum:
            return updates[krum_select(updates, rule.trim.per_side)];
    }
    throw ConfigError("unhandled aggregation rule");
}

}  // namespace bfl::agg
