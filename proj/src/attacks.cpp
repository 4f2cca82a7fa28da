#include "bflsim/attacks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "bflsim/aggregators.hpp"
#include "bflsim/errors.hpp"
#include "bflsim/rng.hpp"

namespace bfl {

namespace {

constexpr std::array<std::pair<std::string_view, AttackKind>, 8> kNames{{
    {"none", AttackKind::none},
    {"label_flip", AttackKind::label_flip},
    {"gaussian", AttackKind::gaussian},
    {"trim", AttackKind::trim},
    {"krum", AttackKind::krum},
    {"min_max", AttackKind::min_max},
    {"scaling", AttackKind::scaling},
    {"sybil", AttackKind::sybil},
}};

double sign(double x) {
    return static_cast<double>((x > 0.0) - (x < 0.0));
}

void require_benign(const AttackContext& ctx, std::size_t minimum, const char* op) {
    if (ctx.benign_updates.size() < minimum) {
        throw InsufficientPopulationError(std::string(op) + ": needs at least " + std::to_string(minimum) +
                                          " benign updates");
    }
}

}  // namespace

void AttackSpec::validate(std::size_t feature_dim, std::size_t num_classes) const {
    if (!(gaussian_variance > 0.0) || !std::isfinite(gaussian_variance)) {
        throw ConfigError("attack.gaussian_variance must be positive");
    }
    if (!(scale_factor >= 1.0) || !std::isfinite(scale_factor)) {
        throw ConfigError("attack.scale_factor must be >= 1");
    }
    if (!(trim_reach >= 0.0) || !std::isfinite(trim_reach)) {
        throw ConfigError("attack.trim_reach must be non-negative");
    }
    if (kind == AttackKind::scaling) {
        if (trigger_width >= feature_dim) {
            throw ConfigError("attack.trigger_width must be smaller than feature_dim");
        }
        if (target_class >= num_classes) {
            throw ConfigError("attack.target_class outside the class range");
        }
    }
}

std::size_t AttackContext::dimension() const {
    if (benign_updates.empty()) {
        throw InsufficientPopulationError("attack context has no benign updates");
    }
    const std::size_t d = params::common_dimension(benign_updates);
    if (previous_global.size() != d) {
        throw DimensionError("previous global model length differs from update length");
    }
    return d;
}

namespace attacks {

std::string_view to_string(AttackKind kind) {
    for (const auto& [name, k] : kNames) {
        if (k == kind) {
            return name;
        }
    }
    return "unknown";
}

AttackKind parse_attack_kind(std::string_view name) {
    for (const auto& [n, k] : kNames) {
        if (n == name) {
            return k;
        }
    }
    throw ConfigError("unknown attack '" + std::string(name) + "'");
}

bool replaces_training(AttackKind kind) {
    switch (kind) {
        case AttackKind::gaussian:
        case AttackKind::trim:
        case AttackKind::krum:
        case AttackKind::min_max:
        case AttackKind::sybil:
            return true;
        default:
            return false;
    }
}

std::vector<ParamVector> gaussian_attack(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec& spec) {
    const std::size_t d = ctx.dimension();
    auto engine = rng::make_engine(spec.seed, rng::Stream::attack, {ctx.round});
    std::normal_distribution<double> normal(0.0, std::sqrt(spec.gaussian_variance));
    std::vector<ParamVector> out(num_malicious, ParamVector(d));
    for (auto& v : out) {
        for (auto& x : v) {
            x = normal(engine);
        }
    }
    return out;
}

std::vector<ParamVector> sybil_attack(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec& spec) {
    if (num_malicious == 0) {
        return {};
    }
    auto shared = gaussian_attack(1, ctx, spec);
    return std::vector<ParamVector>(num_malicious, shared.front());
}

std::vector<ParamVector> trim_attack(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec& spec) {
    require_benign(ctx, 2, "trim_attack");
    const std::size_t d = ctx.dimension();
    const ParamVector mu = params::mean(ctx.benign_updates);
    const auto [hi, lo] = params::coordinate_extremes(ctx.benign_updates);

    ParamVector crafted(d);
    for (std::size_t k = 0; k < d; ++k) {
        const double drift = sign(mu[k] - ctx.previous_global[k]);
        const double range = hi[k] - lo[k];
        if (drift > 0.0) {
            crafted[k] = lo[k] - spec.trim_reach * range;
        } else if (drift < 0.0) {
            crafted[k] = hi[k] + spec.trim_reach * range;
        } else {
            crafted[k] = mu[k];
        }
    }
    return std::vector<ParamVector>(num_malicious, crafted);
}

KrumSearch krum_attack_search(std::size_t num_malicious, const AttackContext& ctx) {
    const std::size_t d = ctx.dimension();
    const std::size_t n_benign = ctx.benign_updates.size();
    const ParamVector mu = params::mean(ctx.benign_updates);

    ParamVector direction(d);
    for (std::size_t k = 0; k < d; ++k) {
        direction[k] = sign(mu[k] - ctx.previous_global[k]);
    }

    std::vector<ParamVector> pool(ctx.benign_updates.begin(), ctx.benign_updates.end());
    pool.resize(n_benign + num_malicious);

    KrumSearch out;
    double lambda = 1.0;
    while (true) {
        ParamVector candidate(d);
        for (std::size_t k = 0; k < d; ++k) {
            candidate[k] = ctx.previous_global[k] - lambda * direction[k];
        }
        std::fill(pool.begin() + static_cast<std::ptrdiff_t>(n_benign), pool.end(), candidate);
        out.vector = std::move(candidate);
        out.lambda = lambda;
        if (num_malicious > 0 && agg::krum_select(pool, num_malicious) >= n_benign) {
            out.selected = true;
            return out;
        }
        lambda *= 0.5;
        if (lambda < 1e-5) {
            return out;
        }
    }
}

std::vector<ParamVector> krum_attack(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec&) {
    if (num_malicious == 0) {
        return {};
    }
    return std::vector<ParamVector>(num_malicious, krum_attack_search(num_malicious, ctx).vector);
}

std::vector<ParamVector> min_max_attack(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec&) {
    require_benign(ctx, 2, "min_max_attack");
    const std::size_t d = ctx.dimension();
    const auto& benign = ctx.benign_updates;
    const ParamVector mu = params::mean(benign);

    ParamVector direction(d, 0.0);
    if (const double norm = params::l2_norm(mu); norm > 0.0) {
        for (std::size_t k = 0; k < d; ++k) {
            direction[k] = -mu[k] / norm;
        }
    } else {
        direction[0] = 1.0;
    }

    double budget = 0.0;
    for (std::size_t i = 0; i < benign.size(); ++i) {
        for (std::size_t j = i + 1; j < benign.size(); ++j) {
            budget = std::max(budget, params::l2_distance(benign[i], benign[j]));
        }
    }

    ParamVector candidate(d);
    auto place = [&](double gamma) {
        for (std::size_t k = 0; k < d; ++k) {
            candidate[k] = mu[k] + gamma * direction[k];
        }
    };
    auto feasible = [&](double gamma) {
        place(gamma);
        return std::all_of(benign.begin(), benign.end(),
                           [&](const ParamVector& b) { return params::l2_distance(candidate, b) <= budget; });
    };

    double lo = 0.0;
    double hi = 10.0 * budget;
    for (int it = 0; it < 64; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (feasible(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    place(lo);
    return std::vector<ParamVector>(num_malicious, candidate);
}

ParamVector scaling_attack(std::span<const double> poisoned_local, const AttackContext& ctx, const AttackSpec& spec) {
    if (poisoned_local.size() != ctx.previous_global.size()) {
        throw DimensionError("scaling_attack: local model and global model lengths differ");
    }
    ParamVector out(poisoned_local.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = ctx.previous_global[k] + spec.scale_factor * (poisoned_local[k] - ctx.previous_global[k]);
    }
    return out;
}

std::vector<ParamVector> craft(std::size_t num_malicious, const AttackContext& ctx, const AttackSpec& spec) {
    switch (spec.kind) {
        case AttackKind::gaussian:
            return gaussian_attack(num_malicious, ctx, spec);
        case AttackKind::trim:
            return trim_attack(num_malicious, ctx, spec);
        case AttackKind::krum:
            return krum_attack(num_malicious, ctx, spec);
        case AttackKind::min_max:
            return min_max_attack(num_malicious, ctx, spec);
        case AttackKind::sybil:
            return sybil_attack(num_malicious, ctx, spec);
        default:
            throw ConfigError("attack '" + std::string(to_string(spec.kind)) + "' does not craft submissions");
    }
}

void stamp_trigger(std::span<double> features, const AttackSpec& spec) {
    const std::size_t w = std::min(spec.trigger_width, features.size());
    std::fill_n(features.begin(), w, 1.0);
}

Dataset poison_with_trigger(const Dataset& data, const AttackSpec& spec, std::uint64_t client_id) {
    Dataset out = data;
    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto engine = rng::make_engine(spec.seed, rng::Stream::trigger, {client_id});
    std::shuffle(order.begin(), order.end(), engine);
    const std::size_t poisoned = out.size() / 2;
    for (std::size_t i = 0; i < poisoned; ++i) {
        stamp_trigger(out.row(order[i]), spec);
        out.labels[order[i]] = spec.target_class;
    }
    return out;
}

}  // namespace attacks
}  // namespace bfl
