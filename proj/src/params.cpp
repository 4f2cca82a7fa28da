#include "bflsim/params.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bflsim/errors.hpp"

namespace bfl::params {

namespace {

void check_same_length(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("length mismatch: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
}

void require_population(std::span<const ParamVector> set, std::size_t minimum, const char* op) {
    if (set.size() < minimum) {
        throw InsufficientPopulationError(std::string(op) + ": need at least " + std::to_string(minimum) +
                                          " vectors, got " + std::to_string(set.size()));
    }
}

// Gathers coordinate k across the set into `column` (reused between calls)
// and sorts it.
void sorted_column(std::span<const ParamVector> set, std::size_t k, std::vector<double>& column) {
    column.resize(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        column[i] = set[i][k];
    }
    std::sort(column.begin(), column.end());
}

void require_finite_set(std::span<const ParamVector> set) {
    for (const auto& v : set) {
        require_finite(v);
    }
}

}  // namespace

void require_finite(std::span<const double> v, const char* what) {
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!std::isfinite(v[k])) {
            throw NumericError(std::string(what) + " has a non-finite entry at index " + std::to_string(k));
        }
    }
}

std::size_t common_dimension(std::span<const ParamVector> set) {
    if (set.empty()) {
        return 0;
    }
    const std::size_t d = set.front().size();
    for (const auto& v : set) {
        if (v.size() != d) {
            throw DimensionError("vectors in one set must share a length: " + std::to_string(d) + " vs " +
                                 std::to_string(v.size()));
        }
    }
    return d;
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    check_same_length(a, b);
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return s;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

ParamVector mean(std::span<const ParamVector> set) {
    require_population(set, 1, "mean");
    const std::size_t d = common_dimension(set);
    require_finite_set(set);
    ParamVector out(d, 0.0);
    for (const auto& v : set) {
        for (std::size_t k = 0; k < d; ++k) {
            out[k] += v[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(set.size());
    for (auto& x : out) {
        x *= inv;
    }
    return out;
}

ParamVector coordinate_trimmed_mean(std::span<const ParamVector> set, TrimConfig trim) {
    require_population(set, 2 * trim.per_side + 1, "coordinate_trimmed_mean");
    const std::size_t d = common_dimension(set);
    require_finite_set(set);

    const std::size_t n = set.size();
    const std::size_t lo = trim.per_side;
    const std::size_t hi = n - trim.per_side;
    const double inv = 1.0 / static_cast<double>(hi - lo);

    ParamVector out(d);
    std::vector<double> column;
    for (std::size_t k = 0; k < d; ++k) {
        sorted_column(set, k, column);
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            s += column[i];
        }
        out[k] = s * inv;
    }
    return out;
}

ParamVector coordinate_median(std::span<const ParamVector> set) {
    require_population(set, 1, "coordinate_median");
    const std::size_t d = common_dimension(set);
    require_finite_set(set);

    const std::size_t n = set.size();
    ParamVector out(d);
    std::vector<double> column;
    for (std::size_t k = 0; k < d; ++k) {
        sorted_column(set, k, column);
        out[k] = (n % 2 == 1) ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
    }
    return out;
}

std::pair<ParamVector, ParamVector> coordinate_extremes(std::span<const ParamVector> set) {
    require_population(set, 1, "coordinate_extremes");
    common_dimension(set);
    require_finite_set(set);

    ParamVector hi = set.front();
    ParamVector lo = set.front();
    for (const auto& v : set.subspan(1)) {
        for (std::size_t k = 0; k < v.size(); ++k) {
            hi[k] = std::max(hi[k], v[k]);
            lo[k] = std::min(lo[k], v[k]);
        }
    }
    return {std::move(hi), std::move(lo)};
}

std::vector<ParamVector> winsorize(std::span<const ParamVector> set, TrimConfig trim) {
    require_population(set, 2 * trim.per_side + 1, "winsorize");
    const std::size_t d = common_dimension(set);
    require_finite_set(set);

    std::vector<ParamVector> out(set.begin(), set.end());
    if (trim.per_side == 0) {
        return out;
    }
    const std::size_t n = set.size();
    std::vector<double> column;
    for (std::size_t k = 0; k < d; ++k) {
        sorted_column(set, k, column);
        const double floor_value = column[trim.per_side];
        const double ceil_value = column[n - 1 - trim.per_side];
        for (auto& v : out) {
            v[k] = std::clamp(v[k], floor_value, ceil_value);
        }
    }
    return out;
}

ParamVector linear_combination(std::span<const double> weights, std::span<const ParamVector> vectors) {
    if (weights.size() != vectors.size()) {
        throw DimensionError("linear_combination: " + std::to_string(weights.size()) + " weights for " +
                             std::to_string(vectors.size()) + " vectors");
    }
    if (vectors.empty()) {
        throw DimensionError("linear_combination: no vectors");
    }
    const std::size_t d = common_dimension(vectors);
    ParamVector out(d, 0.0);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        const double w = weights[i];
        for (std::size_t k = 0; k < d; ++k) {
            out[k] += w * vectors[i][k];
        }
    }
    return out;
}

}  // namespace bfl::params
