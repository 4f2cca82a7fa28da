#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace bfl {

// Flat model parameter vector. Every vector in one round shares a length.
using ParamVector = std::vector<double>;

struct TrimConfig {
    std::size_t per_side = 0;
};

namespace params {

// Throws NumericError if any entry is NaN or infinite.
void require_finite(std::span<const double> v, const char* what = "parameter vector");

// Throws DimensionError unless every vector has the same length; returns it.
std::size_t common_dimension(std::span<const ParamVector> set);

double l2_norm(std::span<const double> v);
double l2_distance(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

// Arithmetic mean; summation in set order.
ParamVector mean(std::span<const ParamVector> set);

/// Per coordinate: sort, drop `per_side` values from each end, average the
/// rest. Requires set.size() > 2 * per_side.
ParamVector coordinate_trimmed_mean(std::span<const ParamVector> set, TrimConfig trim);

/// Per-coordinate median. Even counts use the midpoint of the two central
/// order statistics.
ParamVector coordinate_median(std::span<const ParamVector> set);

/// Returns (coordinate-wise max, coordinate-wise min).
std::pair<ParamVector, ParamVector> coordinate_extremes(std::span<const ParamVector> set);

/// Clamp every coordinate into [x_(per_side+1), x_(n-per_side)] of that
/// coordinate. Output keeps the input cardinality and order.
std::vector<ParamVector> winsorize(std::span<const ParamVector> set, TrimConfig trim);

/// sum_i weights[i] * vectors[i]
ParamVector linear_combination(std::span<const double> weights, std::span<const ParamVector> vectors);

}  // namespace params
}  // namespace bfl
