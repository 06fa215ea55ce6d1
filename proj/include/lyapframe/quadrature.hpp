#pragma once

#include <functional>
#include <span>

namespace lyapframe {

/// Exact integral over [a, b] of the piecewise-linear interpolant through
/// (times[i], value(i)). Requires times increasing and [a, b] inside the grid.
double integrate_piecewise_linear(std::span<const double> times, const std::function<double(std::size_t)>& value,
                                  double a, double b);

/// Locates the interval [times[i], times[i+1]] containing t; clamps to the ends.
std::size_t locate_interval(std::span<const double> times, double t);

} // namespace lyapframe
