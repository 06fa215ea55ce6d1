#pragma once

#include <functional>

#include "lyapframe/reduced_system.hpp"

namespace lyapframe {

/// Forcing term f(t, y) of a row system, evaluated on the rescaled state:
/// given the stored vector u with y = exp(log_scale) * u, writes
/// exp(-log_scale) * f(t, y) to `out`.
using RowForcing = std::function<void(double t, const Vec& u, double log_scale, Eigen::Ref<Vec> out)>;

/// Runge-Kutta integration of dy/dt = y A(t) + f(t, y) on the tape grid.
/// An empty forcing gives the homogeneous system (solve_generic).
ReducedSolution solve_row_system(const ReducedSystemTape& sys, const Vec& v, double duration,
                                 const SolverConfig& cfg, const RowForcing& forcing);

} // namespace lyapframe
