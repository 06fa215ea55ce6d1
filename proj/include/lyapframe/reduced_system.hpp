#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lyapframe/ode.hpp"
#include "lyapframe/qual_tape.hpp"

namespace lyapframe {

/// Where a reduced system came from.
struct Provenance {
    std::string field;
    Vec x0;
    unsigned long long frame_seed = 0;
    std::vector<int> selected;
    std::string frame_order;
    /// Couplings are read off the frame that was actually integrated.
    std::string coupling_source = "evolved_frame";
};

nlohmann::json to_json(const Provenance& p);

/// The reduced standard linear system dy/dt = y A(t), y a row vector, with
/// A(t) lower triangular: a_kk is the growth rate of the k-th selected frame
/// direction and a_jk (j > k) the coupling between selected directions.
/// A is sampled on `times` and linearly interpolated; no extrapolation.
struct ReducedSystemTape {
    std::vector<double> times;
    std::vector<Mat> entries;
    Provenance source;

    int dim() const { return entries.empty() ? 0 : static_cast<int>(entries.front().rows()); }
    double start() const { return times.front(); }
    double end() const { return times.back(); }
    /// A(t), linearly interpolated. Throws CoverageError outside the tape.
    Mat at(double t) const;
    double max_abs_entry() const;
};

/// Builds A from the qualitative tape restricted to `selected` frame
/// directions (0-based, distinct, in the order they become rows of A).
ReducedSystemTape build_reduced_system(const QualTape& tape, const std::vector<int>& selected,
                                       Provenance source = {});

enum class SolveMethod { triangular_explicit, generic_ode };
std::string to_string(SolveMethod m);

/// Row-vector solution y(t) = exp(log_scale) * scaled(t) on the tape grid.
///
/// Once |y| leaves [1e-100, 1e100] the stored vector is rescaled and the
/// factor moved into log_scale, so growth over long horizons stays finite.
struct ReducedSolution {
    std::vector<double> times;
    std::vector<Vec> y;
    std::vector<double> log_scale;
    Vec v0;
    SolveMethod method = SolveMethod::triangular_explicit;

    /// log |y(times[i])|, -inf for the zero solution.
    double log_norm(std::size_t i) const;
    /// Unscaled y (may overflow for long runs).
    Vec value(std::size_t i) const;
    /// (1/t) log |y(t)| at the final sample, t measured from the start.
    double final_exponent() const;
};

/// Back-substitution from index l down to 1: each component solves a scalar
/// linear ODE y_j' = a_jj y_j + sum_{i>j} y_i a_ij by an integrating factor.
/// Each tape interval is split into `substeps` pieces (the diagonal integral
/// is exact for piecewise-linear A; the forcing uses the trapezoid rule).
ReducedSolution solve_triangular(const ReducedSystemTape& sys, const Vec& v, double duration, int substeps = 16);

/// Runge-Kutta integration of dy/dt = y A(t) with A linearly interpolated.
ReducedSolution solve_generic(const ReducedSystemTape& sys, const Vec& v, double duration, const SolverConfig& cfg);

/// (1/T) log |y(T, e_i)| for every coordinate vector, via solve_triangular.
Vec exponents_of_reduced(const ReducedSystemTape& sys, double duration);

/// Max over the common grid of |y_a - y_b|_inf / |y_b|_inf.
double max_relative_deviation(const ReducedSolution& a, const ReducedSolution& b);

/// CSV `t,a_11,a_21,a_22,a_31,...` (lower triangle, row-major).
void write_reduced_csv(std::ostream& os, const ReducedSystemTape& sys);
ReducedSystemTape read_reduced_csv(std::istream& is);
/// Header with provenance, dimension and grid description.
nlohmann::json reduced_header_json(const ReducedSystemTape& sys);

} // namespace lyapframe
