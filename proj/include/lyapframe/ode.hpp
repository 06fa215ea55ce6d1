#pragma once

#include <functional>
#include <string>

#include "lyapframe/types.hpp"

namespace lyapframe {

enum class Method { fixed_rk4, adaptive_rk45 };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct SolverConfig {
    Method method = Method::fixed_rk4;
    double step = 1e-3;       // fixed mode
    double abs_tol = 1e-9;    // adaptive mode
    double rel_tol = 1e-9;
    double max_step = 0.1;
    double sample_stride = 0.01;
    double blowup_bound = 1e6;

    /// Throws ConfigError on violated invariants.
    void validate() const;

    /// Fixed-step RK4 with h = 1e-3 (bit-reproducible tapes).
    static SolverConfig frame_default();
    /// Dormand-Prince 5(4) with abs_tol = rel_tol = 1e-9.
    static SolverConfig oracle();
};

using OdeRhs = std::function<void(double t, const Vec& y, Vec& dydt)>;
/// Called after every accepted step; may project the state in place.
using StepHook = std::function<void(double t, Vec& y)>;
/// Called at t0, at every multiple of sample_stride, and at t1.
using SampleHook = std::function<void(double t, const Vec& y)>;

/// Integrates y' = rhs(t, y) from t0 to t1 (t1 < t0 runs backwards).
///
/// Steps are arranged so that every sample time is hit exactly. In fixed mode
/// the step is shrunk to divide sample_stride evenly, and time stamps are
/// computed as t0 + k*h rather than accumulated.
void integrate(const OdeRhs& rhs, Vec& y, double t0, double t1, const SolverConfig& cfg,
               const StepHook& after_step, const SampleHook& on_sample);

} // namespace lyapframe
