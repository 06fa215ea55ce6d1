#pragma once

#include <string>
#include <vector>

#include "lyapframe/ode.hpp"
#include "lyapframe/vector_field.hpp"

namespace lyapframe {

/// Samples of the base flow phi_t(x0).
struct TrajectoryTape {
    std::vector<double> times;
    std::vector<Vec> points;

    std::size_t size() const { return times.size(); }
    const Vec& back() const { return points.back(); }
};

/// Integrates x' = S(x) over [t0, t1]; t1 < t0 integrates backwards.
/// Throws BlowUpError once |x| exceeds cfg.blowup_bound.
TrajectoryTape integrate_flow(const VectorFieldSpec& spec, const Vec& x0, double t0, double t1,
                              const SolverConfig& cfg);

struct VariationalResult {
    TrajectoryTape trajectory;
    /// V(t) = Phi_t V0 at each trajectory sample.
    std::vector<Mat> tangents;
    /// Rank-collapse notices (the frame method exists to avoid these).
    std::vector<std::string> warnings;
};

/// Integrates x' = S(x) coupled with V' = DS(x) V.
VariationalResult integrate_variational(const VectorFieldSpec& spec, const Vec& x0, const Mat& v0, double t0,
                                        double t1, const SolverConfig& cfg);

/// Throws BlowUpError if x is non-finite or beyond the bound.
void check_blowup(const Eigen::Ref<const Vec>& x, double t, double bound);

} // namespace lyapframe
