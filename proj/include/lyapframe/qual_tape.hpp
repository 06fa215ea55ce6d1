#pragma once

#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

#include "lyapframe/flow.hpp"
#include "lyapframe/types.hpp"

namespace lyapframe {

/// Time-sampled qualitative data along one orbit: the diagonal growth rates
/// omega_k and the strictly-lower couplings r_jk (j > k) of the moving-frame
/// system, together with the base points they were evaluated at.
struct QualTape {
    int frame_count = 0;
    std::vector<double> times;
    std::vector<Vec> omega;
    std::vector<Mat> coupling;
    /// Operator 2-norm of DS(x(t)); empty for synthetic tapes.
    std::vector<double> jac_norm;
    /// Base points at the sample times; empty for synthetic tapes.
    TrajectoryTape base;

    std::size_t size() const { return times.size(); }
    double start() const { return times.front(); }
    double end() const { return times.back(); }

    /// 2 * max_t |DS(x(t))|_2, the bound every entry must respect.
    double entry_bound() const;
    /// Largest |omega| or |coupling| over the tape.
    double max_abs_entry() const;
    /// Per-direction time average of omega over [a, b] (piecewise linear).
    Vec omega_average(double a, double b) const;
    /// Integral of omega_k over [a, b].
    double omega_integral(int k, double a, double b) const;
};

/// CSV with header `t,omega_1..omega_l,r_21,r_31,r_32,...` (strict lower
/// triangle, row-major) and shortest round-trip decimals.
void write_qual_tape_csv(std::ostream& os, const QualTape& tape);
QualTape read_qual_tape_csv(std::istream& is);

using QualSampler = std::function<std::pair<Vec, Mat>(double t)>;

/// Tabulates omega(t) and coupling(t) on [t0, t1] at the given stride.
QualTape sampled_tape(int l, const QualSampler& sampler, double t0, double t1, double stride);

/// Constant omega and coupling on [t0, t1].
QualTape constant_tape(const Vec& omega, const Mat& coupling, double t0, double t1, double stride);

/// Scalar tape omega(t) = rate + amplitude * sin(frequency * t), for window
/// diagnostics and nonautonomous scalar experiments.
QualTape synthetic_scalar_tape(double rate, double amplitude, double frequency, double t0, double t1,
                               double stride);

} // namespace lyapframe
