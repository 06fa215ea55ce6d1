#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lyapframe/frame_flow.hpp"

namespace lyapframe {

struct ExponentCheckpoint {
    double time = 0.0;
    Vec values;  // sorted descending
};

/// Finite-time Lyapunov exponents from one frame run.
struct ExponentEstimate {
    /// (log zeta_k(T) - log zeta_k(burn_in)) / (T - burn_in), sorted descending.
    Vec values;
    /// The same averages in frame-direction order.
    Vec direction_values;
    /// values(i) == direction_values(order[i]).
    std::vector<int> order;
    /// Doubling checkpoints burn_in * 2^j, ending at T.
    std::vector<ExponentCheckpoint> history;
    double burn_in = 0.0;
    double duration = 0.0;
    double epsilon_zero = 0.0;
    /// Per entry of `values`: |value| <= epsilon_zero.
    std::vector<bool> is_zero;
    std::vector<std::string> warnings;
};

/// Scale-aware zero threshold: 0.05 * (max - min), floored at 1e-3.
double default_epsilon_zero(const Vec& values);

/// Evolves a seeded random orthonormal frame of `count` vectors from x0 over
/// [0, T] and averages the growth ledger over [burn_in, T]. A negative
/// burn_in selects the default of 10% of T.
ExponentEstimate estimate_spectrum(const VectorFieldSpec& spec, const Vec& x0, int count, double duration,
                                   double burn_in, const SolverConfig& cfg, unsigned long long seed,
                                   FrameFlowOptions opts = {});

/// Same estimate from an existing forward run starting at t = 0.
ExponentEstimate estimate_from_run(const FrameRun& run, double burn_in);

/// Hard monotonicity check of successive checkpoint differences over the
/// last three checkpoints (slack absorbs round-off once converged).
bool doubling_converged(const ExponentEstimate& est, double slack = 1e-12);

struct ZeroClassification {
    int nonzero_count = 0;
    /// Positions in ExponentEstimate::values (descending order).
    std::vector<int> selected;
    double epsilon_zero = 0.0;
    std::vector<std::string> warnings;
};

/// Splits the spectrum into zero and nonzero entries. Throws
/// ConvergenceError unless the last two checkpoints agree to epsilon/2.
/// Warns when two nonzero values are closer than epsilon (not simple).
ZeroClassification classify_zero(const ExponentEstimate& est, double epsilon_zero);

/// (1/T) * integral over [times[0], times[0] + T] by the trapezoid rule.
double birkhoff_average(const std::vector<double>& times, const std::vector<double>& values, double duration);

/// Window deviations h_k = |target_k - window average of omega_k| over
/// consecutive windows of length T starting at offset*T (delta = +1) or
/// ending there (delta = -1), and running means of max_k h_k.
struct WindowDeviationStats {
    Vec targets;
    double window = 0.0;
    int delta = 1;
    std::vector<double> offsets;
    int l_max = 0;
    double eta = 0.0;
    /// [offset][window] -> h_1..h_l
    std::vector<std::vector<Vec>> per_window;
    /// [offset][window] -> max_k h_k
    std::vector<std::vector<double>> per_window_max;
    /// [offset][l-1] -> mean of the first l maxima
    std::vector<std::vector<double>> aggregate;
    /// [offset][l-1] -> aggregate < eta
    std::vector<std::vector<bool>> below_eta;

    double worst_aggregate(int l) const;
};

std::vector<double> default_offsets();

WindowDeviationStats window_deviation_stats(const QualTape& tape, const Vec& targets, double window, int delta,
                                            const std::vector<double>& offsets, int l_max, double eta);

struct WindowSearchResult {
    bool found = false;
    double window = 0.0;
    /// (window length, worst aggregate over offsets) per attempt.
    std::vector<std::pair<double, double>> trail;
    std::string stop_reason;
};

/// Doubles the window length from `start` up to `limit` until the mean of
/// the first `l` window deviations drops below eta for every offset.
WindowSearchResult find_window_threshold(const QualTape& tape, const Vec& targets, int delta,
                                         const std::vector<double>& offsets, int l, double eta, double start = 1.0,
                                         double limit = 1024.0);

nlohmann::json to_json(const ExponentEstimate& est);
/// CSV `window_index,h_1..h_l,h_max`; window_index runs offset-major.
void write_window_stats_csv(std::ostream& os, const WindowDeviationStats& stats);

} // namespace lyapframe
