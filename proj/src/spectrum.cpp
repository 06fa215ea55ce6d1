#include "lyapframe/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lyapframe/csv.hpp"
#include "lyapframe/errors.hpp"
#include "lyapframe/quadrature.hpp"

namespace lyapframe {

namespace {

// log_zeta at time t, linear between recorded states (states increasing in t).
Vec ledger_at(const std::vector<OrthoFrameState>& states, double t)
{
    std::vector<double> times(states.size());
    std::transform(states.begin(), states.end(), times.begin(), [](const auto& s) { return s.t; });
    const std::size_t i = locate_interval(times, t);
    if (states.size() == 1) return states.front().log_zeta;
    const double w = std::clamp((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0);
    return (1.0 - w) * states[i].log_zeta + w * states[i + 1].log_zeta;
}

std::vector<int> descending_order(const Vec& v)
{
    std::vector<int> order(static_cast<std::size_t>(v.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return v(a) > v(b); });
    return order;
}

Vec permute(const Vec& v, const std::vector<int>& order)
{
    Vec out(v.size());
    for (std::size_t i = 0; i < order.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(order[i]);
    return out;
}

} // namespace

double default_epsilon_zero(const Vec& values)
{
    if (values.size() == 0) return 1e-3;
    return std::max(1e-3, 0.05 * (values.maxCoeff() - values.minCoeff()));
}

ExponentEstimate estimate_from_run(const FrameRun& run, double burn_in)
{
    if (run.states.size() < 2) throw Error("estimate_from_run: run has fewer than two samples");
    const double t0 = run.states.front().t;
    const double duration = run.states.back().t - t0;
    if (!(duration > burn_in) || burn_in < 0.0) throw ConfigError("estimate_spectrum: need T > burn_in >= 0");

    ExponentEstimate est;
    est.burn_in = burn_in;
    est.duration = duration;
    const Vec base = ledger_at(run.states, t0 + burn_in);
    auto estimate_at = [&](double t) { return Vec((ledger_at(run.states, t0 + t) - base) / (t - burn_in)); };

    est.direction_values = (run.states.back().log_zeta - base) / (duration - burn_in);
    est.order = descending_order(est.direction_values);
    est.values = permute(est.direction_values, est.order);

    // Doubling checkpoints; with no burn-in, halve down from T instead.
    std::vector<double> checkpoints;
    if (burn_in > 0.0) {
        for (double tj = 2.0 * burn_in; tj < duration * (1.0 - 1e-12); tj *= 2.0) checkpoints.push_back(tj);
    } else {
        for (int j = 10; j >= 1; --j) checkpoints.push_back(duration / std::pow(2.0, j));
    }
    checkpoints.push_back(duration);
    for (double tj : checkpoints) {
        if (!(tj > burn_in)) continue;
        Vec v = estimate_at(tj);
        std::sort(v.data(), v.data() + v.size(), std::greater<>());
        est.history.push_back({tj, std::move(v)});
    }

    est.epsilon_zero = default_epsilon_zero(est.values);
    for (Eigen::Index i = 0; i < est.values.size(); ++i)
        est.is_zero.push_back(std::abs(est.values(i)) <= est.epsilon_zero);
    return est;
}

ExponentEstimate estimate_spectrum(const VectorFieldSpec& spec, const Vec& x0, int count, double duration,
                                   double burn_in, const SolverConfig& cfg, unsigned long long seed,
                                   FrameFlowOptions opts)
{
    if (count < 1 || count > spec.dim) throw DimensionError("estimate_spectrum: frame count must be in 1..n");
    if (burn_in < 0.0) burn_in = 0.1 * duration;
    if (!(duration > burn_in)) throw ConfigError("estimate_spectrum: need T > burn_in >= 0");
    const Mat q0 = random_orthonormal_frame(spec.dim, count, seed);
    const FrameRun run = evolve_frame(spec, x0, q0, duration, cfg, opts);
    auto est = estimate_from_run(run, burn_in);
    if (!doubling_converged(est)) est.warnings.push_back("doubling checkpoints are not monotonically converging");
    return est;
}

bool doubling_converged(const ExponentEstimate& est, double slack)
{
    const auto& h = est.history;
    if (h.size() < 3) return true;
    std::vector<double> diffs;
    for (std::size_t i = h.size() - 3; i + 1 < h.size(); ++i)
        diffs.push_back((h[i + 1].values - h[i].values).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i + 1 < diffs.size(); ++i)
        if (diffs[i + 1] > diffs[i] + slack) return false;
    return true;
}

ZeroClassification classify_zero(const ExponentEstimate& est, double epsilon_zero)
{
    if (!(epsilon_zero > 0.0)) throw ConfigError("classify_zero: epsilon must be positive");
    if (est.history.size() >= 2) {
        const auto& a = est.history[est.history.size() - 2].values;
        const auto& b = est.history.back().values;
        const double gap = (a - b).cwiseAbs().maxCoeff();
        if (!(gap < 0.5 * epsilon_zero)) {
            std::ostringstream os;
            os << "classify_zero: estimate not converged (last checkpoints differ by " << gap << ", need < "
               << 0.5 * epsilon_zero << ")";
            throw ConvergenceError(os.str());
        }
    }
    ZeroClassification out;
    out.epsilon_zero = epsilon_zero;
    for (Eigen::Index i = 0; i < est.values.size(); ++i)
        if (std::abs(est.values(i)) > epsilon_zero) out.selected.push_back(static_cast<int>(i));
    out.nonzero_count = static_cast<int>(out.selected.size());
    for (std::size_t i = 1; i < out.selected.size(); ++i) {
        const double a = est.values(out.selected[i - 1]), b = est.values(out.selected[i]);
        if (std::abs(a - b) <= epsilon_zero) {
            std::ostringstream os;
            os << "nonzero exponents " << a << " and " << b << " are within epsilon " << epsilon_zero
               << "; spectrum may not be simple";
            out.warnings.push_back(os.str());
        }
    }
    return out;
}

double birkhoff_average(const std::vector<double>& times, const std::vector<double>& values, double duration)
{
    if (times.size() != values.size()) throw DimensionError("birkhoff_average: times and values differ in length");
    if (!(duration > 0.0)) throw ConfigError("birkhoff_average: T must be positive");
    const double a = times.front();
    return integrate_piecewise_linear(times, [&](std::size_t i) { return values[i]; }, a, a + duration) / duration;
}

double WindowDeviationStats::worst_aggregate(int l) const
{
    double worst = 0.0;
    for (const auto& agg : aggregate) worst = std::max(worst, agg.at(static_cast<std::size_t>(l - 1)));
    return worst;
}

std::vector<double> default_offsets()
{
    return {0.0, 1.0, 2.0, 4.0, 8.0};
}

WindowDeviationStats window_deviation_stats(const QualTape& tape, const Vec& targets, double window, int delta,
                                            const std::vector<double>& offsets, int l_max, double eta)
{
    const int l = tape.frame_count;
    if (targets.size() != l) throw DimensionError("window_deviation_stats: one target per frame direction required");
    if (delta != 1 && delta != -1) throw ConfigError("window_deviation_stats: delta must be +1 or -1");
    if (!(window > 0.0) || l_max < 1 || offsets.empty()) throw ConfigError("window_deviation_stats: bad window setup");

    // Coverage first, so the error names the whole request.
    const double slack = 1e-9 * std::max(1.0, tape.end() - tape.start());
    for (double s : offsets) {
        const double lo = delta > 0 ? s * window : (s - l_max) * window;
        const double hi = delta > 0 ? (s + l_max) * window : s * window;
        if (lo < tape.start() - slack || hi > tape.end() + slack) {
            std::ostringstream os;
            os << "window_deviation_stats: windows [" << lo << ", " << hi << "] exceed tape coverage ["
               << tape.start() << ", " << tape.end() << "]";
            throw CoverageError(os.str());
        }
    }

    WindowDeviationStats st;
    st.targets = targets;
    st.window = window;
    st.delta = delta;
    st.offsets = offsets;
    st.l_max = l_max;
    st.eta = eta;
    for (double s : offsets) {
        std::vector<Vec> hs;
        std::vector<double> hmax, agg;
        std::vector<bool> below;
        double running = 0.0;
        for (int tau = 0; tau < l_max; ++tau) {
            const double a = delta > 0 ? (s + tau) * window : (s - tau - 1) * window;
            const Vec avg = tape.omega_average(a, a + window);
            Vec h = (targets - avg).cwiseAbs();
            hmax.push_back(h.maxCoeff());
            hs.push_back(std::move(h));
            running += hmax.back();
            agg.push_back(running / (tau + 1));
            below.push_back(agg.back() < eta);
        }
        st.per_window.push_back(std::move(hs));
        st.per_window_max.push_back(std::move(hmax));
        st.aggregate.push_back(std::move(agg));
        st.below_eta.push_back(std::move(below));
    }
    return st;
}

WindowSearchResult find_window_threshold(const QualTape& tape, const Vec& targets, int delta,
                                         const std::vector<double>& offsets, int l, double eta, double start,
                                         double limit)
{
    if (!(start > 0.0) || !(limit >= start)) throw ConfigError("find_window_threshold: need 0 < start <= limit");
    WindowSearchResult res;
    for (double w = start; w <= limit * (1.0 + 1e-12); w *= 2.0) {
        WindowDeviationStats st;
        try {
            st = window_deviation_stats(tape, targets, w, delta, offsets, l, eta);
        } catch (const CoverageError& e) {
            res.stop_reason = std::string("tape coverage exhausted: ") + e.what();
            return res;
        }
        const double worst = st.worst_aggregate(l);
        res.trail.emplace_back(w, worst);
        if (worst < eta) {
            res.found = true;
            res.window = w;
            res.stop_reason = "threshold reached";
            return res;
        }
    }
    res.stop_reason = "window limit reached";
    return res;
}

nlohmann::json to_json(const ExponentEstimate& est)
{
    nlohmann::json j;
    j["values"] = std::vector<double>(est.values.data(), est.values.data() + est.values.size());
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& c : est.history) {
        std::vector<double> row{c.time};
        row.insert(row.end(), c.values.data(), c.values.data() + c.values.size());
        hist.push_back(row);
    }
    j["history"] = hist;
    j["burn_in"] = est.burn_in;
    j["T"] = est.duration;
    j["epsilon_zero"] = est.epsilon_zero;
    nlohmann::json cls = nlohmann::json::array();
    for (bool z : est.is_zero) cls.push_back(z ? "zero" : "nonzero");
    j["classification"] = cls;
    j["warnings"] = est.warnings;
    return j;
}

void write_window_stats_csv(std::ostream& os, const WindowDeviationStats& stats)
{
    const auto l = stats.targets.size();
    os << "window_index";
    for (Eigen::Index k = 1; k <= l; ++k) os << ",h_" << k;
    os << ",h_max\n";
    long index = 0;
    std::vector<double> row;
    for (std::size_t j = 0; j < stats.per_window.size(); ++j) {
        for (std::size_t tau = 0; tau < stats.per_window[j].size(); ++tau) {
            row.clear();
            row.push_back(static_cast<double>(index++));
            const auto& h = stats.per_window[j][tau];
            row.insert(row.end(), h.data(), h.data() + h.size());
            row.push_back(stats.per_window_max[j][tau]);
            write_csv_row(os, row);
        }
    }
}

} // namespace lyapframe
