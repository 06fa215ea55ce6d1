#include "lyapframe/reduced_system.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "lyapframe/csv.hpp"
#include "lyapframe/errors.hpp"
#include "lyapframe/quadrature.hpp"
#include "lyapframe/row_system.hpp"

namespace lyapframe {

namespace {

constexpr double kUpper = 1e100;
constexpr double kLower = 1e-100;
const double kLogStep = std::log(1e100);

double coverage_slack(const ReducedSystemTape& sys)
{
    return 1e-9 * std::max(1.0, std::abs(sys.end() - sys.start()));
}

void check_coverage(const ReducedSystemTape& sys, double duration)
{
    if (sys.times.size() < 2) throw CoverageError("reduced system tape needs at least two samples");
    if (duration < 0.0 || sys.start() + duration > sys.end() + coverage_slack(sys))
        throw CoverageError("requested horizon is outside the reduced system tape");
}

// Knots from start to start + duration; the last one may cut an interval.
std::vector<double> knots_for(const ReducedSystemTape& sys, double duration)
{
    const double stop = std::min(sys.start() + duration, sys.end());
    std::vector<double> knots;
    for (double t : sys.times) {
        if (t >= stop - coverage_slack(sys)) break;
        knots.push_back(t);
    }
    knots.push_back(stop);
    return knots;
}

// Keeps the stored vector inside [kLower, kUpper]; returns true if rescaled.
bool rescale(Vec& y, double& log_scale, bool allow_down)
{
    const double norm = y.cwiseAbs().maxCoeff();
    if (norm > kUpper) {
        y *= kLower;
        log_scale += kLogStep;
        return true;
    }
    if (allow_down && norm > 0.0 && norm < kLower) {
        y *= kUpper;
        log_scale -= kLogStep;
        return true;
    }
    return false;
}

} // namespace

nlohmann::json to_json(const Provenance& p)
{
    nlohmann::json j;
    j["field"] = p.field;
    j["x0"] = std::vector<double>(p.x0.data(), p.x0.data() + p.x0.size());
    j["frame_seed"] = p.frame_seed;
    j["selected"] = p.selected;
    j["frame_order"] = p.frame_order;
    j["coupling_source"] = p.coupling_source;
    return j;
}

Mat ReducedSystemTape::at(double t) const
{
    const double slack = 1e-9 * std::max(1.0, std::abs(end() - start()));
    if (times.empty() || t < start() - slack || t > end() + slack)
        throw CoverageError("ReducedSystemTape::at: time outside the tape (no extrapolation)");
    if (times.size() == 1) return entries.front();
    const std::size_t i = locate_interval(times, t);
    const double w = std::clamp((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0);
    return (1.0 - w) * entries[i] + w * entries[i + 1];
}

double ReducedSystemTape::max_abs_entry() const
{
    double m = 0.0;
    for (const auto& a : entries) m = std::max(m, a.cwiseAbs().maxCoeff());
    return m;
}

ReducedSystemTape build_reduced_system(const QualTape& tape, const std::vector<int>& selected, Provenance source)
{
    if (selected.empty()) throw IndexError("build_reduced_system: empty selection");
    std::vector<int> sel = selected;
    std::sort(sel.begin(), sel.end());
    for (std::size_t i = 0; i < sel.size(); ++i) {
        if (sel[i] < 0 || sel[i] >= tape.frame_count)
            throw IndexError("build_reduced_system: index " + std::to_string(sel[i]) + " outside the frame");
        if (i && sel[i] == sel[i - 1])
            throw IndexError("build_reduced_system: duplicate index " + std::to_string(sel[i]));
    }
    const auto l = static_cast<Eigen::Index>(sel.size());
    ReducedSystemTape sys;
    sys.times = tape.times;
    sys.entries.reserve(tape.size());
    for (std::size_t s = 0; s < tape.size(); ++s) {
        Mat a = Mat::Zero(l, l);
        for (Eigen::Index p = 0; p < l; ++p) {
            a(p, p) = tape.omega[s](sel[p]);
            for (Eigen::Index q = 0; q < p; ++q) a(p, q) = tape.coupling[s](sel[p], sel[q]);
        }
        sys.entries.push_back(std::move(a));
    }
    source.selected = sel;
    sys.source = std::move(source);
    return sys;
}

std::string to_string(SolveMethod m)
{
    return m == SolveMethod::triangular_explicit ? "triangular_explicit" : "generic_ode";
}

double ReducedSolution::log_norm(std::size_t i) const
{
    const double n = y[i].norm();
    if (n == 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(n) + log_scale[i];
}

Vec ReducedSolution::value(std::size_t i) const
{
    return y[i] * std::exp(log_scale[i]);
}

double ReducedSolution::final_exponent() const
{
    const double span = times.back() - times.front();
    if (span == 0.0) throw Error("ReducedSolution::final_exponent: zero-length solution");
    return log_norm(times.size() - 1) / span;
}

ReducedSolution solve_triangular(const ReducedSystemTape& sys, const Vec& v, double duration, int substeps)
{
    const int l = sys.dim();
    if (v.size() != l) throw DimensionError("solve_triangular: initial vector dimension mismatch");
    if (substeps < 1) throw ConfigError("solve_triangular: substeps must be >= 1");
    check_coverage(sys, duration);

    ReducedSolution sol;
    sol.method = SolveMethod::triangular_explicit;
    sol.v0 = v;
    const auto knots = knots_for(sys, duration);

    Vec y = v, y_next(l);
    double log_scale = 0.0;
    sol.times.push_back(knots.front());
    sol.y.push_back(y);
    sol.log_scale.push_back(0.0);

    for (std::size_t iv = 0; iv + 1 < knots.size(); ++iv) {
        const double ta = knots[iv], tb = knots[iv + 1];
        const std::size_t seg = locate_interval(sys.times, 0.5 * (ta + tb));
        const double t0 = sys.times[seg], t1 = sys.times[seg + 1];
        const Mat& a0 = sys.entries[seg];
        const Mat& a1 = sys.entries[seg + 1];
        auto a_at = [&](double t) {
            const double w = (t - t0) / (t1 - t0);
            return Mat((1.0 - w) * a0 + w * a1);
        };
        const double h = (tb - ta) / substeps;
        Mat a_lo = a_at(ta);
        for (int s = 0; s < substeps; ++s) {
            const double hi_t = (s + 1 == substeps) ? tb : ta + (s + 1) * h;
            const double hs = hi_t - (ta + s * h);
            const Mat a_hi = a_at(hi_t);
            for (int j = l - 1; j >= 0; --j) {
                const double growth = std::exp(0.5 * hs * (a_lo(j, j) + a_hi(j, j)));
                double g_lo = 0.0, g_hi = 0.0;
                for (int i = j + 1; i < l; ++i) {
                    g_lo += y(i) * a_lo(i, j);
                    g_hi += y_next(i) * a_hi(i, j);
                }
                y_next(j) = growth * y(j) + 0.5 * hs * (growth * g_lo + g_hi);
            }
            y = y_next;
            rescale(y, log_scale, true);
            a_lo = a_hi;
        }
        sol.times.push_back(tb);
        sol.y.push_back(y);
        sol.log_scale.push_back(log_scale);
    }
    return sol;
}

ReducedSolution solve_row_system(const ReducedSystemTape& sys, const Vec& v, double duration,
                                 const SolverConfig& cfg, const RowForcing& forcing)
{
    const int l = sys.dim();
    if (v.size() != l) throw DimensionError("row system: initial vector dimension mismatch");
    check_coverage(sys, duration);
    cfg.validate();

    ReducedSolution sol;
    sol.method = SolveMethod::generic_ode;
    sol.v0 = v;
    const auto knots = knots_for(sys, duration);

    Vec y = v;
    double log_scale = 0.0;
    const bool homogeneous = !forcing;
    sol.times.push_back(knots.front());
    sol.y.push_back(y);
    sol.log_scale.push_back(0.0);

    Vec force(l);
    for (std::size_t iv = 0; iv + 1 < knots.size(); ++iv) {
        const double ta = knots[iv], tb = knots[iv + 1];
        const std::size_t seg = locate_interval(sys.times, 0.5 * (ta + tb));
        const double t0 = sys.times[seg], t1 = sys.times[seg + 1];
        const Mat& a0 = sys.entries[seg];
        const Mat& a1 = sys.entries[seg + 1];
        Mat a(l, l);
        auto rhs = [&](double t, const Vec& u, Vec& du) {
            const double w = (t - t0) / (t1 - t0);
            a = (1.0 - w) * a0 + w * a1;
            du.noalias() = a.transpose() * u;
            if (!homogeneous) {
                forcing(t, u, log_scale, force);
                du += force;
            }
        };
        SolverConfig local = cfg;
        local.sample_stride = tb - ta;
        local.max_step = std::max(cfg.max_step, local.sample_stride);
        local.step = std::min(cfg.step, local.sample_stride);
        integrate(
            rhs, y, ta, tb, local,
            [&](double t, Vec& u) {
                if (!u.allFinite())
                    throw BlowUpError(t, std::numeric_limits<double>::infinity(), "row system: non-finite state");
                rescale(u, log_scale, homogeneous);
            },
            {});
        sol.times.push_back(tb);
        sol.y.push_back(y);
        sol.log_scale.push_back(log_scale);
    }
    return sol;
}

ReducedSolution solve_generic(const ReducedSystemTape& sys, const Vec& v, double duration, const SolverConfig& cfg)
{
    return solve_row_system(sys, v, duration, cfg, {});
}

Vec exponents_of_reduced(const ReducedSystemTape& sys, double duration)
{
    const int l = sys.dim();
    Vec out(l);
    for (int i = 0; i < l; ++i) out(i) = solve_triangular(sys, Vec::Unit(l, i), duration).final_exponent();
    return out;
}

double max_relative_deviation(const ReducedSolution& a, const ReducedSolution& b)
{
    if (a.times.size() != b.times.size()) throw Error("max_relative_deviation: solutions on different grids");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.times.size(); ++i) {
        if (std::abs(a.times[i] - b.times[i]) > 1e-9 * std::max(1.0, std::abs(b.times[i])))
            throw Error("max_relative_deviation: solutions on different grids");
        const double denom = b.y[i].cwiseAbs().maxCoeff();
        const Vec diff = std::exp(a.log_scale[i] - b.log_scale[i]) * a.y[i] - b.y[i];
        if (denom == 0.0) {
            if (diff.cwiseAbs().maxCoeff() != 0.0) worst = std::numeric_limits<double>::infinity();
            continue;
        }
        worst = std::max(worst, diff.cwiseAbs().maxCoeff() / denom);
    }
    return worst;
}

void write_reduced_csv(std::ostream& os, const ReducedSystemTape& sys)
{
    const int l = sys.dim();
    os << 't';
    for (int i = 1; i <= l; ++i)
        for (int j = 1; j <= i; ++j) os << ",a_" << i << j;
    os << '\n';
    std::vector<double> row;
    for (std::size_t s = 0; s < sys.times.size(); ++s) {
        row.clear();
        row.push_back(sys.times[s]);
        for (int i = 0; i < l; ++i)
            for (int j = 0; j <= i; ++j) row.push_back(sys.entries[s](i, j));
        write_csv_row(os, row);
    }
}

ReducedSystemTape read_reduced_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line)) throw Error("reduced CSV: missing header");
    const auto header = split_csv_line(line);
    const auto cols = static_cast<int>(header.size()) - 1;
    int l = 0;
    while (l * (l + 1) / 2 < cols) ++l;
    if (l == 0 || l * (l + 1) / 2 != cols || header.front() != "t") throw Error("reduced CSV: malformed header");
    ReducedSystemTape sys;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) throw Error("reduced CSV: row width differs from header");
        std::size_t c = 0;
        sys.times.push_back(parse_double(cells[c++]));
        Mat a = Mat::Zero(l, l);
        for (int i = 0; i < l; ++i)
            for (int j = 0; j <= i; ++j) a(i, j) = parse_double(cells[c++]);
        sys.entries.push_back(std::move(a));
    }
    return sys;
}

nlohmann::json reduced_header_json(const ReducedSystemTape& sys)
{
    nlohmann::json j;
    j["provenance"] = to_json(sys.source);
    j["ell"] = sys.dim();
    nlohmann::json grid;
    grid["t0"] = sys.times.empty() ? 0.0 : sys.start();
    grid["t1"] = sys.times.empty() ? 0.0 : sys.end();
    grid["samples"] = sys.times.size();
    grid["interp"] = "linear";
    j["grid"] = grid;
    j["columns"] = "t, then a_ij for i >= j, row-major";
    return j;
}

} // namespace lyapframe
