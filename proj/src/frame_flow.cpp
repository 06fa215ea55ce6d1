#include "lyapframe/frame_flow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lyapframe/errors.hpp"
#include "lyapframe/quadrature.hpp"

namespace lyapframe {

namespace {

constexpr double kOrthoTolerance = 1e-8;

void require_orthonormal(const Mat& q, const char* who)
{
    if (q.cols() == 0 || q.cols() > q.rows()) throw DimensionError(std::string(who) + ": frame must have 1..n columns");
    const double defect = orthonormality_defect(q);
    if (!(defect <= kOrthoTolerance)) {
        std::ostringstream os;
        os << who << ": frame is not orthonormal (|Q^T Q - I|_max = " << defect << ")";
        throw OrthonormalityError(os.str());
    }
}

double spectral_norm(const Mat& a)
{
    if (a.rows() == 2 && a.cols() == 2) {
        // Closed form for 2x2: largest singular value.
        const double p = a.squaredNorm();
        const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        return std::sqrt(0.5 * (p + std::sqrt(std::max(0.0, p * p - 4.0 * det * det))));
    }
    return Eigen::JacobiSVD<Mat>(a).singularValues()(0);
}

Mat lower_coupling(const Mat& c)
{
    const auto l = c.rows();
    Mat r = Mat::Zero(l, l);
    for (Eigen::Index j = 1; j < l; ++j)
        for (Eigen::Index k = 0; k < j; ++k) r(j, k) = c(k, j) + c(j, k);
    return r;
}

// Appends one sample to the run. Q is used as integrated (defect ~ 1e-13).
void record(const VectorFieldSpec& spec, FrameRun& run, double t, const Vec& x, const Mat& q, const Vec& log_zeta)
{
    const Mat jac = eval_jacobian(spec, x);
    const Mat c = q.transpose() * jac * q;
    run.states.push_back(OrthoFrameState{t, x, q, log_zeta});
    run.tape.times.push_back(t);
    run.tape.omega.push_back(c.diagonal());
    run.tape.coupling.push_back(lower_coupling(c));
    run.tape.jac_norm.push_back(spectral_norm(jac));
    run.tape.base.times.push_back(t);
    run.tape.base.points.push_back(x);
}

void sort_tape_increasing(QualTape& tape)
{
    if (tape.times.size() < 2 || tape.times.front() < tape.times.back()) return;
    std::reverse(tape.times.begin(), tape.times.end());
    std::reverse(tape.omega.begin(), tape.omega.end());
    std::reverse(tape.coupling.begin(), tape.coupling.end());
    std::reverse(tape.jac_norm.begin(), tape.jac_norm.end());
    std::reverse(tape.base.times.begin(), tape.base.times.end());
    std::reverse(tape.base.points.begin(), tape.base.points.end());
}

void check_drift(const Eigen::Ref<const Mat>& q, double t, const FrameFlowOptions& opts)
{
    const double defect = orthonormality_defect(q);
    if (!(defect <= opts.drift_limit)) {
        std::ostringstream os;
        os << "frame drifted from orthonormality by " << defect << " at t=" << t << " (limit " << opts.drift_limit
           << "); reduce the step or re-orthonormalize more often (reorth_every=" << opts.reorth_every << ")";
        throw OrthonormalityError(os.str());
    }
}

// Gram-Schmidt cleanup of the frame block, folding the norms into the ledger.
void cleanup(Eigen::Map<Mat>& q, Eigen::Map<Vec>& log_zeta, double t, const FrameFlowOptions& opts)
{
    check_drift(q, t, opts);
    Vec norms(q.cols());
    if (!orthonormalize(q, norms)) throw DegenerateFrameError(-1, "frame collapsed during evolution");
    log_zeta.array() += norms.array().log();
}

// Cubic Hermite interpolation of a stored orbit using the field values at nodes.
class DenseOrbit {
public:
    DenseOrbit(const VectorFieldSpec& spec, TrajectoryTape tape) : tape_(std::move(tape))
    {
        slopes_.reserve(tape_.size());
        for (const auto& p : tape_.points) {
            Vec f(spec.dim);
            spec.field(p, f);
            slopes_.push_back(std::move(f));
        }
    }

    void at(double t, Eigen::Ref<Vec> out) const
    {
        const std::size_t i = locate_interval(tape_.times, t);
        const double t0 = tape_.times[i], t1 = tape_.times[i + 1];
        const double h = t1 - t0;
        const double s = (t - t0) / h;
        if (s == 0.0) {
            out = tape_.points[i];
            return;
        }
        if (s == 1.0) {
            out = tape_.points[i + 1];
            return;
        }
        const double s2 = s * s, s3 = s2 * s;
        const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
        out = h00 * tape_.points[i] + (h10 * h) * slopes_[i] + h01 * tape_.points[i + 1] + (h11 * h) * slopes_[i + 1];
    }

private:
    TrajectoryTape tape_;
    std::vector<Vec> slopes_;
};

} // namespace

std::string to_string(FrameOrder order)
{
    return order == FrameOrder::descending ? "descending" : "ascending";
}

Vec omega_values(const VectorFieldSpec& spec, const Vec& x, const Mat& q)
{
    require_orthonormal(q, "omega_values");
    if (q.rows() != spec.dim) throw DimensionError("omega_values: frame dimension mismatch");
    const Mat jac = eval_jacobian(spec, x);
    return (q.transpose() * jac * q).diagonal();
}

Mat coupling_values(const VectorFieldSpec& spec, const Vec& x, const Mat& q)
{
    require_orthonormal(q, "coupling_values");
    if (q.rows() != spec.dim) throw DimensionError("coupling_values: frame dimension mismatch");
    const Mat jac = eval_jacobian(spec, x);
    return lower_coupling(q.transpose() * jac * q);
}

Mat frame_generator(const Mat& c)
{
    const auto l = c.rows();
    Mat u = Mat::Zero(l, l);
    for (Eigen::Index i = 0; i < l; ++i) {
        u(i, i) = c(i, i);
        for (Eigen::Index j = i + 1; j < l; ++j) u(i, j) = c(i, j) + c(j, i);
    }
    return u;
}

FrameRun evolve_frame(const VectorFieldSpec& spec, const Vec& x0, const Mat& q0, double duration,
                      const SolverConfig& cfg, FrameFlowOptions opts)
{
    if (q0.rows() != spec.dim) throw DimensionError("evolve_frame: frame dimension mismatch");
    OrthoFrameState start{0.0, x0, q0, Vec::Zero(q0.cols())};
    return evolve_frame(spec, start, duration, cfg, opts);
}

FrameRun evolve_frame(const VectorFieldSpec& spec, const OrthoFrameState& start, double duration,
                      const SolverConfig& cfg, FrameFlowOptions opts)
{
    const int n = spec.dim;
    if (start.x.size() != n || start.Q.rows() != n) throw DimensionError("evolve_frame: dimension mismatch");
    require_orthonormal(start.Q, "evolve_frame");
    if (opts.reorth_every < 1) throw ConfigError("evolve_frame: reorth_every must be >= 1");
    const auto l = start.Q.cols();
    if (start.log_zeta.size() != l) throw DimensionError("evolve_frame: ledger length differs from frame count");

    const Eigen::Index nq = n * l;
    Vec y(n + nq + l);
    y.head(n) = start.x;
    y.segment(n, nq) = Eigen::Map<const Vec>(start.Q.data(), nq);
    y.tail(l) = start.log_zeta;

    Mat jac(n, n), jq(n, l), c(l, l), u(l, l);
    auto rhs = [&](double, const Vec& s, Vec& ds) {
        const auto x = s.head(n);
        spec.field(x, ds.head(n));
        if (spec.jacobian)
            spec.jacobian(x, jac);
        else
            jac = finite_difference_jacobian(spec, x);
        Eigen::Map<const Mat> q(s.data() + n, n, l);
        Eigen::Map<Mat> dq(ds.data() + n, n, l);
        jq.noalias() = jac * q;
        c.noalias() = q.transpose() * jq;
        u.setZero();
        for (Eigen::Index i = 0; i < l; ++i) {
            u(i, i) = c(i, i);
            for (Eigen::Index j = i + 1; j < l; ++j) u(i, j) = c(i, j) + c(j, i);
        }
        dq = jq;
        dq.noalias() -= q * u;
        ds.tail(l) = c.diagonal();
    };

    FrameRun run;
    run.order = FrameOrder::descending;
    run.tape.frame_count = static_cast<int>(l);
    long steps = 0;
    integrate(
        rhs, y, start.t, start.t + duration, cfg,
        [&](double t, Vec& s) {
            check_blowup(s.head(n), t, cfg.blowup_bound);
            if (++steps % opts.reorth_every == 0) {
                Eigen::Map<Mat> q(s.data() + n, n, l);
                Eigen::Map<Vec> lz(s.data() + n + nq, l);
                cleanup(q, lz, t, opts);
            }
        },
        [&](double t, const Vec& s) {
            Eigen::Map<const Mat> q(s.data() + n, n, l);
            check_drift(q, t, opts);
            record(spec, run, t, s.head(n), q, s.tail(l));
        });
    sort_tape_increasing(run.tape);
    return run;
}

FrameRun evolve_frame_ascending(const VectorFieldSpec& spec, const Vec& x0, const Mat& q_seed, double duration,
                                double settle, const SolverConfig& cfg, FrameFlowOptions opts)
{
    const int n = spec.dim;
    if (x0.size() != n || q_seed.rows() != n) throw DimensionError("evolve_frame_ascending: dimension mismatch");
    require_orthonormal(q_seed, "evolve_frame_ascending");
    if (!(duration > 0.0) || settle < 0.0) throw ConfigError("evolve_frame_ascending: need T > 0 and settle >= 0");
    if (opts.reorth_every < 1) throw ConfigError("evolve_frame_ascending: reorth_every must be >= 1");
    cfg.validate();

    // Whole strides of settle keep the reported samples on the forward grid.
    settle = std::ceil(settle / cfg.sample_stride - 1e-9) * cfg.sample_stride;
    const double total = duration + settle;

    SolverConfig dense = cfg;
    if (cfg.method == Method::fixed_rk4) {
        const long per_sample = std::max(1L, std::lround(cfg.sample_stride / cfg.step));
        dense.sample_stride = cfg.sample_stride / static_cast<double>(per_sample);
    } else {
        dense.sample_stride = std::min(cfg.sample_stride, cfg.max_step);
    }
    const DenseOrbit orbit(spec, integrate_flow(spec, x0, 0.0, total, dense));

    const auto l = q_seed.cols();
    const Eigen::Index nq = n * l;
    Vec y(nq + l);
    y.head(nq) = Eigen::Map<const Vec>(q_seed.data(), nq);
    y.tail(l).setZero();

    Vec x(n);
    Mat jac(n, n), jq(n, l), c(l, l), u(l, l);
    auto rhs = [&](double t, const Vec& s, Vec& ds) {
        orbit.at(t, x);
        if (spec.jacobian)
            spec.jacobian(x, jac);
        else
            jac = finite_difference_jacobian(spec, x);
        Eigen::Map<const Mat> q(s.data(), n, l);
        Eigen::Map<Mat> dq(ds.data(), n, l);
        jq.noalias() = jac * q;
        c.noalias() = q.transpose() * jq;
        u.setZero();
        for (Eigen::Index i = 0; i < l; ++i) {
            u(i, i) = c(i, i);
            for (Eigen::Index j = i + 1; j < l; ++j) u(i, j) = c(i, j) + c(j, i);
        }
        dq = jq;
        dq.noalias() -= q * u;
        ds.tail(l) = c.diagonal();
    };

    FrameRun run;
    run.order = FrameOrder::ascending;
    run.tape.frame_count = static_cast<int>(l);
    const double report_limit = duration + 1e-9 * std::max(1.0, total);
    long steps = 0;
    integrate(
        rhs, y, total, 0.0, cfg,
        [&](double t, Vec& s) {
            if (++steps % opts.reorth_every == 0) {
                Eigen::Map<Mat> q(s.data(), n, l);
                Eigen::Map<Vec> lz(s.data() + nq, l);
                cleanup(q, lz, t, opts);
            }
        },
        [&](double t, const Vec& s) {
            Eigen::Map<const Mat> q(s.data(), n, l);
            check_drift(q, t, opts);
            if (t > report_limit) return;
            Vec xt(n);
            orbit.at(t, xt);
            record(spec, run, t, xt, q, s.tail(l));
        });

    // Samples arrived in decreasing time; re-anchor the ledger at t = 0.
    std::reverse(run.states.begin(), run.states.end());
    sort_tape_increasing(run.tape);
    const Vec origin = run.states.front().log_zeta;
    for (auto& st : run.states) st.log_zeta -= origin;
    return run;
}

Vec ledger_identity_residual(const FrameRun& run)
{
    const auto& first = run.states.front();
    const auto& last = run.states.back();
    const int l = run.tape.frame_count;
    Vec out(l);
    const double a = std::min(first.t, last.t), b = std::max(first.t, last.t);
    const double sign = last.t >= first.t ? 1.0 : -1.0;
    const auto& tt = run.tape.times;
    const std::size_t m = tt.size();
    for (int k = 0; k < l; ++k) {
        double integral = run.tape.omega_integral(k, a, b);
        // Euler-Maclaurin end correction -h^2/12 (w'(b) - w'(a)) on a uniform
        // grid; slopes from second-order one-sided differences.
        if (m >= 3) {
            const double h = tt[1] - tt[0];
            const auto& w = run.tape.omega;
            const double da = (-3.0 * w[0](k) + 4.0 * w[1](k) - w[2](k)) / (2.0 * h);
            const double db = (3.0 * w[m - 1](k) - 4.0 * w[m - 2](k) + w[m - 3](k)) / (2.0 * h);
            const double hb = tt[m - 1] - tt[m - 2];
            if (std::abs(hb - h) <= 1e-9 * h) integral -= h * h / 12.0 * (db - da);
        }
        integral *= sign;
        out(k) = std::abs((last.log_zeta(k) - first.log_zeta(k)) - integral);
    }
    return out;
}

} // namespace lyapframe
