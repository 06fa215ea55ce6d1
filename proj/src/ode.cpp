#include "lyapframe/ode.hpp"

#include <algorithm>
#include <cmath>

#include "lyapframe/errors.hpp"

namespace lyapframe {

std::string to_string(Method m)
{
    return m == Method::fixed_rk4 ? "fixed_rk4" : "adaptive_rk45";
}

Method method_from_string(const std::string& s)
{
    if (s == "fixed_rk4") return Method::fixed_rk4;
    if (s == "adaptive_rk45") return Method::adaptive_rk45;
    throw ConfigError("unknown solver method '" + s + "'");
}

void SolverConfig::validate() const
{
    if (!(step > 0.0)) throw ConfigError("solver: step must be positive");
    if (!(max_step > 0.0)) throw ConfigError("solver: max_step must be positive");
    if (step > max_step) throw ConfigError("solver: step exceeds max_step");
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw ConfigError("solver: tolerances must be positive");
    if (!(sample_stride > 0.0)) throw ConfigError("solver: sample_stride must be positive");
    if (!(blowup_bound > 0.0)) throw ConfigError("solver: blowup_bound must be positive");
}

SolverConfig SolverConfig::frame_default()
{
    return SolverConfig{};
}

SolverConfig SolverConfig::oracle()
{
    SolverConfig c;
    c.method = Method::adaptive_rk45;
    c.abs_tol = 1e-9;
    c.rel_tol = 1e-9;
    return c;
}

namespace {

struct Rk4 {
    Vec k1, k2, k3, k4, tmp;

    explicit Rk4(Eigen::Index n) : k1(n), k2(n), k3(n), k4(n), tmp(n) {}

    void step(const OdeRhs& f, double t, Vec& y, double h)
    {
        f(t, y, k1);
        tmp = y + (0.5 * h) * k1;
        f(t + 0.5 * h, tmp, k2);
        tmp = y + (0.5 * h) * k2;
        f(t + 0.5 * h, tmp, k3);
        tmp = y + h * k3;
        f(t + h, tmp, k4);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
};

void fixed_rk4(const OdeRhs& rhs, Vec& y, double t0, double t1, const SolverConfig& cfg,
               const StepHook& after_step, const SampleHook& on_sample)
{
    const double dir = t1 >= t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    const double stride = cfg.sample_stride;
    const long per_sample = std::max(1L, std::lround(stride / cfg.step));
    const double h = stride / static_cast<double>(per_sample);

    // Whole sample intervals, then a tail shorter than one stride.
    long whole = static_cast<long>(std::floor(span / stride * (1.0 + 1e-12)));
    if (static_cast<double>(whole) * stride > span) whole = static_cast<long>(span / stride);
    const double covered = static_cast<double>(whole) * stride;
    double tail = span - covered;
    if (tail < 1e-12 * std::max(1.0, span)) tail = 0.0;

    Rk4 rk(y.size());
    if (on_sample) on_sample(t0, y);
    for (long s = 0; s < whole; ++s) {
        for (long j = 0; j < per_sample; ++j) {
            const double t = t0 + dir * (static_cast<double>(s) * stride + static_cast<double>(j) * h);
            rk.step(rhs, t, y, dir * h);
            const double tn = t0 + dir * (static_cast<double>(s) * stride + static_cast<double>(j + 1) * h);
            if (after_step) after_step(tn, y);
        }
        if (on_sample) on_sample(t0 + dir * static_cast<double>(s + 1) * stride, y);
    }
    if (tail > 0.0) {
        const long n = std::max(1L, static_cast<long>(std::ceil(tail / h - 1e-9)));
        const double ht = tail / static_cast<double>(n);
        for (long j = 0; j < n; ++j) {
            const double t = t0 + dir * (covered + static_cast<double>(j) * ht);
            rk.step(rhs, t, y, dir * ht);
            const double tn = (j + 1 == n) ? t1 : t0 + dir * (covered + static_cast<double>(j + 1) * ht);
            if (after_step) after_step(tn, y);
        }
        if (on_sample) on_sample(t1, y);
    }
}

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

void adaptive_rk45(const OdeRhs& rhs, Vec& y, double t0, double t1, const SolverConfig& cfg,
                   const StepHook& after_step, const SampleHook& on_sample)
{
    const Eigen::Index n = y.size();
    const double dir = t1 >= t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y5(n), err(n), scale(n);

    if (on_sample) on_sample(t0, y);
    if (span == 0.0) return;

    rhs(t0, y, k1);
    const double d0 = y.norm(), d1 = k1.norm();
    double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::clamp(h, 1e-10, std::min(cfg.max_step, cfg.sample_stride));

    // Sample k sits at min(k * stride, span); the last one is t1 itself.
    const long sample_count = std::max(1L, static_cast<long>(std::ceil(span / cfg.sample_stride - 1e-9)));
    auto target_of = [&](long k) { return k >= sample_count ? span : static_cast<double>(k) * cfg.sample_stride; };
    long k = 1;
    double elapsed = 0.0;

    long rejections = 0;
    while (k <= sample_count) {
        const double target = target_of(k);
        bool hits = false;
        double hs = std::min(h, cfg.max_step);
        if (elapsed + hs >= target - 1e-12 * std::max(1.0, span)) {
            hs = target - elapsed;
            hits = true;
        }
        const double t = t0 + dir * elapsed;
        const double hh = dir * hs;

        rhs(t, y, k1);
        tmp = y + hh * (a21 * k1);
        rhs(t + c2 * hh, tmp, k2);
        tmp = y + hh * (a31 * k1 + a32 * k2);
        rhs(t + c3 * hh, tmp, k3);
        tmp = y + hh * (a41 * k1 + a42 * k2 + a43 * k3);
        rhs(t + c4 * hh, tmp, k4);
        tmp = y + hh * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        rhs(t + c5 * hh, tmp, k5);
        tmp = y + hh * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        rhs(t + hh, tmp, k6);
        y5 = y + hh * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        rhs(t + hh, y5, k7);
        err = hh * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        scale = (cfg.abs_tol + cfg.rel_tol * y.cwiseAbs().cwiseMax(y5.cwiseAbs()).array()).matrix();
        const double en = std::sqrt((err.array() / scale.array()).square().mean());

        if (!std::isfinite(en)) {
            h = 0.25 * hs;
            if (++rejections > 200 || h < 1e-14) throw Error("adaptive_rk45: step size underflow (non-finite error)");
            continue;
        }
        if (en <= 1.0) {
            y = y5;
            elapsed = hits ? target : elapsed + hs;
            const double tn = (hits && k >= sample_count) ? t1 : t0 + dir * elapsed;
            if (after_step) after_step(tn, y);
            if (hits) {
                if (on_sample) on_sample(tn, y);
                ++k;
            }
            const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            // A step clipped to hit a sample is not evidence for a smaller h.
            h = hits ? std::max(h, hs * fac) : hs * fac;
            rejections = 0;
        } else {
            h = hs * std::max(0.2, 0.9 * std::pow(en, -0.25));
            if (++rejections > 200 || h < 1e-14) throw Error("adaptive_rk45: step size underflow");
        }
    }
}

} // namespace

void integrate(const OdeRhs& rhs, Vec& y, double t0, double t1, const SolverConfig& cfg,
               const StepHook& after_step, const SampleHook& on_sample)
{
    cfg.validate();
    if (cfg.method == Method::fixed_rk4)
        fixed_rk4(rhs, y, t0, t1, cfg, after_step, on_sample);
    else
        adaptive_rk45(rhs, y, t0, t1, cfg, after_step, on_sample);
}

} // namespace lyapframe
