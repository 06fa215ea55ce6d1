#include "lyapframe/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>

#include "lyapframe/csv.hpp"
#include "lyapframe/errors.hpp"
#include "lyapframe/quadrature.hpp"
#include "lyapframe/row_system.hpp"

namespace lyapframe {

namespace {

constexpr double kMaxExp = 700.0;

std::vector<double> as_vector(const Vec& v)
{
    return {v.data(), v.data() + v.size()};
}

Vec vec_from_json(const nlohmann::json& j, int dim, const std::string& where)
{
    if (!j.is_array() || static_cast<int>(j.size()) != dim)
        throw ConfigError(where + ": expected an array of " + std::to_string(dim) + " numbers");
    Vec v(dim);
    for (int i = 0; i < dim; ++i) {
        if (!j[static_cast<std::size_t>(i)].is_number()) throw ConfigError(where + "/" + std::to_string(i) + ": not a number");
        v(i) = j[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
}

double sign_of(double v)
{
    return (v > 0.0) - (v < 0.0);
}

} // namespace

std::string to_string(PerturbationKind kind)
{
    switch (kind) {
    case PerturbationKind::constant_vector: return "constant_vector";
    case PerturbationKind::sinusoid: return "sinusoid";
    case PerturbationKind::saturating: return "saturating";
    case PerturbationKind::field_difference: return "field_difference";
    }
    return "unknown";
}

PerturbationKind perturbation_kind_from_string(const std::string& s)
{
    if (s == "constant_vector" || s == "constant") return PerturbationKind::constant_vector;
    if (s == "sinusoid") return PerturbationKind::sinusoid;
    if (s == "saturating" || s == "tanh") return PerturbationKind::saturating;
    if (s == "field_difference") return PerturbationKind::field_difference;
    throw ConfigError("unknown perturbation kind '" + s + "'");
}

Vec PerturbationSpec::eval(double t, const Vec& y) const
{
    Vec out(dim);
    eval_scaled(t, y, 0.0, out);
    return out;
}

void PerturbationSpec::eval_scaled(double t, const Vec& u, double s, Eigen::Ref<Vec> out) const
{
    if (u.size() != dim) throw DimensionError("perturbation: state dimension mismatch");
    const double shrink = std::exp(-s);
    switch (kind) {
    case PerturbationKind::constant_vector:
        out = shrink * constant;
        return;
    case PerturbationKind::sinusoid:
        for (int i = 0; i < dim; ++i) out(i) = shrink * amplitude(i) * std::sin(frequency(i) * t + phase(i));
        return;
    case PerturbationKind::saturating:
        for (int i = 0; i < dim; ++i) {
            double th = 0.0;
            if (u(i) != 0.0) {
                const double log_arg = std::log(gain * std::abs(u(i))) + s;
                th = log_arg > std::log(kMaxExp) ? sign_of(u(i)) : std::tanh(gain * u(i) * std::exp(s));
            }
            out(i) = shrink * amplitude(i) * th;
        }
        return;
    case PerturbationKind::field_difference: {
        if (s > kMaxExp) throw BlowUpError(t, std::numeric_limits<double>::infinity(),
                                           "field_difference perturbation evaluated far outside its domain");
        const Vec y = std::exp(s) * u;
        custom(t, y, out);
        out *= shrink;
        return;
    }
    }
}

nlohmann::json PerturbationSpec::to_json() const
{
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["dim"] = dim;
    j["L"] = bound;
    j["lipschitz"] = lipschitz;
    switch (kind) {
    case PerturbationKind::constant_vector: j["vector"] = as_vector(constant); break;
    case PerturbationKind::sinusoid:
        j["amplitude"] = as_vector(amplitude);
        j["frequency"] = as_vector(frequency);
        j["phase"] = as_vector(phase);
        break;
    case PerturbationKind::saturating:
        j["amplitude"] = as_vector(amplitude);
        j["gain"] = gain;
        break;
    case PerturbationKind::field_difference: break;
    }
    return j;
}

PerturbationSpec constant_perturbation(const Vec& a)
{
    PerturbationSpec f;
    f.kind = PerturbationKind::constant_vector;
    f.dim = static_cast<int>(a.size());
    f.constant = a;
    f.bound = a.norm();
    f.lipschitz = 0.0;
    return f;
}

PerturbationSpec sinusoid_perturbation(const Vec& amplitude, const Vec& frequency, const Vec& phase)
{
    if (frequency.size() != amplitude.size() || phase.size() != amplitude.size())
        throw DimensionError("sinusoid perturbation: amplitude, frequency and phase differ in length");
    PerturbationSpec f;
    f.kind = PerturbationKind::sinusoid;
    f.dim = static_cast<int>(amplitude.size());
    f.amplitude = amplitude;
    f.frequency = frequency;
    f.phase = phase;
    f.bound = amplitude.norm();
    f.lipschitz = 0.0;
    return f;
}

PerturbationSpec saturating_perturbation(const Vec& amplitude, double gain)
{
    if (!(gain > 0.0)) throw ConfigError("saturating perturbation: gain must be positive");
    PerturbationSpec f;
    f.kind = PerturbationKind::saturating;
    f.dim = static_cast<int>(amplitude.size());
    f.amplitude = amplitude;
    f.gain = gain;
    f.bound = amplitude.norm();
    f.lipschitz = gain * amplitude.cwiseAbs().maxCoeff();
    return f;
}

PerturbationSpec perturbation_with_bound(PerturbationKind kind, int dim, double L, double frequency, double gain)
{
    if (dim < 1) throw DimensionError("perturbation: dimension must be positive");
    if (L < 0.0) throw ConfigError("perturbation: bound must be non-negative");
    const Vec amp = Vec::Constant(dim, L / std::sqrt(static_cast<double>(dim)));
    switch (kind) {
    case PerturbationKind::constant_vector: return constant_perturbation(amp);
    case PerturbationKind::sinusoid: return sinusoid_perturbation(amp, Vec::Constant(dim, frequency), Vec::Zero(dim));
    case PerturbationKind::saturating: return saturating_perturbation(amp, gain);
    case PerturbationKind::field_difference: break;
    }
    throw ConfigError("perturbation: field_difference needs a frame run");
}

PerturbationSpec perturbation_from_json(const nlohmann::json& j, int dim, const std::string& pointer)
{
    if (!j.is_object()) throw ConfigError(pointer + ": perturbation must be an object");
    if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError(pointer + "/kind: missing or not a string");
    PerturbationKind kind;
    try {
        kind = perturbation_kind_from_string(j["kind"].get<std::string>());
    } catch (const ConfigError& e) {
        throw ConfigError(pointer + "/kind: " + e.what());
    }
    if (kind == PerturbationKind::field_difference)
        throw ConfigError(pointer + "/kind: field_difference is built from a frame run, not parsed");
    auto number = [&](const char* key, double fallback) {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_number()) throw ConfigError(pointer + "/" + key + ": not a number");
        return j[key].get<double>();
    };
    if (j.contains("L")) {
        const double L = number("L", 0.0);
        if (L < 0.0) throw ConfigError(pointer + "/L: must be non-negative");
        return perturbation_with_bound(kind, dim, L, number("frequency", 1.0), number("gain", 1.0));
    }
    switch (kind) {
    case PerturbationKind::constant_vector:
        if (!j.contains("vector")) throw ConfigError(pointer + "/vector: required without L");
        return constant_perturbation(vec_from_json(j["vector"], dim, pointer + "/vector"));
    case PerturbationKind::sinusoid: {
        if (!j.contains("amplitude")) throw ConfigError(pointer + "/amplitude: required without L");
        const Vec amp = vec_from_json(j["amplitude"], dim, pointer + "/amplitude");
        const Vec freq = j.contains("frequency") && j["frequency"].is_array()
                             ? vec_from_json(j["frequency"], dim, pointer + "/frequency")
                             : Vec::Constant(dim, number("frequency", 1.0));
        const Vec phase =
            j.contains("phase") ? vec_from_json(j["phase"], dim, pointer + "/phase") : Vec::Zero(dim);
        return sinusoid_perturbation(amp, freq, phase);
    }
    case PerturbationKind::saturating: {
        if (!j.contains("amplitude")) throw ConfigError(pointer + "/amplitude: required without L");
        const double gain = number("gain", 1.0);
        if (!(gain > 0.0)) throw ConfigError(pointer + "/gain: must be positive");
        return saturating_perturbation(vec_from_json(j["amplitude"], dim, pointer + "/amplitude"), gain);
    }
    case PerturbationKind::field_difference: break;
    }
    throw ConfigError(pointer + ": unsupported perturbation");
}

BoundProbe probe_perturbation(const PerturbationSpec& f, double t0, double t1, double radius, int samples,
                              unsigned long long seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int l = f.dim;
    auto random_point = [&] {
        Vec d(l);
        for (int i = 0; i < l; ++i) d(i) = normal(rng);
        const double n = d.norm();
        if (n > 0.0) d /= n;
        return Vec(d * radius * std::pow(unit(rng), 1.0 / l));
    };
    BoundProbe probe;
    for (int s = 0; s < samples; ++s) {
        const double t = t0 + (t1 - t0) * unit(rng);
        const Vec y = random_point();
        // Alternate nearby and distant partners.
        Vec y2 = s % 2 == 0 ? random_point() : Vec(y + 1e-3 * radius * random_point());
        const Vec fy = f.eval(t, y);
        probe.sup_norm = std::max(probe.sup_norm, fy.norm());
        const double dy = (y - y2).norm();
        if (dy > 0.0) probe.lipschitz_quotient = std::max(probe.lipschitz_quotient, (fy - f.eval(t, y2)).norm() / dy);
    }
    probe.within_bound = probe.sup_norm <= f.bound * (1.0 + 1e-9);
    probe.within_lipschitz = probe.lipschitz_quotient <= f.lipschitz * (1.0 + 1e-6);
    return probe;
}

ReducedSolution solve_perturbed(const ReducedSystemTape& sys, const PerturbationSpec& f, const Vec& v,
                                double duration, const SolverConfig& cfg)
{
    if (f.dim != sys.dim()) throw DimensionError("solve_perturbed: perturbation and system dimensions differ");
    return solve_row_system(sys, v, duration, cfg,
                            [&f](double t, const Vec& u, double s, Eigen::Ref<Vec> out) { f.eval_scaled(t, u, s, out); });
}

nlohmann::json PersistenceReport::to_json() const
{
    nlohmann::json j;
    j["T"] = duration;
    j["perturbation"] = perturbation;
    j["provenance"] = provenance;
    j["search"] = {{"label", "heuristic"},
                   {"description", "generic seeded vector for the top target; coordinate bisection on sign of "
                                   "y_i(T) for lower targets"}};
    j["constants"] = {{"c", c_constant},
                      {"eta", eta_constant},
                      {"unhoused", {"T_d", "d(eta)", "rho", "psi_i", "xi", "xi_bar", "E(eta,psi,delta)",
                                    "F(eta,psi_i)", "Y", "Y'", "Z", "m(k)", "C*", "d"}}};
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records) {
        recs.push_back({{"target_index", r.target_index},
                        {"target", r.target},
                        {"initial", as_vector(r.initial)},
                        {"achieved", r.achieved},
                        {"method", r.method},
                        {"residual", r.residual},
                        {"success", r.success},
                        {"evaluations", r.evaluations}});
    }
    j["records"] = recs;
    return j;
}

PersistenceReport persistence_experiment(const ReducedSystemTape& sys, const PerturbationSpec& f,
                                         const Vec& targets, double duration, const SolverConfig& cfg,
                                         const SearchConfig& search)
{
    const int l = sys.dim();
    if (targets.size() != l) throw DimensionError("persistence_experiment: one target per row of A required");
    for (int i = 1; i < l; ++i)
        if (targets(i) < targets(i - 1)) throw ConfigError("persistence_experiment: targets must be ascending");

    PersistenceReport report;
    report.duration = duration;
    report.perturbation = f.to_json();
    report.provenance = to_json(sys.source);
    const double smallest = targets.cwiseAbs().minCoeff();
    report.c_constant = std::min(1.0, smallest) / 16.0;
    report.eta_constant = report.c_constant / 2.0;

    int evaluations = 0;
    auto run = [&](const Vec& v) {
        ++evaluations;
        return solve_perturbed(sys, f, v, duration, cfg);
    };
    auto finish = [&](PersistenceRecord& rec, const Vec& v) {
        rec.initial = v;
        rec.achieved = run(v).final_exponent();
        rec.residual = std::abs(rec.achieved - rec.target);
        rec.success = std::isfinite(rec.achieved) && rec.residual <= search.tol;
        rec.evaluations = evaluations;
    };

    {
        std::mt19937_64 rng(search.seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec v(l);
        for (int i = 0; i < l; ++i) v(i) = normal(rng);
        v.normalize();
        PersistenceRecord rec;
        rec.target_index = l - 1;
        rec.target = targets(l - 1);
        rec.method = "generic_seeded";
        evaluations = 0;
        finish(rec, v);
        report.records.push_back(rec);
    }
    if (!search.search_lower) return report;

    for (int k = l - 2; k >= 0; --k) {
        evaluations = 0;
        Vec v = Vec::Unit(l, k);
        bool bisected = false, bracket_failed = false;
        for (int i = l - 1; i > k; --i) {
            auto tail = [&](double c) {
                Vec w = v;
                w(i) = c;
                return run(w).y.back()(i);
            };
            if (tail(0.0) == 0.0) continue;  // component never excited
            double lo = -1.0, hi = 1.0;
            double flo = tail(lo), fhi = tail(hi);
            for (int grow = 0; grow < 8 && sign_of(flo) == sign_of(fhi); ++grow) {
                lo *= 4.0;
                hi *= 4.0;
                flo = tail(lo);
                fhi = tail(hi);
            }
            if (sign_of(flo) == sign_of(fhi)) {
                bracket_failed = true;
                continue;
            }
            bisected = true;
            double mid = 0.5 * (lo + hi);
            for (int it = 0; it < search.max_iterations; ++it) {
                mid = 0.5 * (lo + hi);
                const double fm = tail(mid);
                if (fm == 0.0) break;
                if (sign_of(fm) == sign_of(flo)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            v(i) = mid;
        }
        PersistenceRecord rec;
        rec.target_index = k;
        rec.target = targets(k);
        rec.method = bracket_failed ? "bisection_no_bracket" : bisected ? "bisection" : "degenerate";
        finish(rec, v);
        report.records.push_back(rec);
    }
    std::sort(report.records.begin(), report.records.end(),
              [](const auto& a, const auto& b) { return a.target_index < b.target_index; });
    return report;
}

nlohmann::json CounterexampleReport::to_json() const
{
    return {{"lambda", lambda},
            {"a", a},
            {"T", duration},
            {"full_exponent", full_exponent},
            {"unperturbed_exponent", unperturbed_exponent},
            {"unperturbed_coordinate_exponents", as_vector(unperturbed_coordinate_exponents)},
            {"reduced_exponent", reduced_exponent}};
}

CounterexampleReport counterexample_run(double lambda, double a, double duration, const SolverConfig& cfg)
{
    if (!(lambda < 0.0)) throw ConfigError("counterexample_run: lambda must be negative");
    if (a < 0.0) throw ConfigError("counterexample_run: a must be non-negative");
    if (!(duration > 0.0)) throw ConfigError("counterexample_run: T must be positive");
    const double stride = cfg.sample_stride;

    Vec omega(2);
    omega << lambda, 0.0;
    const auto full_tape = constant_tape(omega, Mat::Zero(2, 2), 0.0, duration, stride);
    const auto sys = build_reduced_system(full_tape, {0, 1});
    const Vec v = Vec::Unit(2, 0);

    CounterexampleReport rep;
    rep.lambda = lambda;
    rep.a = a;
    rep.duration = duration;
    rep.full = solve_perturbed(sys, constant_perturbation(Vec::Constant(2, a)), v, duration, cfg);
    rep.full_exponent = rep.full.final_exponent();
    rep.unperturbed_exponent = solve_generic(sys, v, duration, cfg).final_exponent();
    rep.unperturbed_coordinate_exponents = exponents_of_reduced(sys, duration);

    const auto scalar_tape = constant_tape(Vec::Constant(1, lambda), Mat::Zero(1, 1), 0.0, duration, stride);
    const auto scalar = build_reduced_system(scalar_tape, {0});
    rep.reduced_exponent =
        solve_perturbed(scalar, constant_perturbation(Vec::Constant(1, a)), Vec::Ones(1), duration, cfg)
            .final_exponent();
    return rep;
}

void write_counterexample_csv(std::ostream& os, const CounterexampleReport& report)
{
    os << "t,y1,y2,log_norm_over_t\n";
    const auto& sol = report.full;
    const double t0 = sol.times.front();
    for (std::size_t i = 1; i < sol.times.size(); ++i) {
        const Vec y = sol.value(i);
        const double row[] = {sol.times[i], y(0), y(1), sol.log_norm(i) / (sol.times[i] - t0)};
        write_csv_row(os, row);
    }
}

Vec liao_fbar(const VectorFieldSpec& spec, const VectorFieldSpec& perturbed, const Vec& x, const Mat& q,
              const Vec& z)
{
    const int n = spec.dim;
    Vec sx(n), xp(n);
    spec.field(x, sx);
    perturbed.field(x + q * z, xp);
    const Mat c = q.transpose() * eval_jacobian(spec, x) * q;
    return q.transpose() * (xp - sx) - c * z;
}

LiaoRun liao_full_standard_system(const VectorFieldSpec& spec, const VectorFieldSpec& perturbed, const Vec& x0,
                                  const Mat& q0, const Vec& z0, double duration, const SolverConfig& cfg,
                                  double radius)
{
    const int n = spec.dim;
    if (perturbed.dim != n) throw DimensionError("liao_full_standard_system: X and S differ in dimension");
    if (x0.size() != n || q0.rows() != n || q0.cols() != n || z0.size() != n)
        throw DimensionError("liao_full_standard_system: needs x0, z0 in R^n and a full n x n frame");
    if (orthonormality_defect(q0) > 1e-10) throw OrthonormalityError("liao_full_standard_system: Q0 not orthonormal");
    if (z0.norm() > radius) throw ValidityError(0.0, radius, "liao_full_standard_system: z0 outside validity ball");

    const Eigen::Index nq = static_cast<Eigen::Index>(n) * n;
    Vec state(n + nq + n);
    state.head(n) = x0;
    state.segment(n, nq) = Eigen::Map<const Vec>(q0.data(), nq);
    state.tail(n) = z0;

    Vec sx(n), xp(n);
    auto rhs = [&](double, const Vec& y, Vec& dy) {
        const auto x = y.head(n);
        const Eigen::Map<const Mat> q(y.data() + n, n, n);
        const auto z = y.tail(n);
        const Mat jac = eval_jacobian(spec, x);
        const Mat c = q.transpose() * jac * q;
        const Mat u = frame_generator(c);
        spec.field(x, sx);
        perturbed.field(x + q * z, xp);
        dy.resize(y.size());
        dy.head(n) = sx;
        Eigen::Map<Mat>(dy.data() + n, n, n) = jac * q - q * u;
        dy.tail(n) = u * z + q.transpose() * (xp - sx) - c * z;
    };

    LiaoRun out;
    int steps = 0;
    Vec norms(n);
    integrate(
        rhs, state, 0.0, duration, cfg,
        [&](double t, Vec& y) {
            check_blowup(y.head(n), t, cfg.blowup_bound);
            if (++steps % 10 == 0) {
                Eigen::Map<Mat> q(y.data() + n, n, n);
                const Vec p = q * y.tail(n);
                if (!orthonormalize(q, norms)) throw DegenerateFrameError(-1, "liao frame collapsed");
                y.tail(n) = q.transpose() * p;
            }
            const double zn = y.tail(n).norm();
            if (!(zn <= radius)) {
                std::ostringstream os;
                os << "liao_full_standard_system: |z| = " << zn << " left the validity ball of radius " << radius
                   << " at t = " << t;
                throw ValidityError(t, radius, os.str());
            }
        },
        [&](double t, const Vec& y) {
            out.times.push_back(t);
            out.x.push_back(y.head(n));
            out.Q.push_back(Eigen::Map<const Mat>(y.data() + n, n, n));
            out.z.push_back(y.tail(n));
        });

    const auto direct = integrate_flow(perturbed, x0 + q0 * z0, 0.0, duration, cfg);
    if (direct.times.size() != out.times.size())
        throw Error("liao_full_standard_system: direct and moving-frame runs sampled differently");
    for (std::size_t i = 0; i < out.times.size(); ++i) {
        const double r = (out.x[i] + out.Q[i] * out.z[i] - direct.points[i]).norm();
        out.residual.push_back(r);
        out.max_residual = std::max(out.max_residual, r);
    }
    return out;
}

PerturbationSpec build_reduced_perturbation(const VectorFieldSpec& spec, const VectorFieldSpec& perturbed,
                                            const FrameRun& run, const std::vector<int>& selected,
                                            double probe_radius, unsigned long long seed)
{
    const int n = spec.dim;
    if (perturbed.dim != n) throw DimensionError("build_reduced_perturbation: X and S differ in dimension");
    if (run.states.size() < 2 || run.states.front().Q.cols() != n)
        throw DimensionError("build_reduced_perturbation: needs a full-frame run");
    if (selected.empty()) throw IndexError("build_reduced_perturbation: no directions selected");
    for (std::size_t p = 0; p < selected.size(); ++p) {
        if (selected[p] < 0 || selected[p] >= n) throw IndexError("build_reduced_perturbation: index out of range");
        for (std::size_t q = 0; q < p; ++q)
            if (selected[q] == selected[p]) throw IndexError("build_reduced_perturbation: duplicate index");
    }

    struct Shared {
        VectorFieldSpec spec, perturbed;
        std::vector<double> times;
        std::vector<Vec> x;
        std::vector<Mat> q;
        std::vector<int> selected;
    };
    auto data = std::make_shared<Shared>();
    data->spec = spec;
    data->perturbed = perturbed;
    data->selected = selected;
    for (const auto& s : run.states) {
        data->times.push_back(s.t);
        data->x.push_back(s.x);
        data->q.push_back(s.Q);
    }

    PerturbationSpec f;
    f.kind = PerturbationKind::field_difference;
    f.dim = static_cast<int>(selected.size());
    f.custom = [data, n](double t, const Vec& y, Eigen::Ref<Vec> out) {
        const auto& d = *data;
        if (t < d.times.front() - 1e-9 || t > d.times.back() + 1e-9)
            throw CoverageError("reduced perturbation evaluated outside its frame run");
        const std::size_t i = locate_interval(d.times, t);
        const double w = std::clamp((t - d.times[i]) / (d.times[i + 1] - d.times[i]), 0.0, 1.0);
        const Vec x = (1.0 - w) * d.x[i] + w * d.x[i + 1];
        const Mat q = (1.0 - w) * d.q[i] + w * d.q[i + 1];
        Vec z = Vec::Zero(n);
        for (std::size_t p = 0; p < d.selected.size(); ++p) z(d.selected[p]) = y(static_cast<Eigen::Index>(p));
        const Vec fb = liao_fbar(d.spec, d.perturbed, x, q, z);
        for (std::size_t p = 0; p < d.selected.size(); ++p) out(static_cast<Eigen::Index>(p)) = fb(d.selected[p]);
    };
    // Probe with unbounded constants, then record a 10% margin.
    f.bound = std::numeric_limits<double>::infinity();
    f.lipschitz = std::numeric_limits<double>::infinity();
    const auto probe = probe_perturbation(f, data->times.front(), data->times.back(), probe_radius, 2000, seed);
    f.bound = 1.1 * probe.sup_norm;
    f.lipschitz = 1.1 * probe.lipschitz_quotient;
    return f;
}

} // namespace lyapframe
