#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "lyapframe/frame_flow.hpp"
#include "lyapframe/reduced_system.hpp"

namespace lyapframe {

enum class PerturbationKind { constant_vector, sinusoid, saturating, field_difference };

std::string to_string(PerturbationKind kind);
PerturbationKind perturbation_kind_from_string(const std::string& s);

using PerturbationFn = std::function<void(double t, const Vec& y, Eigen::Ref<Vec> out)>;

/// A bounded forcing f(t, y) on R^l with |f| <= bound and Lipschitz
/// constant `lipschitz` in y.
struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::constant_vector;
    int dim = 0;
    double bound = 0.0;
    double lipschitz = 0.0;

    Vec constant;   // constant_vector
    Vec amplitude;  // sinusoid, saturating
    Vec frequency;  // sinusoid
    Vec phase;      // sinusoid
    double gain = 1.0;  // saturating
    PerturbationFn custom;  // field_difference

    Vec eval(double t, const Vec& y) const;
    /// exp(-s) * f(t, exp(s) * u), without forming exp(s) * u when it would
    /// overflow.
    void eval_scaled(double t, const Vec& u, double s, Eigen::Ref<Vec> out) const;
    nlohmann::json to_json() const;
};

PerturbationSpec constant_perturbation(const Vec& a);
PerturbationSpec sinusoid_perturbation(const Vec& amplitude, const Vec& frequency, const Vec& phase);
/// f_i = amplitude_i * tanh(gain * y_i).
PerturbationSpec saturating_perturbation(const Vec& amplitude, double gain);

/// A perturbation of the given kind on R^dim with sup-norm exactly L
/// (equal amplitude L / sqrt(dim) per component).
PerturbationSpec perturbation_with_bound(PerturbationKind kind, int dim, double L, double frequency = 1.0,
                                         double gain = 1.0);

/// Parses {"kind": ..., "L": ...} or the explicit per-kind parameters.
/// field_difference is rejected here: it needs a frame run.
PerturbationSpec perturbation_from_json(const nlohmann::json& j, int dim, const std::string& pointer = "");

struct BoundProbe {
    double sup_norm = 0.0;
    double lipschitz_quotient = 0.0;
    bool within_bound = true;
    bool within_lipschitz = true;
};

/// Seeded random probe of sup |f| and of |f(t,y) - f(t,y')| / |y - y'| for
/// t in [t0, t1] and |y| <= radius.
BoundProbe probe_perturbation(const PerturbationSpec& f, double t0, double t1, double radius, int samples,
                              unsigned long long seed);

/// Runge-Kutta solution of dy/dt = y A(t) + f(t, y).
ReducedSolution solve_perturbed(const ReducedSystemTape& sys, const PerturbationSpec& f, const Vec& v,
                                double duration, const SolverConfig& cfg);

struct SearchConfig {
    double tol = 0.05;
    int max_iterations = 20;
    unsigned long long seed = 1;
    /// When false only the top target is attempted.
    bool search_lower = true;
};

struct PersistenceRecord {
    int target_index = 0;
    double target = 0.0;
    Vec initial;
    double achieved = 0.0;
    std::string method;
    double residual = 0.0;
    bool success = false;
    int evaluations = 0;
};

struct PersistenceReport {
    double duration = 0.0;
    nlohmann::json perturbation;
    nlohmann::json provenance;
    std::vector<PersistenceRecord> records;
    double c_constant = 0.0;
    double eta_constant = 0.0;

    nlohmann::json to_json() const;
};

/// Searches initial vectors whose perturbed finite-T exponent matches each
/// target (one per row of A, in row order). The top row uses a seeded
/// generic vector; lower rows use e_k + sum_{i>k} c_i e_i with each c_i
/// bisected, from the last index down, on the sign of y_i(T).
PersistenceReport persistence_experiment(const ReducedSystemTape& sys, const PerturbationSpec& f,
                                         const Vec& targets, double duration, const SolverConfig& cfg,
                                         const SearchConfig& search = {});

/// Two-dimensional full standard system with omega = (lambda, 0), no
/// coupling, forcing (a, a) and v = (1, 0).
struct CounterexampleReport {
    double lambda = 0.0;
    double a = 0.0;
    double duration = 0.0;
    double full_exponent = 0.0;
    /// Unperturbed exponent from v = (1, 0).
    double unperturbed_exponent = 0.0;
    /// Unperturbed exponents from e_1 and e_2.
    Vec unperturbed_coordinate_exponents;
    /// One-dimensional system A = [lambda] with forcing a, v = 1.
    double reduced_exponent = 0.0;
    ReducedSolution full;

    nlohmann::json to_json() const;
};

CounterexampleReport counterexample_run(double lambda, double a, double duration,
                                        const SolverConfig& cfg = SolverConfig::frame_default());

/// CSV `t,y1,y2,log_norm_over_t` of the perturbed full run, from the first
/// sample after t = 0.
void write_counterexample_csv(std::ostream& os, const CounterexampleReport& report);

/// Moving-frame coordinates of a perturbing field X along an orbit of S:
/// P(t, z) = x(t) + Q(t) z with dz/dt = U(C) z + fbar(t, z).
struct LiaoRun {
    std::vector<double> times;
    std::vector<Vec> x;
    std::vector<Mat> Q;
    std::vector<Vec> z;
    /// |P(t, z(t)) - phi^X_t(P(0, z0))| per sample.
    std::vector<double> residual;
    double max_residual = 0.0;
};

/// fbar(t, z) = Q^T (X(x + Q z) - S(x)) - Q^T DS(x) Q z.
Vec liao_fbar(const VectorFieldSpec& spec, const VectorFieldSpec& perturbed, const Vec& x, const Mat& q,
              const Vec& z);

/// Throws ValidityError once |z| exceeds `radius`.
LiaoRun liao_full_standard_system(const VectorFieldSpec& spec, const VectorFieldSpec& perturbed, const Vec& x0,
                                  const Mat& q0, const Vec& z0, double duration, const SolverConfig& cfg,
                                  double radius = 1.0);

/// Reduced forcing f_i(t, y) = fbar_{selected_i}(t, z) with y placed in the
/// selected coordinates of z and zeros elsewhere. The frame is read from a
/// full (l = n) run, linearly interpolated between samples. Bound and
/// Lipschitz constants are probed over |y| <= probe_radius.
PerturbationSpec build_reduced_perturbation(const VectorFieldSpec& spec, const VectorFieldSpec& perturbed,
                                            const FrameRun& run, const std::vector<int>& selected,
                                            double probe_radius = 1.0, unsigned long long seed = 7);

} // namespace lyapframe
