#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lyapframe/errors.hpp"
#include "lyapframe/perturbation.hpp"

using namespace lyapframe;

namespace {

ReducedSystemTape scalar_system(double rate, double T)
{
    return build_reduced_system(constant_tape(Vec::Constant(1, rate), Mat::Zero(1, 1), 0.0, T, 0.01), {0});
}

ReducedSystemTape diag_system(double a, double b, double T)
{
    Vec omega(2);
    omega << a, b;
    return build_reduced_system(constant_tape(omega, Mat::Zero(2, 2), 0.0, T, 0.01), {0, 1});
}

} // namespace

TEST_SUITE("perturbation_lab")
{
    TEST_CASE("zero forcing follows the unperturbed solvers")
    {
        Vec omega(2);
        omega << 1.0, 2.0;
        Mat r = Mat::Zero(2, 2);
        r(1, 0) = 1.0;
        const auto sys = build_reduced_system(constant_tape(omega, r, 0.0, 5.0, 0.01), {0, 1});
        const auto f = constant_perturbation(Vec::Zero(2));
        const Vec v = Vec::Ones(2);
        const auto pert = solve_perturbed(sys, f, v, 5.0, SolverConfig::frame_default());
        CHECK(max_relative_deviation(pert, solve_generic(sys, v, 5.0, SolverConfig::frame_default())) <= 1e-10);
        CHECK(max_relative_deviation(pert, solve_triangular(sys, v, 5.0)) <= 1e-5);
    }

    TEST_CASE("scalar forced systems match their explicit solutions")
    {
        const auto cfg = SolverConfig::frame_default();
        {
            // y' = y + 0.5 sin t: y = 1.25 e^t - 0.25 (sin t + cos t)
            const double T = 50.0;
            const Vec amp = Vec::Constant(1, 0.5);
            const auto f = sinusoid_perturbation(amp, Vec::Ones(1), Vec::Zero(1));
            const auto sol = solve_perturbed(scalar_system(1.0, T), f, Vec::Ones(1), T, cfg);
            CHECK(sol.final_exponent() == doctest::Approx(1.0 + std::log(1.25) / T).epsilon(1e-8));
            CHECK(std::abs(sol.final_exponent() - 1.0) < 0.01);
            const std::size_t i = 300;
            const double t = sol.times[i];
            CHECK(sol.value(i)(0) ==
                  doctest::Approx(1.25 * std::exp(t) - 0.25 * (std::sin(t) + std::cos(t))).epsilon(1e-9));
        }
        {
            // y' = -y + 0.1: y = 0.1 + 0.9 e^{-t}, bounded away from zero
            const double T = 100.0;
            const auto sol = solve_perturbed(scalar_system(-1.0, T), constant_perturbation(Vec::Constant(1, 0.1)),
                                             Vec::Ones(1), T, cfg);
            CHECK(sol.value(sol.times.size() - 1)(0) == doctest::Approx(0.1 + 0.9 * std::exp(-T)).epsilon(1e-9));
            CHECK(sol.final_exponent() == doctest::Approx(std::log(0.1) / T).epsilon(1e-8));
        }
        {
            // y' = y + 0.3: y = (v + 0.3) e^t - 0.3
            const double T = 100.0;
            const auto sys = scalar_system(1.0, T);
            const auto f = constant_perturbation(Vec::Constant(1, 0.3));
            for (double v : {-5.0, -1.0, 0.01, 0.5, 1.0, 2.0, 4.0}) {
                const double got = solve_perturbed(sys, f, Vec::Constant(1, v), T, cfg).final_exponent();
                CHECK(got == doctest::Approx(1.0 + std::log(std::abs(v + 0.3)) / T).epsilon(1e-6));
                // The offset log|v + 0.3| / T only fits in 0.01 when |v + 0.3| is within a factor e of 1.
                if (std::abs(std::log(std::abs(v + 0.3))) < 1.0) CHECK(std::abs(got - 1.0) < 0.01);
            }
            // The single fixed point v = -0.3 does not grow.
            const double fixed = solve_perturbed(sys, f, Vec::Constant(1, -0.3), T, cfg).final_exponent();
            CHECK(fixed == doctest::Approx(std::log(0.3) / T).epsilon(1e-6));
        }
    }

    TEST_CASE("persistence: the top exponent survives a tanh perturbation")
    {
        const double T = 500.0;
        const auto sys = diag_system(1.0, 2.0, T);
        Vec targets(2);
        targets << 1.0, 2.0;
        const auto f = perturbation_with_bound(PerturbationKind::saturating, 2, 0.5);
        SearchConfig search;
        search.search_lower = false;
        const auto rep = persistence_experiment(sys, f, targets, T, SolverConfig::frame_default(), search);
        REQUIRE(rep.records.size() == 1);
        const auto& top = rep.records.front();
        CHECK(top.method == "generic_seeded");
        CHECK(std::abs(top.achieved - 2.0) < 0.02);
        CHECK(top.residual == doctest::Approx(std::abs(top.achieved - 2.0)));
        CHECK(rep.to_json()["search"]["label"] == "heuristic");
        CHECK(rep.c_constant == doctest::Approx(1.0 / 16.0));
        CHECK(rep.eta_constant == doctest::Approx(1.0 / 32.0));
    }

    TEST_CASE("persistence without forcing is a degenerate search")
    {
        const double T = 50.0;
        const auto sys = diag_system(1.0, 2.0, T);
        Vec targets(2);
        targets << 1.0, 2.0;
        const auto rep =
            persistence_experiment(sys, constant_perturbation(Vec::Zero(2)), targets, T, SolverConfig::frame_default());
        REQUIRE(rep.records.size() == 2);
        CHECK(rep.records[0].method == "degenerate");
        CHECK(rep.records[0].initial == Vec::Unit(2, 0));
        CHECK(std::abs(rep.records[0].achieved - 1.0) < 1e-6);
        CHECK(rep.records[0].success);
        CHECK(std::abs(rep.records[1].achieved - 2.0) < 0.05);
    }

    TEST_CASE("lower targets are searched by bisection")
    {
        // y1' = y1 + 0.2, y2' = 2 y2 + 0.2: the tail coefficient must cancel
        // the forced part of y2, c = -0.1, leaving y2 = -0.1 and y1 ~ e^t.
        const double T = 8.0;
        const auto sys = diag_system(1.0, 2.0, T);
        Vec targets(2);
        targets << 1.0, 2.0;
        const auto rep = persistence_experiment(sys, constant_perturbation(Vec::Constant(2, 0.2)), targets, T,
                                                SolverConfig::frame_default());
        const auto& low = rep.records[0];
        CHECK(low.method == "bisection");
        CHECK(low.initial(1) == doctest::Approx(-0.1).epsilon(1e-4));
        CHECK(low.success);
    }

    TEST_CASE("counterexample: forcing pulls the negative exponent to zero")
    {
        const auto rep = counterexample_run(-0.5, 0.1, 200.0);
        const Vec y = rep.full.value(rep.full.times.size() - 1);
        CHECK(y(1) == doctest::Approx(20.0).epsilon(1e-9));
        CHECK(y(0) == doctest::Approx(0.2 + 0.8 * std::exp(-100.0)).epsilon(1e-9));
        CHECK(std::abs(rep.full_exponent) < 0.05);
        CHECK(rep.full_exponent == doctest::Approx(std::log(std::hypot(y(0), 20.0)) / 200.0));
        CHECK(std::abs(rep.unperturbed_exponent + 0.5) < 1e-6);
        CHECK(rep.reduced_exponent == doctest::Approx(std::log(0.2 + 0.8 * std::exp(-100.0)) / 200.0).epsilon(1e-6));

        const auto free = counterexample_run(-0.5, 0.0, 200.0);
        CHECK(std::abs(free.unperturbed_coordinate_exponents(0) + 0.5) < 1e-6);
        CHECK(std::abs(free.unperturbed_coordinate_exponents(1)) < 1e-6);
        CHECK(std::abs(free.full_exponent + 0.5) < 1e-6);

        const auto strong = counterexample_run(-1.0, 1.0, 500.0);
        CHECK(std::abs(strong.full_exponent) < 0.02);

        std::ostringstream os;
        write_counterexample_csv(os, rep);
        std::istringstream is(os.str());
        std::string header, first;
        std::getline(is, header);
        std::getline(is, first);
        CHECK(header == "t,y1,y2,log_norm_over_t");
        CHECK(first.rfind("0.01,", 0) == 0);
    }

    TEST_CASE("liao standard map: the orbit tracks itself")
    {
        const auto spec = lorenz();
        const auto run = liao_full_standard_system(spec, spec, spec.default_x0, Mat::Identity(3, 3), Vec::Zero(3), 5.0,
                                                   SolverConfig::frame_default());
        double zmax = 0.0;
        for (const auto& z : run.z) zmax = std::max(zmax, z.norm());
        CHECK(zmax == 0.0);
        CHECK(run.max_residual <= 1e-8);
    }

    TEST_CASE("liao standard map is conjugate to the perturbed flow")
    {
        const auto spec = lorenz();
        Vec z0(3);
        z0 << 1e-3, -5e-4, 2e-4;
        const auto run = liao_full_standard_system(spec, spec, spec.default_x0, random_orthonormal_frame(3, 3, 5), z0,
                                                   5.0, SolverConfig::frame_default());
        CHECK(run.max_residual <= 1e-6);
    }

    TEST_CASE("constant perturbation of a linear base has a closed form")
    {
        // x = 0, Q = I, so dz/dt = D z + eps and z_i = eps (e^{d_i t} - 1) / d_i.
        const auto spec = linear_diag({2.0, 0.0, -1.0});
        const double eps = 1e-3;
        const auto X = add_constant(spec, Vec::Constant(3, eps));
        const auto run = liao_full_standard_system(spec, X, Vec::Zero(3), Mat::Identity(3, 3), Vec::Zero(3), 2.0,
                                                   SolverConfig::frame_default());
        const double rates[] = {2.0, 0.0, -1.0};
        for (std::size_t i = 0; i < run.times.size(); i += 20) {
            const double t = run.times[i];
            for (int k = 0; k < 3; ++k) {
                const double d = rates[k];
                const double exact = d == 0.0 ? eps * t : eps * (std::exp(d * t) - 1.0) / d;
                CHECK(std::abs(run.z[i](k) - exact) < 1e-6);
            }
        }
        CHECK(run.max_residual <= 1e-8);
    }

    TEST_CASE("leaving the validity ball aborts")
    {
        const auto spec = linear_diag({2.0, 0.0, -1.0});
        const auto X = add_constant(spec, Vec::Constant(3, 1.0));
        CHECK_THROWS_AS(liao_full_standard_system(spec, X, Vec::Zero(3), Mat::Identity(3, 3), Vec::Zero(3), 5.0,
                                                  SolverConfig::frame_default()),
                        ValidityError);
    }

    TEST_CASE("reduced perturbation of a field difference")
    {
        const auto spec = linear_diag({2.0, 0.0, -1.0});
        const auto run = evolve_frame(spec, Vec::Zero(3), random_orthonormal_frame(3, 3, 12), 3.0,
                                      SolverConfig::frame_default());
        const std::vector<int> sel{0, 2};

        const auto same = build_reduced_perturbation(spec, spec, run, sel);
        CHECK(same.eval(1.0, Vec::Zero(2)).norm() == 0.0);
        CHECK(same.eval(1.3, Vec::Ones(2)).norm() < 1e-12);  // linear base: no remainder

        Vec c(3);
        c << 0.3, -0.2, 0.1;
        const auto shifted = build_reduced_perturbation(spec, add_constant(spec, c), run, sel);
        const Vec f0 = shifted.eval(2.0, Vec::Zero(2));
        CHECK(f0.norm() <= c.norm() + 1e-12);
        const Mat q = run.states[200].Q;
        CHECK(f0(0) == doctest::Approx(q.col(0).dot(c)).epsilon(1e-9));
        CHECK(f0(1) == doctest::Approx(q.col(2).dot(c)).epsilon(1e-9));

        // X - S = eps * x_0^2 e_0 gives |f| <= eps |z|^2 <= eps on the unit ball.
        const double eps = 0.05;
        const auto quad = polynomial_field(3, {PolynomialTerm{0, eps, {2, 0, 0}}}, "quadratic");
        const auto curved = build_reduced_perturbation(spec, add_fields(spec, quad), run, sel);
        const auto probe = probe_perturbation(curved, 0.0, 3.0, 1.0, 3000, 99);
        CHECK(probe.sup_norm <= eps * (1.0 + 1e-9));
        CHECK(curved.bound <= 1.1 * eps * (1.0 + 1e-9));
        CHECK(curved.bound > 0.0);

        CHECK_THROWS_AS(build_reduced_perturbation(spec, spec, run, {0, 3}), IndexError);
        CHECK_THROWS_AS(curved.eval(10.0, Vec::Zero(2)), CoverageError);
    }

    TEST_CASE("bounds and lipschitz constants hold on probes")
    {
        for (auto kind : {PerturbationKind::constant_vector, PerturbationKind::sinusoid, PerturbationKind::saturating}) {
            for (double L : {0.1, 1.0, 10.0}) {
                const auto f = perturbation_with_bound(kind, 3, L, 2.0, 1.5);
                CHECK(f.bound == doctest::Approx(L));
                const auto probe = probe_perturbation(f, 0.0, 100.0, 5.0, 500, 4);
                CHECK(probe.within_bound);
                CHECK(probe.within_lipschitz);
            }
        }
    }

    TEST_CASE("perturbations parse from json with pointers in errors")
    {
        const auto f = perturbation_from_json(nlohmann::json::parse(R"({"kind":"tanh","L":2,"gain":3})"), 2);
        CHECK(f.kind == PerturbationKind::saturating);
        CHECK(f.bound == doctest::Approx(2.0));
        CHECK(f.lipschitz == doctest::Approx(3.0 * 2.0 / std::sqrt(2.0)));
        const auto g = perturbation_from_json(nlohmann::json::parse(R"({"kind":"constant_vector","vector":[1,2]})"), 2);
        CHECK(g.eval(0.0, Vec::Zero(2)) == Vec::LinSpaced(2, 1.0, 2.0));
        try {
            (void)perturbation_from_json(nlohmann::json::parse(R"({"kind":"sinusoid","amplitude":[1]})"), 2, "/p/0");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("/p/0/amplitude") != std::string::npos);
        }
    }

    TEST_CASE("saturating forcing stays finite at astronomical scales")
    {
        const auto f = saturating_perturbation(Vec::Ones(2), 1.0);
        Vec u(2);
        u << 0.5, -0.25;
        Vec out(2);
        f.eval_scaled(0.0, u, 2000.0, out);
        CHECK(out.allFinite());
        CHECK(out(0) >= 0.0);
        CHECK(out(1) <= 0.0);
    }
}
