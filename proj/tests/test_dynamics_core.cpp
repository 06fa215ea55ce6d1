#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "lyapframe/errors.hpp"
#include "lyapframe/flow.hpp"
#include "lyapframe/gram_schmidt.hpp"
#include "lyapframe/ode.hpp"
#include "lyapframe/vector_field.hpp"

using namespace lyapframe;

namespace {

Vec random_point(int n, std::mt19937_64& rng, double scale)
{
    std::uniform_real_distribution<double> u(-scale, scale);
    Vec x(n);
    for (int i = 0; i < n; ++i) x(i) = u(rng);
    return x;
}

// Gram determinant identity: zeta_k is the distance from v_k to span(v_1..v_{k-1}).
double distance_to_span(const Mat& v, int k)
{
    if (k == 0) return v.col(0).norm();
    const Mat basis = v.leftCols(k);
    const Vec coef = basis.colPivHouseholderQr().solve(Vec(v.col(k)));
    return (v.col(k) - basis * coef).norm();
}

} // namespace

TEST_SUITE("dynamics_core")
{
    TEST_CASE("analytic jacobians agree with central differences")
    {
        std::mt19937_64 rng(5);
        for (const auto& name : builtin_names()) {
            const auto spec = builtin_field(name);
            for (int trial = 0; trial < 5; ++trial) {
                const Vec x = random_point(spec.dim, rng, 3.0);
                const Mat a = eval_jacobian(spec, x);
                const Mat fd = finite_difference_jacobian(spec, x);
                CHECK_MESSAGE((a - fd).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + a.norm()), name);
                CHECK(divergence(spec, x) == doctest::Approx(a.trace()).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("polynomial field from json reproduces lorenz")
    {
        const auto j = nlohmann::json::parse(R"({"dim":3,"terms":[
            {"target":0,"coef":-10,"monomial":[1,0,0]},{"target":0,"coef":10,"monomial":[0,1,0]},
            {"target":1,"coef":28,"monomial":[1,0,0]},{"target":1,"coef":-1,"monomial":[0,1,0]},
            {"target":1,"coef":-1,"monomial":[1,0,1]},
            {"target":2,"coef":1,"monomial":[1,1,0]},{"target":2,"coef":-2.6666666666666665,"monomial":[0,0,1]}]})");
        const auto poly = field_from_json(j);
        const auto ref = lorenz();
        std::mt19937_64 rng(2);
        for (int trial = 0; trial < 10; ++trial) {
            const Vec x = random_point(3, rng, 10.0);
            CHECK((eval_field(poly, x) - eval_field(ref, x)).norm() < 1e-12);
            CHECK((eval_jacobian(poly, x) - eval_jacobian(ref, x)).norm() < 1e-12);
        }
    }

    TEST_CASE("malformed field configs carry json pointers")
    {
        const auto j = nlohmann::json::parse(R"({"dim":2,"terms":[{"target":0,"coef":"x","monomial":[1,0]}]})");
        try {
            (void)field_from_json(j);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("/terms/0/coef") != std::string::npos);
        }
        CHECK_THROWS_AS(builtin_field("no_such_field"), ConfigError);
    }

    TEST_CASE("fixed and adaptive solvers match a forced linear ODE")
    {
        // y' = -2y + sin t, y(0) = 1
        auto exact = [](double t) {
            const double c = 1.0 + 1.0 / 5.0;
            return c * std::exp(-2.0 * t) + (2.0 * std::sin(t) - std::cos(t)) / 5.0;
        };
        OdeRhs rhs = [](double t, const Vec& y, Vec& dy) {
            dy.resize(1);
            dy(0) = -2.0 * y(0) + std::sin(t);
        };
        for (auto cfg : {SolverConfig::frame_default(), SolverConfig::oracle()}) {
            Vec y = Vec::Ones(1);
            std::vector<double> times;
            double worst = 0.0;
            integrate(rhs, y, 0.0, 5.0, cfg, {}, [&](double t, const Vec& v) {
                times.push_back(t);
                worst = std::max(worst, std::abs(v(0) - exact(t)));
            });
            CHECK(worst < 1e-8);
            REQUIRE(times.size() == 501);
            for (std::size_t k = 0; k < times.size(); ++k) CHECK(times[k] == doctest::Approx(0.01 * k).epsilon(1e-13));
        }
    }

    TEST_CASE("backward integration retraces the harmonic oscillator")
    {
        const auto spec = harmonic_oscillator(2.0);
        const Vec x0 = spec.default_x0;
        const auto fwd = integrate_flow(spec, x0, 0.0, 3.0, SolverConfig::frame_default());
        const auto back = integrate_flow(spec, fwd.back(), 3.0, 0.0, SolverConfig::frame_default());
        CHECK((back.back() - x0).norm() < 1e-10);
        const double t = 3.0;
        Vec exact(2);
        exact << std::cos(2.0 * t), -2.0 * std::sin(2.0 * t);
        CHECK((fwd.back() - exact).norm() < 1e-9);
    }

    TEST_CASE("variational flow of a linear field is the matrix exponential")
    {
        const auto spec = linear_nonnormal();
        Mat a(2, 2);
        a << 1.0, 3.0, 0.0, -1.0;
        const auto res = integrate_variational(spec, Vec::Zero(2), Mat::Identity(2, 2), 0.0, 2.0,
                                               SolverConfig::frame_default());
        const Mat expected = (a * 2.0).exp();
        CHECK((res.tangents.back() - expected).norm() < 1e-9 * expected.norm());
        CHECK(res.warnings.empty());
    }

    TEST_CASE("Liouville: det V(1) for lorenz equals exp(-41/3)")
    {
        const auto spec = lorenz();
        const auto res = integrate_variational(spec, spec.default_x0, Mat::Identity(3, 3), 0.0, 1.0,
                                               SolverConfig::oracle());
        const double det = res.tangents.back().determinant();
        CHECK(det == doctest::Approx(std::exp(-41.0 / 3.0)).epsilon(1e-6));
    }

    TEST_CASE("plain tangent vectors collapse on lorenz over T = 10")
    {
        const auto spec = lorenz();
        const auto res = integrate_variational(spec, spec.default_x0, Mat::Identity(3, 3), 0.0, 10.0,
                                               SolverConfig::frame_default());
        CHECK_FALSE(res.warnings.empty());
    }

    TEST_CASE("blow-up is reported with time and norm")
    {
        const auto spec = linear_diag({2.0});
        try {
            (void)integrate_flow(spec, Vec::Ones(1), 0.0, 10.0, SolverConfig::frame_default());
            FAIL("expected BlowUpError");
        } catch (const BlowUpError& e) {
            CHECK(e.time == doctest::Approx(std::log(1e6) / 2.0).epsilon(1e-3));
            CHECK(e.state_norm > 1e6);
        }
    }

    TEST_CASE("gram-schmidt matrix: unit diagonal, orthogonal columns, distance norms")
    {
        std::mt19937_64 rng(17);
        for (int trial = 0; trial < 20; ++trial) {
            const int n = 2 + trial % 4;
            const int l = 1 + trial % n;
            Mat v(n, l);
            for (int j = 0; j < l; ++j) v.col(j) = random_point(n, rng, 1.0);
            const auto gs = gram_schmidt(Frame{v});
            CHECK((gs.Gamma.diagonal() - Vec::Ones(l)).cwiseAbs().maxCoeff() == 0.0);
            CHECK(gs.Gamma.isUpperTriangular());
            const Mat w = v * gs.Gamma;
            const Mat gram = w.transpose() * w;
            for (int j = 0; j < l; ++j) {
                CHECK(gs.zeta(j) == doctest::Approx(distance_to_span(v, j)).epsilon(1e-10));
                CHECK(std::sqrt(gram(j, j)) == doctest::Approx(gs.zeta(j)).epsilon(1e-10));
                for (int k = 0; k < j; ++k) CHECK(std::abs(gram(j, k)) < 1e-10);
            }
            CHECK(orthonormality_defect(gs.Q) < 1e-14);
        }
    }

    TEST_CASE("dependent frame names the offending column")
    {
        Mat v(3, 3);
        v << 1, 0, 1, 0, 1, 1, 0, 0, 0;
        try {
            (void)gram_schmidt(Frame{v});
            FAIL("expected DegenerateFrameError");
        } catch (const DegenerateFrameError& e) {
            CHECK(e.column == 2);
        }
        CHECK_FALSE(Frame{v}.is_independent());
    }

    TEST_CASE("seeded random frames are orthonormal and reproducible")
    {
        const Mat a = random_orthonormal_frame(5, 3, 42);
        const Mat b = random_orthonormal_frame(5, 3, 42);
        CHECK(a == b);
        CHECK(orthonormality_defect(a) < 1e-14);
        CHECK(a != random_orthonormal_frame(5, 3, 43));
    }

    TEST_CASE("solver config rejects nonsense")
    {
        SolverConfig c;
        c.step = -1.0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        CHECK(method_from_string(to_string(Method::adaptive_rk45)) == Method::adaptive_rk45);
    }
}
