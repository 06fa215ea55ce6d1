#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "lyapframe/errors.hpp"
#include "lyapframe/frame_flow.hpp"

using namespace lyapframe;

namespace {

Mat random_matrix(int n, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = g(rng) * 0.5;
    return a;
}

} // namespace

TEST_SUITE("frame_flow")
{
    TEST_CASE("omega and the frame generator match differentiated gram-schmidt")
    {
        // For a linear field, Q(t) = GS(exp(A t) Q0); central differences of
        // Q(t) and log zeta(t) at t = 0 give the generator independently.
        const Mat a = random_matrix(4, 3);
        const auto spec = linear_field(a);
        const Mat q0 = random_orthonormal_frame(4, 3, 9);
        const double h = 1e-5;
        const auto plus = gram_schmidt(Frame{(a * h).exp() * q0});
        const auto minus = gram_schmidt(Frame{(a * -h).exp() * q0});
        const Mat dq = (plus.Q - minus.Q) / (2 * h);
        const Vec dlog = (plus.zeta.array().log() - minus.zeta.array().log()).matrix() / (2 * h);

        const Vec x = Vec::Zero(4);
        const Vec omega = omega_values(spec, x, q0);
        CHECK((omega - dlog).cwiseAbs().maxCoeff() < 1e-7);

        const Mat c = q0.transpose() * a * q0;
        const Mat predicted = a * q0 - q0 * frame_generator(c);
        CHECK((predicted - dq).cwiseAbs().maxCoeff() < 1e-7);

        const Mat r = coupling_values(spec, x, q0);
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                if (j > k) CHECK(r(j, k) == doctest::Approx(c(k, j) + c(j, k)));
                else CHECK(r(j, k) == 0.0);
            }
    }

    TEST_CASE("growth ledger equals gram-schmidt norms of exp(A T) Q0")
    {
        const Mat a = random_matrix(3, 21);
        const auto spec = linear_field(a);
        const Mat q0 = random_orthonormal_frame(3, 2, 4);
        const double T = 3.0;
        const auto run = evolve_frame(spec, Vec::Zero(3), q0, T, SolverConfig::frame_default());
        const auto gs = gram_schmidt(Frame{(a * T).exp() * q0});
        const Vec expected = gs.zeta.array().log();
        CHECK((run.final_state().log_zeta - expected).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((run.final_state().Q - gs.Q).cwiseAbs().maxCoeff() < 1e-9);
    }

    TEST_CASE("ledger identity and orthonormality along lorenz")
    {
        const auto spec = lorenz();
        const double T = 50.0;
        const auto run = evolve_frame(spec, spec.default_x0, random_orthonormal_frame(3, 3, 1), T,
                                      SolverConfig::frame_default());
        CHECK(ledger_identity_residual(run).maxCoeff() <= 1e-5 * (1.0 + T));
        for (const auto& s : run.states) CHECK(orthonormality_defect(s.Q) < 1e-6);
        // Full frame: sum of omega is the divergence, -41/3 everywhere.
        double worst = 0.0;
        for (std::size_t i = 0; i < run.tape.size(); ++i)
            worst = std::max(worst, std::abs(run.tape.omega[i].sum() + 41.0 / 3.0));
        CHECK(worst < 1e-8);
        CHECK(run.tape.max_abs_entry() <= run.tape.entry_bound());
    }

    TEST_CASE("forward frames order rates descending, the backward sweep ascending")
    {
        const auto spec = linear_diag({2.0, 0.0, -1.0});
        const Mat seed = random_orthonormal_frame(3, 3, 8);
        const auto fwd = evolve_frame(spec, Vec::Zero(3), seed, 40.0, SolverConfig::frame_default());
        const auto asc = evolve_frame_ascending(spec, Vec::Zero(3), seed, 40.0, 20.0, SolverConfig::frame_default());
        CHECK(fwd.order == FrameOrder::descending);
        CHECK(asc.order == FrameOrder::ascending);
        const Vec f = fwd.tape.omega_average(20.0, 40.0);
        const Vec b = asc.tape.omega_average(0.0, 40.0);
        CHECK(f(0) == doctest::Approx(2.0).epsilon(1e-6));
        CHECK(f(2) == doctest::Approx(-1.0).epsilon(1e-6));
        CHECK(b(0) == doctest::Approx(-1.0).epsilon(1e-9));
        CHECK(std::abs(b(1)) < 1e-9);
        CHECK(b(2) == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(asc.states.front().t == 0.0);
        CHECK(asc.states.back().t == doctest::Approx(40.0));
        CHECK(asc.states.front().log_zeta.cwiseAbs().maxCoeff() == 0.0);
        CHECK(ledger_identity_residual(asc).maxCoeff() <= 1e-5 * 41.0);
    }

    TEST_CASE("negative durations run the frame backwards")
    {
        const auto spec = linear_diag({1.0, -1.0});
        const auto run = evolve_frame(spec, Vec::Zero(2), Mat::Identity(2, 2), -2.0, SolverConfig::frame_default());
        CHECK(run.final_state().t == doctest::Approx(-2.0));
        CHECK(run.final_state().log_zeta(0) == doctest::Approx(-2.0).epsilon(1e-10));
        CHECK(run.final_state().log_zeta(1) == doctest::Approx(2.0).epsilon(1e-10));
        CHECK(run.tape.times.front() < run.tape.times.back());
    }

    TEST_CASE("qual tape csv round-trips bit for bit")
    {
        const auto spec = van_der_pol(1.0);
        const auto run = evolve_frame(spec, spec.default_x0, Mat::Identity(2, 2), 2.0, SolverConfig::frame_default());
        std::stringstream ss;
        write_qual_tape_csv(ss, run.tape);
        const auto back = read_qual_tape_csv(ss);
        REQUIRE(back.size() == run.tape.size());
        CHECK(back.frame_count == 2);
        for (std::size_t i = 0; i < back.size(); ++i) {
            CHECK(back.times[i] == run.tape.times[i]);
            CHECK(back.omega[i] == run.tape.omega[i]);
            CHECK(back.coupling[i] == run.tape.coupling[i]);
        }
    }

    TEST_CASE("non-orthonormal start frames are rejected")
    {
        const auto spec = linear_diag({1.0, 2.0});
        Mat q(2, 2);
        q << 1, 1, 0, 1;
        CHECK_THROWS_AS(evolve_frame(spec, Vec::Zero(2), q, 1.0, SolverConfig::frame_default()), OrthonormalityError);
    }
}
