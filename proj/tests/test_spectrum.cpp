#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lyapframe/errors.hpp"
#include "lyapframe/spectrum.hpp"

using namespace lyapframe;

namespace {

// Exact window average of 0.5 + sin t over [a, a + T].
double sine_window_average(double a, double T)
{
    return 0.5 + (std::cos(a) - std::cos(a + T)) / T;
}

} // namespace

TEST_SUITE("spectrum")
{
    TEST_CASE("linear spectra are recovered exactly")
    {
        const auto cfg = SolverConfig::frame_default();
        const auto diag = estimate_spectrum(linear_diag({2.0, 0.0, -1.0}), Vec::Zero(3), 3, 200.0, -1.0, cfg, 1);
        CHECK(diag.values(0) == doctest::Approx(2.0).epsilon(1e-6));
        CHECK(std::abs(diag.values(1)) < 1e-6);
        CHECK(diag.values(2) == doctest::Approx(-1.0).epsilon(1e-6));
        CHECK(diag.burn_in == doctest::Approx(20.0));
        CHECK(diag.is_zero == std::vector<bool>{false, true, false});

        const auto nn = estimate_spectrum(linear_nonnormal(), Vec::Zero(2), 2, 200.0, -1.0, cfg, 1);
        CHECK(nn.values(0) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(nn.values(1) == doctest::Approx(-1.0).epsilon(1e-6));
    }

    TEST_CASE("checkpoints double from the burn-in")
    {
        const auto est = estimate_spectrum(linear_diag({1.0, -1.0}), Vec::Zero(2), 2, 200.0, 20.0,
                                           SolverConfig::frame_default(), 3);
        std::vector<double> times;
        for (const auto& c : est.history) times.push_back(c.time);
        CHECK(times == std::vector<double>{40.0, 80.0, 160.0, 200.0});
        CHECK(doubling_converged(est));
    }

    TEST_CASE("zero classification, convergence and simplicity")
    {
        ExponentEstimate est;
        est.values = Vec(3);
        est.values << 1.0, 0.0004, -2.0;
        est.history = {{10.0, est.values}, {20.0, est.values}};
        const auto cls = classify_zero(est, 0.01);
        CHECK(cls.selected == std::vector<int>{0, 2});
        CHECK(cls.nonzero_count == 2);
        CHECK(cls.warnings.empty());

        est.values << 1.0, 1.005, -2.0;
        est.history = {{10.0, est.values}, {20.0, est.values}};
        CHECK_FALSE(classify_zero(est, 0.01).warnings.empty());

        ExponentEstimate drifting = est;
        drifting.history[0].values(0) += 0.1;
        CHECK_THROWS_AS(classify_zero(drifting, 0.01), ConvergenceError);

        Vec tiny(2);
        tiny << 1e-5, -1e-5;
        CHECK(default_epsilon_zero(tiny) == 1e-3);
        Vec wide(2);
        wide << 2.0, -1.0;
        CHECK(default_epsilon_zero(wide) == doctest::Approx(0.15));
    }

    TEST_CASE("birkhoff averages of piecewise-linear data are exact")
    {
        std::vector<double> t, f, g;
        for (int i = 0; i <= 1000; ++i) {
            t.push_back(0.01 * i);
            f.push_back(3.0 * t.back() - 1.0);
            g.push_back(std::sin(t.back()));
        }
        CHECK(birkhoff_average(t, f, 10.0) == doctest::Approx(14.0).epsilon(1e-12));
        CHECK(birkhoff_average(t, f, 4.0) == doctest::Approx(5.0).epsilon(1e-12));
        CHECK(birkhoff_average(t, g, 10.0) == doctest::Approx((1.0 - std::cos(10.0)) / 10.0).epsilon(1e-5));
    }

    TEST_CASE("window deviations match exact sine averages")
    {
        const auto tape = synthetic_scalar_tape(0.5, 1.0, 1.0, 0.0, 400.0, 0.01);
        const Vec target = Vec::Constant(1, 0.5);
        const double T = 7.0;
        const std::vector<double> offsets{0.0, 1.0, 2.0, 4.0, 8.0};
        const auto st = window_deviation_stats(tape, target, T, 1, offsets, 4, 0.05);
        for (std::size_t j = 0; j < offsets.size(); ++j) {
            double running = 0.0;
            for (int tau = 0; tau < 4; ++tau) {
                const double a = (offsets[j] + tau) * T;
                const double h = std::abs(0.5 - sine_window_average(a, T));
                CHECK(st.per_window[j][static_cast<std::size_t>(tau)](0) == doctest::Approx(h).epsilon(1e-4));
                running += h;
                CHECK(st.aggregate[j][static_cast<std::size_t>(tau)] ==
                      doctest::Approx(running / (tau + 1)).epsilon(1e-4));
            }
        }
        // Backward windows end at s*T.
        const auto back = window_deviation_stats(tape, target, T, -1, {8.0}, 4, 0.05);
        const double a = (8.0 - 1.0) * T;
        CHECK(back.per_window[0][0](0) == doctest::Approx(std::abs(0.5 - sine_window_average(a, T))).epsilon(1e-4));

        std::ostringstream os;
        write_window_stats_csv(os, st);
        CHECK(os.str().rfind("window_index,h_1,h_max\n", 0) == 0);
    }

    TEST_CASE("window finder terminates with a threshold or a reason")
    {
        const auto tape = synthetic_scalar_tape(0.5, 1.0, 1.0, 0.0, 2000.0, 0.01);
        const Vec target = Vec::Constant(1, 0.5);
        const auto res = find_window_threshold(tape, target, 1, default_offsets(), 4, 0.05);
        REQUIRE(res.found);
        // |h| <= 2 / T, so T = 64 already suffices.
        CHECK(res.window <= 64.0);
        CHECK(res.trail.back().second < 0.05);
        for (std::size_t i = 0; i + 1 < res.trail.size(); ++i) CHECK(res.trail[i].second >= 0.05);

        const auto starved = find_window_threshold(tape, Vec::Constant(1, 0.9), 1, default_offsets(), 4, 0.05);
        CHECK_FALSE(starved.found);
        CHECK(starved.stop_reason.find("coverage") != std::string::npos);
        CHECK_THROWS_AS(window_deviation_stats(tape, target, 500.0, 1, default_offsets(), 4, 0.05), CoverageError);
    }
}
