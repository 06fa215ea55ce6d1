#include "lyapframe/flow.hpp"

#include <cmath>
#include <sstream>

#include "lyapframe/errors.hpp"

namespace lyapframe {

void check_blowup(const Eigen::Ref<const Vec>& x, double t, double bound)
{
    const double norm = x.norm();
    if (!std::isfinite(norm) || norm > bound) {
        std::ostringstream os;
        os << "blow-up at t=" << t << ": |x| = " << norm << " exceeds bound " << bound;
        throw BlowUpError(t, norm, os.str());
    }
}

TrajectoryTape integrate_flow(const VectorFieldSpec& spec, const Vec& x0, double t0, double t1,
                              const SolverConfig& cfg)
{
    if (x0.size() != spec.dim) throw DimensionError("integrate_flow: x0 dimension mismatch");
    TrajectoryTape tape;
    Vec y = x0;
    check_blowup(y, t0, cfg.blowup_bound);
    const auto& f = spec.field;
    integrate(
        [&f](double, const Vec& x, Vec& dx) { f(x, dx); }, y, t0, t1, cfg,
        [&cfg](double t, Vec& x) { check_blowup(x, t, cfg.blowup_bound); },
        [&tape](double t, const Vec& x) {
            tape.times.push_back(t);
            tape.points.push_back(x);
        });
    return tape;
}

VariationalResult integrate_variational(const VectorFieldSpec& spec, const Vec& x0, const Mat& v0, double t0,
                                        double t1, const SolverConfig& cfg)
{
    const int n = spec.dim;
    if (x0.size() != n || v0.rows() != n) throw DimensionError("integrate_variational: dimension mismatch");
    const auto k = v0.cols();
    {
        Eigen::JacobiSVD<Mat> svd(v0);
        const auto& s = svd.singularValues();
        if (k == 0 || s(k - 1) <= 1e-12 * s(0))
            throw DegenerateFrameError(static_cast<int>(k) - 1, "integrate_variational: V0 columns are dependent");
    }

    Vec y(n + n * k);
    y.head(n) = x0;
    y.tail(n * k) = Eigen::Map<const Vec>(v0.data(), n * k);

    Mat jac(n, n);
    auto rhs = [&](double, const Vec& s, Vec& ds) {
        spec.field(s.head(n), ds.head(n));
        if (spec.jacobian)
            spec.jacobian(s.head(n), jac);
        else
            jac = finite_difference_jacobian(spec, s.head(n));
        Eigen::Map<const Mat> v(s.data() + n, n, k);
        Eigen::Map<Mat> dv(ds.data() + n, n, k);
        dv.noalias() = jac * v;
    };

    VariationalResult out;
    bool warned = false;
    integrate(
        rhs, y, t0, t1, cfg, [&](double t, Vec& s) { check_blowup(s.head(n), t, cfg.blowup_bound); },
        [&](double t, const Vec& s) {
            Eigen::Map<const Mat> v(s.data() + n, n, k);
            out.trajectory.times.push_back(t);
            out.trajectory.points.push_back(s.head(n));
            out.tangents.emplace_back(v);
            if (!warned && k > 1) {
                Eigen::JacobiSVD<Mat> svd(out.tangents.back());
                const auto& sv = svd.singularValues();
                if (!(sv(k - 1) > 1e-12 * sv(0))) {
                    std::ostringstream os;
                    os << "rank collapse of V(t) at t=" << t << ": sigma_min/sigma_max = " << sv(k - 1) / sv(0)
                       << "; use the orthonormal frame flow instead";
                    out.warnings.push_back(os.str());
                    warned = true;
                }
            }
        });
    return out;
}

} // namespace lyapframe
