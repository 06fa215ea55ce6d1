#include "lyapframe/qual_tape.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "lyapframe/csv.hpp"
#include "lyapframe/errors.hpp"
#include "lyapframe/quadrature.hpp"

namespace lyapframe {

double QualTape::entry_bound() const
{
    if (jac_norm.empty()) throw Error("QualTape: no Jacobian norms recorded (synthetic tape)");
    return 2.0 * *std::max_element(jac_norm.begin(), jac_norm.end());
}

double QualTape::max_abs_entry() const
{
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        m = std::max(m, omega[i].cwiseAbs().maxCoeff());
        if (frame_count > 1) m = std::max(m, coupling[i].cwiseAbs().maxCoeff());
    }
    return m;
}

double QualTape::omega_integral(int k, double a, double b) const
{
    return integrate_piecewise_linear(times, [&](std::size_t i) { return omega[i](k); }, a, b);
}

Vec QualTape::omega_average(double a, double b) const
{
    Vec out(frame_count);
    for (int k = 0; k < frame_count; ++k) out(k) = omega_integral(k, a, b) / (b - a);
    return out;
}

void write_qual_tape_csv(std::ostream& os, const QualTape& tape)
{
    const int l = tape.frame_count;
    os << 't';
    for (int k = 1; k <= l; ++k) os << ",omega_" << k;
    for (int j = 1; j < l; ++j)
        for (int k = 0; k < j; ++k) os << ",r_" << j + 1 << k + 1;
    os << '\n';
    std::vector<double> row;
    for (std::size_t i = 0; i < tape.size(); ++i) {
        row.clear();
        row.push_back(tape.times[i]);
        for (int k = 0; k < l; ++k) row.push_back(tape.omega[i](k));
        for (int j = 1; j < l; ++j)
            for (int k = 0; k < j; ++k) row.push_back(tape.coupling[i](j, k));
        write_csv_row(os, row);
    }
}

QualTape read_qual_tape_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line)) throw Error("qual tape CSV: missing header");
    const auto header = split_csv_line(line);
    int l = 0;
    while (l + 1 < static_cast<int>(header.size()) && header[l + 1].rfind("omega_", 0) == 0) ++l;
    if (l == 0 || header.front() != "t" || static_cast<int>(header.size()) != 1 + l + l * (l - 1) / 2)
        throw Error("qual tape CSV: malformed header");
    QualTape tape;
    tape.frame_count = l;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) throw Error("qual tape CSV: row width differs from header");
        std::size_t c = 0;
        tape.times.push_back(parse_double(cells[c++]));
        Vec w(l);
        for (int k = 0; k < l; ++k) w(k) = parse_double(cells[c++]);
        Mat r = Mat::Zero(l, l);
        for (int j = 1; j < l; ++j)
            for (int k = 0; k < j; ++k) r(j, k) = parse_double(cells[c++]);
        tape.omega.push_back(std::move(w));
        tape.coupling.push_back(std::move(r));
    }
    return tape;
}

QualTape sampled_tape(int l, const QualSampler& sampler, double t0, double t1, double stride)
{
    if (!(t1 > t0) || !(stride > 0.0)) throw ConfigError("sampled_tape: need t1 > t0 and stride > 0");
    QualTape tape;
    tape.frame_count = l;
    const long n = static_cast<long>(std::ceil((t1 - t0) / stride - 1e-9));
    for (long i = 0; i <= n; ++i) {
        const double t = (i == n) ? t1 : t0 + static_cast<double>(i) * stride;
        auto [w, r] = sampler(t);
        if (w.size() != l || r.rows() != l || r.cols() != l) throw DimensionError("sampled_tape: sampler shape mismatch");
        r.triangularView<Eigen::Upper>().setZero();
        tape.times.push_back(t);
        tape.omega.push_back(std::move(w));
        tape.coupling.push_back(std::move(r));
    }
    return tape;
}

QualTape constant_tape(const Vec& omega, const Mat& coupling, double t0, double t1, double stride)
{
    return sampled_tape(static_cast<int>(omega.size()), [&](double) { return std::make_pair(omega, coupling); }, t0,
                        t1, stride);
}

QualTape synthetic_scalar_tape(double rate, double amplitude, double frequency, double t0, double t1,
                               double stride)
{
    return sampled_tape(
        1,
        [=](double t) {
            Vec w(1);
            w(0) = rate + amplitude * std::sin(frequency * t);
            return std::make_pair(w, Mat(Mat::Zero(1, 1)));
        },
        t0, t1, stride);
}

} // namespace lyapframe
