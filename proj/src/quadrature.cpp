#include "lyapframe/quadrature.hpp"

#include <algorithm>

#include "lyapframe/errors.hpp"

namespace lyapframe {

std::size_t locate_interval(std::span<const double> times, double t)
{
    if (times.size() < 2) return 0;
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 0;
    const auto i = static_cast<std::size_t>(it - times.begin()) - 1;
    return std::min(i, times.size() - 2);
}

double integrate_piecewise_linear(std::span<const double> times, const std::function<double(std::size_t)>& value,
                                  double a, double b)
{
    if (times.size() < 2) throw CoverageError("integrate_piecewise_linear: need at least two samples");
    const double slack = 1e-9 * std::max(1.0, std::abs(times.back() - times.front()));
    if (a < times.front() - slack || b > times.back() + slack || a > b)
        throw CoverageError("integrate_piecewise_linear: interval outside the sampled range");
    a = std::max(a, times.front());
    b = std::min(b, times.back());
    auto interp = [&](std::size_t i, double t) {
        const double w = (t - times[i]) / (times[i + 1] - times[i]);
        return (1.0 - w) * value(i) + w * value(i + 1);
    };
    std::size_t i = locate_interval(times, a);
    const std::size_t j = locate_interval(times, b);
    if (i == j) return 0.5 * (interp(i, a) + interp(i, b)) * (b - a);
    double total = 0.5 * (interp(i, a) + value(i + 1)) * (times[i + 1] - a);
    for (std::size_t k = i + 1; k < j; ++k) total += 0.5 * (value(k) + value(k + 1)) * (times[k + 1] - times[k]);
    total += 0.5 * (value(j) + interp(j, b)) * (b - times[j]);
    return total;
}

} // namespace lyapframe
