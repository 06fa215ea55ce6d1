#include "lyapframe/vector_field.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "lyapframe/errors.hpp"

namespace lyapframe {

namespace {

void check_dim(const VectorFieldSpec& spec, Eigen::Index size)
{
    if (size != spec.dim) {
        std::ostringstream os;
        os << spec.name << ": expected a point of dimension " << spec.dim << ", got " << size;
        throw DimensionError(os.str());
    }
}

std::vector<double> parse_numbers(std::string_view text)
{
    std::vector<double> out;
    while (!text.empty()) {
        auto comma = text.find(',');
        auto piece = text.substr(0, comma);
        while (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
        while (!piece.empty() && piece.back() == ' ') piece.remove_suffix(1);
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), v);
        if (ec != std::errc{} || ptr != piece.data() + piece.size())
            throw ConfigError("cannot parse number '" + std::string(piece) + "' in field parameters");
        out.push_back(v);
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return out;
}

std::string join_numbers(const std::vector<double>& values)
{
    std::ostringstream os;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) os << ',';
        os << values[i];
    }
    return os.str();
}

} // namespace

Vec eval_field(const VectorFieldSpec& spec, const Eigen::Ref<const Vec>& x)
{
    check_dim(spec, x.size());
    Vec out(spec.dim);
    spec.field(x, out);
    if (!out.allFinite()) throw Error(spec.name + ": non-finite field value (point outside the field's domain)");
    return out;
}

Mat finite_difference_jacobian(const VectorFieldSpec& spec, const Eigen::Ref<const Vec>& x)
{
    check_dim(spec, x.size());
    const int n = spec.dim;
    const double h = 1e-6 * std::max(1.0, x.norm());
    Mat jac(n, n);
    Vec xp = x, xm = x, fp(n), fm(n);
    for (int j = 0; j < n; ++j) {
        xp(j) = x(j) + h;
        xm(j) = x(j) - h;
        spec.field(xp, fp);
        spec.field(xm, fm);
        jac.col(j) = (fp - fm) / (2.0 * h);
        xp(j) = x(j);
        xm(j) = x(j);
    }
    return jac;
}

Mat eval_jacobian(const VectorFieldSpec& spec, const Eigen::Ref<const Vec>& x)
{
    check_dim(spec, x.size());
    if (!spec.jacobian) return finite_difference_jacobian(spec, x);
    Mat jac(spec.dim, spec.dim);
    spec.jacobian(x, jac);
    return jac;
}

double divergence(const VectorFieldSpec& spec, const Eigen::Ref<const Vec>& x)
{
    check_dim(spec, x.size());
    if (spec.divergence) return spec.divergence(x);
    return eval_jacobian(spec, x).trace();
}

VectorFieldSpec linear_field(const Mat& a, std::string name)
{
    if (a.rows() != a.cols() || a.rows() == 0) throw DimensionError("linear field needs a non-empty square matrix");
    VectorFieldSpec s;
    s.name = std::move(name);
    s.dim = static_cast<int>(a.rows());
    s.field = [a](const Eigen::Ref<const Vec>& x, Eigen::Ref<Vec> out) { out.noalias() = a * x; };
    s.jacobian = [a](const Eigen::Ref<const Vec>&, Eigen::Ref<Mat> out) { out = a; };
    const double tr = a.trace();
    s.divergence = [tr](const Eigen::Ref<const Vec>&) { return tr; };
    // The origin is the invariant (Dirac) measure for linear flows.
    s.default_x0 = Vec::Zero(s.dim);
    return s;
}

VectorFieldSpec linear_diag(const std::vector<double>& rates)
{
    if (rates.empty()) throw ConfigError("linear_diag needs at least one rate");
    Vec d = Eigen::Map<const Vec>(rates.data(), static_cast<Eigen::Index>(rates.size()));
    return linear_field(d.asDiagonal(), "linear_diag:" + join_numbers(rates));
}

VectorFieldSpec linear_nonnormal()
{
    Mat a(2, 2);
    a << 1.0, 3.0, 0.0, -1.0;
    return linear_field(a, "linear_nonnormal");
}

VectorFieldSpec rotation_field()
{
    Mat a(2, 2);
    a << 0.0, -1.0, 1.0, 0.0;
    auto s = linear_field(a, "rotation");
    s.default_x0 = Vec::Unit(2, 0);
    return s;
}

VectorFieldSpec harmonic_oscillator(double frequency)
{
    Mat a(2, 2);
    a << 0.0, 1.0, -frequency * frequency, 0.0;
    std::ostringstream name;
    name << "harmonic:" << frequency;
    auto s = linear_field(a, name.str());
    s.default_x0 = Vec::Unit(2, 0);
    return s;
}

VectorFieldSpec van_der_pol(double mu)
{
    VectorFieldSpec s;
    std::ostringstream name;
    name << "vanderpol:" << mu;
    s.name = name.str();
    s.dim = 2;
    s.field = [mu](const Eigen::Ref<const Vec>& x, Eigen::Ref<Vec> out) {
        out(0) = x(1);
        out(1) = mu * (1.0 - x(0) * x(0)) * x(1) - x(0);
    };
    s.jacobian = [mu](const Eigen::Ref<const Vec>& x, Eigen::Ref<Mat> out) {
        out(0, 0) = 0.0;
        out(0, 1) = 1.0;
        out(1, 0) = -2.0 * mu * x(0) * x(1) - 1.0;
        out(1, 1) = mu * (1.0 - x(0) * x(0));
    };
    s.divergence = [mu](const Eigen::Ref<const Vec>& x) { return mu * (1.0 - x(0) * x(0)); };
    s.default_x0 = Vec::Unit(2, 0) * 2.0;
    return s;
}

VectorFieldSpec lorenz(double sigma, double rho, double beta)
{
    VectorFieldSpec s;
    s.name = "lorenz";
    if (sigma != 10.0 || rho != 28.0 || beta != 8.0 / 3.0) {
        std::ostringstream name;
        name.precision(17);
        name << "lorenz:" << sigma << ',' << rho << ',' << beta;
        s.name = name.str();
    }
    s.dim = 3;
    s.field = [=](const Eigen::Ref<const Vec>& x, Eigen::Ref<Vec> out) {
        out(0) = sigma * (x(1) - x(0));
        out(1) = x(0) * (rho - x(2)) - x(1);
        out(2) = x(0) * x(1) - beta * x(2);
    };
    s.jacobian = [=](const Eigen::Ref<const Vec>& x, Eigen::Ref<Mat> out) {
        out << -sigma, sigma, 0.0,
               rho - x(2), -1.0, -x(0),
               x(1), x(0), -beta;
    };
    const double div = -(sigma + 1.0 + beta);
    s.divergence = [div](const Eigen::Ref<const Vec>&) { return div; };
    s.default_x0 = Vec::Ones(3);
    return s;
}

VectorFieldSpec polynomial_field(int dim, std::vector<PolynomialTerm> terms, std::string name)
{
    if (dim <= 0) throw ConfigError("polynomial field: dim must be positive");
    for (std::size_t k = 0; k < terms.size(); ++k) {
        const auto& t = terms[k];
        if (t.target < 0 || t.target >= dim)
            throw ConfigError("polynomial field: term " + std::to_string(k) + " has target out of range");
        if (static_cast<int>(t.monomial.size()) != dim)
            throw ConfigError("polynomial field: term " + std::to_string(k) + " monomial length differs from dim");
        for (int e : t.monomial)
            if (e < 0) throw ConfigError("polynomial field: negative exponent in term " + std::to_string(k));
    }
    VectorFieldSpec s;
    s.name = std::move(name);
    s.dim = dim;
    s.field = [terms](const Eigen::Ref<const Vec>& x, Eigen::Ref<Vec> out) {
        out.setZero();
        for (const auto& t : terms) {
            double m = t.coef;
            for (std::size_t j = 0; j < t.monomial.size(); ++j)
                if (t.monomial[j]) m *= std::pow(x(static_cast<Eigen::Index>(j)), t.monomial[j]);
            out(t.target) += m;
        }
    };
    s.jacobian = [terms](const Eigen::Ref<const Vec>& x, Eigen::Ref<Mat> out) {
        out.setZero();
        for (const auto& t : terms) {
            for (std::size_t d = 0; d < t.monomial.size(); ++d) {
                if (t.monomial[d] == 0) continue;
                double m = t.coef * t.monomial[d];
                for (std::size_t j = 0; j < t.monomial.size(); ++j) {
                    const int e = (j == d) ? t.monomial[j] - 1 : t.monomial[j];
                    if (e) m *= std::pow(x(static_cast<Eigen::Index>(j)), e);
                }
                out(t.target, static_cast<Eigen::Index>(d)) += m;
            }
        }
    };
    s.default_x0 = Vec::Zero(dim);
    return s;
}

VectorFieldSpec polynomial_field_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw ConfigError("/: polynomial field must be an object");
    if (!j.contains("dim") || !j["dim"].is_number_integer()) throw ConfigError("/dim: integer required");
    if (!j.contains("terms") || !j["terms"].is_array()) throw ConfigError("/terms: array required");
    const int dim = j["dim"].get<int>();
    std::vector<PolynomialTerm> terms;
    for (std::size_t k = 0; k < j["terms"].size(); ++k) {
        const auto& t = j["terms"][k];
        const std::string at = "/terms/" + std::to_string(k);
        if (!t.is_object()) throw ConfigError(at + ": object required");
        if (!t.contains("target") || !t["target"].is_number_integer()) throw ConfigError(at + "/target: integer required");
        if (!t.contains("coef") || !t["coef"].is_number()) throw ConfigError(at + "/coef: number required");
        if (!t.contains("monomial") || !t["monomial"].is_array()) throw ConfigError(at + "/monomial: array required");
        PolynomialTerm term;
        term.target = t["target"].get<int>();
        term.coef = t["coef"].get<double>();
        for (const auto& e : t["monomial"]) {
            if (!e.is_number_integer()) throw ConfigError(at + "/monomial: integer exponents required");
            term.monomial.push_back(e.get<int>());
        }
        terms.push_back(std::move(term));
    }
    std::string name = j.value("name", std::string("polynomial"));
    return polynomial_field(dim, std::move(terms), std::move(name));
}

VectorFieldSpec builtin_field(std::string_view name)
{
    const auto colon = name.find(':');
    const std::string base(name.substr(0, colon));
    std::vector<double> params;
    if (colon != std::string_view::npos) params = parse_numbers(name.substr(colon + 1));

    auto expect = [&](std::size_t lo, std::size_t hi) {
        if (params.size() < lo || params.size() > hi)
            throw ConfigError("field '" + std::string(name) + "': wrong number of parameters");
    };

    if (base == "linear_diag") {
        expect(1, 64);
        return linear_diag(params);
    }
    if (base == "linear_nonnormal") {
        expect(0, 0);
        return linear_nonnormal();
    }
    if (base == "rotation") {
        expect(0, 0);
        return rotation_field();
    }
    if (base == "harmonic") {
        expect(0, 1);
        return harmonic_oscillator(params.empty() ? 1.0 : params[0]);
    }
    if (base == "vanderpol" || base == "van_der_pol") {
        expect(0, 1);
        return van_der_pol(params.empty() ? 1.0 : params[0]);
    }
    if (base == "lorenz") {
        expect(0, 3);
        if (params.empty()) return lorenz();
        if (params.size() != 3) throw ConfigError("field 'lorenz' takes sigma,rho,beta");
        return lorenz(params[0], params[1], params[2]);
    }
    throw ConfigError("unknown field '" + std::string(name) + "'");
}

VectorFieldSpec field_from_json(const nlohmann::json& j)
{
    if (j.is_string()) return builtin_field(j.get<std::string>());
    return polynomial_field_from_json(j);
}

std::vector<std::string> builtin_names()
{
    return {"linear_diag:2,0,-1", "linear_nonnormal", "rotation", "harmonic:1", "vanderpol:1", "lorenz"};
}

VectorFieldSpec add_constant(const VectorFieldSpec& base, const Vec& c)
{
    if (c.size() != base.dim) throw DimensionError("add_constant: offset dimension mismatch");
    VectorFieldSpec s = base;
    s.name = base.name + "+const";
    auto f = base.field;
    s.field = [f, c](const Eigen::Ref<const Vec>& x, Eigen::Ref<Vec> out) {
        f(x, out);
        out += c;
    };
    return s;
}

VectorFieldSpec add_fields(const VectorFieldSpec& base, const VectorFieldSpec& delta)
{
    if (base.dim != delta.dim) throw DimensionError("add_fields: dimension mismatch");
    VectorFieldSpec s;
    s.name = base.name + "+" + delta.name;
    s.dim = base.dim;
    s.default_x0 = base.default_x0;
    auto fa = base.field;
    auto fb = delta.field;
    s.field = [fa, fb, n = base.dim](const Eigen::Ref<const Vec>& x, Eigen::Ref<Vec> out) {
        Vec tmp(n);
        fa(x, out);
        fb(x, tmp);
        out += tmp;
    };
    if (base.jacobian && delta.jacobian) {
        auto ja = base.jacobian;
        auto jb = delta.jacobian;
        s.jacobian = [ja, jb, n = base.dim](const Eigen::Ref<const Vec>& x, Eigen::Ref<Mat> out) {
            Mat tmp(n, n);
            ja(x, out);
            jb(x, tmp);
            out += tmp;
        };
    }
    return s;
}

} // namespace lyapframe
