#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lyapframe/types.hpp"

namespace lyapframe {

using FieldFn = std::function<void(const Eigen::Ref<const Vec>& x, Eigen::Ref<Vec> out)>;
using JacobianFn = std::function<void(const Eigen::Ref<const Vec>& x, Eigen::Ref<Mat> out)>;
using ScalarFn = std::function<double(const Eigen::Ref<const Vec>& x)>;

/// An autonomous smooth vector field on R^n together with its derivative.
///
/// `jacobian` may be empty, in which case central differences with step
/// 1e-6 * max(1, |x|) are used. `divergence`, when present, must equal the
/// trace of the Jacobian.
struct VectorFieldSpec {
    std::string name;
    int dim = 0;
    FieldFn field;
    JacobianFn jacobian;
    ScalarFn divergence;
    /// Suggested starting point (on or near the invariant set of interest).
    Vec default_x0;

    bool has_analytic_jacobian() const { return static_cast<bool>(jacobian); }
};

Vec eval_field(const VectorFieldSpec& spec, const Eigen::Ref<const Vec>& x);
Mat eval_jacobian(const VectorFieldSpec& spec, const Eigen::Ref<const Vec>& x);

/// Central-difference Jacobian, regardless of whether an analytic one exists.
Mat finite_difference_jacobian(const VectorFieldSpec& spec, const Eigen::Ref<const Vec>& x);

/// Trace of the Jacobian, using the closed form when one is registered.
double divergence(const VectorFieldSpec& spec, const Eigen::Ref<const Vec>& x);

// Built-in library.
VectorFieldSpec linear_field(const Mat& a, std::string name = "linear");
VectorFieldSpec linear_diag(const std::vector<double>& rates);
VectorFieldSpec linear_nonnormal();
VectorFieldSpec rotation_field();
VectorFieldSpec harmonic_oscillator(double frequency = 1.0);
VectorFieldSpec van_der_pol(double mu = 1.0);
VectorFieldSpec lorenz(double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0);

/// One term `coef * prod x_j^e_j` added to component `target`.
struct PolynomialTerm {
    int target = 0;
    double coef = 0.0;
    std::vector<int> monomial;
};

VectorFieldSpec polynomial_field(int dim, std::vector<PolynomialTerm> terms, std::string name = "polynomial");

/// Parses `{"dim":n,"terms":[{"target":i,"coef":c,"monomial":[e1,...,en]}]}`.
VectorFieldSpec polynomial_field_from_json(const nlohmann::json& j);

/// Resolves a built-in by name, e.g. "lorenz", "linear_diag:2,0,-1",
/// "vanderpol:1", "harmonic:2", "linear_nonnormal", "rotation".
VectorFieldSpec builtin_field(std::string_view name);

/// Accepts either a built-in name string or an inline polynomial object.
VectorFieldSpec field_from_json(const nlohmann::json& j);

/// Names of the built-ins with their default parameters.
std::vector<std::string> builtin_names();

/// X = S + c, with c constant.
VectorFieldSpec add_constant(const VectorFieldSpec& base, const Vec& c);
/// X = S + D, pointwise sum of two fields on the same space.
VectorFieldSpec add_fields(const VectorFieldSpec& base, const VectorFieldSpec& delta);

} // namespace lyapframe
