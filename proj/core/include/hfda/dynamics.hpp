#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace hfda {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<Vector>;
using MatrixRef = Eigen::Ref<Matrix>;
using ConstVectorRef = Eigen::Ref<const Vector>;
using ConstMatrixRef = Eigen::Ref<const Matrix>;

/// Right-hand side f(t, x, theta), written into `out` (length d).
using RhsFn = std::function<void(double t, ConstVectorRef x, ConstVectorRef theta, VectorRef out)>;
/// Jacobian block written into `out` (d x d for f_x, d x p for f_theta).
using JacobianFn =
    std::function<void(double t, ConstVectorRef x, ConstVectorRef theta, MatrixRef out)>;

/// A named ODE model x' = f(t, x, theta) on [t0, T].
struct ModelSpec {
  std::string name;
  int d = 0;  // state dimension
  int p = 0;  // parameter dimension
  RhsFn rhs;
  JacobianFn jac_x;
  JacobianFn jac_theta;
  Vector x0;          // baseline initial state
  Vector theta_star;  // reference parameter
  double t0 = 0.0;
  double t_end = 0.0;

  /// Throws UsageError unless the dimensions, callbacks and interval are consistent.
  void validate() const;
};

Vector eval_rhs(const ModelSpec& model, double t, const Vector& x, const Vector& theta);

struct Jacobians {
  Matrix f_x;      // d x d
  Matrix f_theta;  // d x p
};

Jacobians eval_jacobians(const ModelSpec& model, double t, const Vector& x, const Vector& theta);

/// The model with its parameters folded into the state: z = (x, theta),
/// z' = (f(t, x, theta), 0). Estimation then reduces to choosing z(t0).
class AugmentedSystem {
 public:
  explicit AugmentedSystem(ModelSpec model);

  int q() const noexcept { return model_.d + model_.p; }
  int d() const noexcept { return model_.d; }
  int p() const noexcept { return model_.p; }
  const ModelSpec& model() const noexcept { return model_; }

  /// out = (f(t, x, theta), 0_p); `out` must have length q.
  void rhs(double t, ConstVectorRef z, VectorRef out) const;
  /// out = [[f_x, f_theta], [0, 0]]; `out` must be q x q.
  void jacobian(double t, ConstVectorRef z, MatrixRef out) const;

  /// z(t0) assembled from a physical initial state and a parameter vector.
  Vector initial_condition(const Vector& x0, const Vector& theta) const;
  /// z(t0) at the model's baseline state and reference parameter.
  Vector reference_initial_condition() const;

  auto state_block(ConstVectorRef z) const { return z.head(model_.d); }
  auto parameter_block(ConstVectorRef z) const { return z.tail(model_.p); }

 private:
  ModelSpec model_;
};

AugmentedSystem augment(const ModelSpec& model);

// Built-in models. Parameter orderings:
//   fitzhugh_nagumo: x = (v, w), theta = (ii, a, b, tau)
//     v' = v - v^3/3 - w + ii,  w' = (v - a - b w) / tau
//   lotka_volterra:  x = (u, v), theta = (alpha, beta, delta, gamma)
//     u' = alpha u - beta u v,  v' = delta u v - gamma v
//   van_der_pol:     x = (x1, x2), theta = (mu)
//     x1' = x2,  x2' = mu (1 - x1^2) x2 - x1
ModelSpec fitzhugh_nagumo();
ModelSpec lotka_volterra();
ModelSpec van_der_pol();

/// x' = A x + B theta on [0, t_end]. Residuals are then affine in the
/// augmented initial condition, which makes Gauss-Newton exact in one step.
ModelSpec affine_model(const Matrix& A, const Matrix& B, Vector x0, Vector theta_star,
                       double t_end);

using ModelFactory = std::function<ModelSpec()>;

/// Looks up a model by registered name; throws UsageError if unknown.
ModelSpec make_model(const std::string& name);
/// Adds (or replaces) a named model factory.
void register_model(const std::string& name, ModelFactory factory);
std::vector<std::string> registered_models();

}  // namespace hfda
