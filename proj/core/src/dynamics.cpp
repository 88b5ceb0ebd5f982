#include "hfda/dynamics.hpp"

#include "hfda/errors.hpp"

#include <map>
#include <mutex>
#include <utility>

namespace hfda {

namespace {

void check_dims(const ModelSpec& model, Eigen::Index x_size, Eigen::Index theta_size) {
  if (x_size != model.d || theta_size != model.p) {
    throw UsageError(model.name + ": expected state of size " + std::to_string(model.d) +
                     " and parameter of size " + std::to_string(model.p) + ", got " +
                     std::to_string(x_size) + " and " + std::to_string(theta_size));
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (d < 1 || p < 1) throw UsageError(name + ": dimensions must be positive");
  if (!rhs || !jac_x || !jac_theta) throw UsageError(name + ": missing callback");
  if (x0.size() != d || theta_star.size() != p) throw UsageError(name + ": reference sizes");
  if (!(t_end > t0)) throw UsageError(name + ": empty time interval");
}

Vector eval_rhs(const ModelSpec& model, double t, const Vector& x, const Vector& theta) {
  check_dims(model, x.size(), theta.size());
  Vector out(model.d);
  model.rhs(t, x, theta, out);
  return out;
}

Jacobians eval_jacobians(const ModelSpec& model, double t, const Vector& x, const Vector& theta) {
  check_dims(model, x.size(), theta.size());
  Jacobians j{Matrix::Zero(model.d, model.d), Matrix::Zero(model.d, model.p)};
  model.jac_x(t, x, theta, j.f_x);
  model.jac_theta(t, x, theta, j.f_theta);
  return j;
}

AugmentedSystem::AugmentedSystem(ModelSpec model) : model_(std::move(model)) {
  model_.validate();
}

void AugmentedSystem::rhs(double t, ConstVectorRef z, VectorRef out) const {
  const int d = model_.d;
  model_.rhs(t, z.head(d), z.tail(model_.p), out.head(d));
  out.tail(model_.p).setZero();
}

void AugmentedSystem::jacobian(double t, ConstVectorRef z, MatrixRef out) const {
  const int d = model_.d;
  const int p = model_.p;
  out.setZero();
  model_.jac_x(t, z.head(d), z.tail(p), out.topLeftCorner(d, d));
  model_.jac_theta(t, z.head(d), z.tail(p), out.topRightCorner(d, p));
}

Vector AugmentedSystem::initial_condition(const Vector& x0, const Vector& theta) const {
  check_dims(model_, x0.size(), theta.size());
  Vector z(q());
  z << x0, theta;
  return z;
}

Vector AugmentedSystem::reference_initial_condition() const {
  return initial_condition(model_.x0, model_.theta_star);
}

AugmentedSystem augment(const ModelSpec& model) { return AugmentedSystem(model); }

ModelSpec fitzhugh_nagumo() {
  ModelSpec m;
  m.name = "fitzhugh_nagumo";
  m.d = 2;
  m.p = 4;
  m.rhs = [](double, ConstVectorRef x, ConstVectorRef th, VectorRef out) {
    const double v = x[0], w = x[1];
    out[0] = v - v * v * v / 3.0 - w + th[0];
    out[1] = (v - th[1] - th[2] * w) / th[3];
  };
  m.jac_x = [](double, ConstVectorRef x, ConstVectorRef th, MatrixRef out) {
    const double v = x[0];
    out(0, 0) = 1.0 - v * v;
    out(0, 1) = -1.0;
    out(1, 0) = 1.0 / th[3];
    out(1, 1) = -th[2] / th[3];
  };
  m.jac_theta = [](double, ConstVectorRef x, ConstVectorRef th, MatrixRef out) {
    const double v = x[0], w = x[1], tau = th[3];
    out.setZero();
    out(0, 0) = 1.0;
    out(1, 1) = -1.0 / tau;
    out(1, 2) = -w / tau;
    out(1, 3) = -(v - th[1] - th[2] * w) / (tau * tau);
  };
  m.x0 = Vector{{-1.0, 1.0}};
  m.theta_star = Vector{{0.5, 0.7, 0.8, 12.5}};
  m.t0 = 0.0;
  m.t_end = 50.0;
  return m;
}

ModelSpec lotka_volterra() {
  ModelSpec m;
  m.name = "lotka_volterra";
  m.d = 2;
  m.p = 4;
  m.rhs = [](double, ConstVectorRef x, ConstVectorRef th, VectorRef out) {
    const double u = x[0], v = x[1];
    out[0] = th[0] * u - th[1] * u * v;
    out[1] = th[2] * u * v - th[3] * v;
  };
  m.jac_x = [](double, ConstVectorRef x, ConstVectorRef th, MatrixRef out) {
    const double u = x[0], v = x[1];
    out(0, 0) = th[0] - th[1] * v;
    out(0, 1) = -th[1] * u;
    out(1, 0) = th[2] * v;
    out(1, 1) = th[2] * u - th[3];
  };
  m.jac_theta = [](double, ConstVectorRef x, ConstVectorRef, MatrixRef out) {
    const double u = x[0], v = x[1];
    out.setZero();
    out(0, 0) = u;
    out(0, 1) = -u * v;
    out(1, 2) = u * v;
    out(1, 3) = -v;
  };
  m.x0 = Vector{{2.0, 1.0}};
  m.theta_star = Vector{{0.67, 1.33, 1.0, 1.0}};
  m.t0 = 0.0;
  m.t_end = 10.0;
  return m;
}

ModelSpec van_der_pol() {
  ModelSpec m;
  m.name = "van_der_pol";
  m.d = 2;
  m.p = 1;
  m.rhs = [](double, ConstVectorRef x, ConstVectorRef th, VectorRef out) {
    out[0] = x[1];
    out[1] = th[0] * (1.0 - x[0] * x[0]) * x[1] - x[0];
  };
  m.jac_x = [](double, ConstVectorRef x, ConstVectorRef th, MatrixRef out) {
    out(0, 0) = 0.0;
    out(0, 1) = 1.0;
    out(1, 0) = -2.0 * th[0] * x[0] * x[1] - 1.0;
    out(1, 1) = th[0] * (1.0 - x[0] * x[0]);
  };
  m.jac_theta = [](double, ConstVectorRef x, ConstVectorRef, MatrixRef out) {
    out(0, 0) = 0.0;
    out(1, 0) = (1.0 - x[0] * x[0]) * x[1];
  };
  m.x0 = Vector{{2.0, 0.0}};
  m.theta_star = Vector{{1.0}};
  m.t0 = 0.0;
  m.t_end = 10.0;
  return m;
}

ModelSpec affine_model(const Matrix& A, const Matrix& B, Vector x0, Vector theta_star,
                       double t_end) {
  if (A.rows() != A.cols() || B.rows() != A.rows())
    throw UsageError("affine model: A must be square and B must have rows(A) rows");
  ModelSpec m;
  m.name = "affine";
  m.d = static_cast<int>(A.rows());
  m.p = static_cast<int>(B.cols());
  m.rhs = [A, B](double, ConstVectorRef x, ConstVectorRef th, VectorRef out) {
    out.noalias() = A * x + B * th;
  };
  m.jac_x = [A](double, ConstVectorRef, ConstVectorRef, MatrixRef out) { out = A; };
  m.jac_theta = [B](double, ConstVectorRef, ConstVectorRef, MatrixRef out) { out = B; };
  m.x0 = std::move(x0);
  m.theta_star = std::move(theta_star);
  m.t0 = 0.0;
  m.t_end = t_end;
  m.validate();
  return m;
}

namespace {

struct Registry {
  std::mutex mutex;
  std::map<std::string, ModelFactory> factories{
      {"fitzhugh_nagumo", fitzhugh_nagumo},
      {"lotka_volterra", lotka_volterra},
      {"van_der_pol", van_der_pol},
  };
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

ModelSpec make_model(const std::string& name) {
  ModelFactory factory;
  {
    std::lock_guard lock(registry().mutex);
    auto it = registry().factories.find(name);
    if (it == registry().factories.end()) throw UsageError("unknown model '" + name + "'");
    factory = it->second;
  }
  ModelSpec m = factory();
  m.validate();
  return m;
}

void register_model(const std::string& name, ModelFactory factory) {
  std::lock_guard lock(registry().mutex);
  registry().factories[name] = std::move(factory);
}

std::vector<std::string> registered_models() {
  std::lock_guard lock(registry().mutex);
  std::vector<std::string> names;
  for (const auto& [name, _] : registry().factories) names.push_back(name);
  return names;
}

}  // namespace hfda
