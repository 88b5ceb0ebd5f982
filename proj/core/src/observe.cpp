#include "hfda/observe.hpp"

#include "hfda/errors.hpp"
#include "hfda/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace hfda {

ObservationModel::ObservationModel(Matrix H, Matrix V) : H_(std::move(H)), V_(std::move(V)) {
  if (H_.rows() < 1 || H_.cols() < 1) throw UsageError("observation operator is empty");
  if (V_.rows() != H_.rows() || V_.cols() != H_.rows()) {
    throw UsageError("noise covariance must be n x n with n = rows of H");
  }
  for (Eigen::Index i = 0; i < H_.rows(); ++i) {
    if (H_.row(i).isZero(0.0)) throw UsageError("observation operator has an all-zero row");
  }
  if (!V_.isApprox(V_.transpose(), 1e-12)) throw UsageError("noise covariance is not symmetric");
  Eigen::LLT<Matrix> llt(V_);
  if (llt.info() != Eigen::Success) {
    throw UsageError("noise covariance is not positive definite");
  }
  V_chol_ = llt.matrixL();
  V_inv_ = llt.solve(Matrix::Identity(V_.rows(), V_.rows()));
  V_inv_ = 0.5 * (V_inv_ + V_inv_.transpose()).eval();
}

ObservationModel ObservationModel::identity(int d, double sigma) {
  return ObservationModel(Matrix::Identity(d, d), sigma * sigma * Matrix::Identity(d, d));
}

double loss(const ObservationModel& obs, ConstVectorRef y, ConstVectorRef x) {
  const Vector r = y - obs.H() * x;
  return 0.5 * r.dot(obs.V_inv() * r);
}

Vector loss_grad(const ObservationModel& obs, ConstVectorRef y, ConstVectorRef x) {
  const Vector r = y - obs.H() * x;
  return -(obs.H().transpose() * (obs.V_inv() * r));
}

std::size_t ObservationSet::distinct_times() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i == 0 || times[i] != times[i - 1]) ++count;
  }
  return count;
}

void ObservationSet::validate() const {
  const auto N = times.size();
  if (static_cast<std::size_t>(values.cols()) != N || weights.size() != N) {
    throw UsageError("observation set: times, values and weights differ in length");
  }
  if (N > 0 && values.rows() != model.n()) {
    throw UsageError("observation set: value dimension does not match the observation model");
  }
  for (std::size_t i = 1; i < N; ++i) {
    if (times[i] < times[i - 1]) throw UsageError("observation times must be nondecreasing");
  }
  if (!values.allFinite()) throw UsageError("observation values must be finite");
  for (double w : weights) {
    if (!(w > 0.0)) throw UsageError("observation weights must be positive");
  }
}

ObservationSet simulate_observations(const AugmentedSystem& system, const Vector& z_star,
                                     const ObservationModel& obs, const SimulationOptions& opts) {
  if (!(opts.period > 0.0)) throw UsageError("observation period must be positive");
  if (obs.d() != system.d()) throw UsageError("observation operator does not match the model");
  const auto& m = system.model();
  const double span = m.t_end - m.t0;
  const auto count = static_cast<std::size_t>(std::floor(span / opts.period + 1e-9));
  if (count == 0) throw UsageError("observation period longer than the time interval");

  ObservationSet data;
  data.model = obs;
  data.times.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    data.times[k] = m.t0 + static_cast<double>(k + 1) * opts.period;
  }
  data.weights.assign(count, 1.0);

  const TimeGrid grid = build_grid(m.t0, m.t_end, opts.period, data.times);
  const Trajectory truth = integrate(system, z_star, grid);

  Rng rng = Rng(opts.seed).split(0x6f6273);  // observation-noise stream
  const int n = obs.n();
  data.values.resize(n, static_cast<Eigen::Index>(count));
  Vector xi(n);
  for (std::size_t k = 0; k < count; ++k) {
    const auto x = truth.states.col(static_cast<Eigen::Index>(grid.obs_node[k])).head(system.d());
    auto y = data.values.col(static_cast<Eigen::Index>(k));
    y = obs.H() * x;
    if (!opts.noiseless) {
      for (int j = 0; j < n; ++j) xi[j] = rng.normal();
      y += obs.V_chol() * xi;
    }
  }
  return data;
}

GradientEvaluation assemble_gradient(const AugmentedSystem& system, const Vector& z0,
                                     const ObservationSet& data, const TimeGrid& grid,
                                     std::span<const LossTerm> terms, DerivativeMode mode) {
  const int q = system.q();
  const int d = system.d();
  const auto& obs = data.model;
  for (std::size_t i = 1; i < terms.size(); ++i) {
    if (terms[i].node < terms[i - 1].node) throw UsageError("loss terms must be sorted by node");
  }
  if (!terms.empty() && terms.back().node >= grid.nodes.size()) {
    throw UsageError("loss term outside the grid");
  }

  GradientEvaluation out;
  out.grad = Vector::Zero(q);
  out.n_terms = terms.size();
  out.rk_steps = grid.steps();

  if (mode == DerivativeMode::forward) {
    std::size_t next = 0;
    Vector g(d);
    integrate_with_sensitivity(system, z0, grid,
                               [&](std::size_t node, ConstVectorRef z, ConstMatrixRef phi) {
                                 for (; next < terms.size() && terms[next].node == node; ++next) {
                                   const auto& term = terms[next];
                                   const auto y = data.y(term.obs);
                                   const auto x = z.head(d);
                                   out.value += term.scale * loss(obs, y, x);
                                   g = loss_grad(obs, y, x);
                                   out.grad.noalias() += term.scale * (phi.topRows(d).transpose() * g);
                                 }
                               });
    return out;
  }

  const Trajectory traj = integrate(system, z0, grid);
  // Walk the terms from the back as the adjoint sweep moves towards t0.
  std::size_t remaining = terms.size();
  out.grad = integrate_adjoint(system, traj, [&](std::size_t node, VectorRef chi) {
    while (remaining > 0 && terms[remaining - 1].node == node) {
      const auto& term = terms[--remaining];
      const auto y = data.y(term.obs);
      const auto x = traj.states.col(static_cast<Eigen::Index>(node)).head(d);
      out.value += term.scale * loss(obs, y, x);
      chi.head(d) += term.scale * loss_grad(obs, y, x);
    }
  });
  return out;
}

std::vector<LossTerm> full_terms(const ObservationSet& data, const TimeGrid& grid,
                                 const LossOptions& opts) {
  if (grid.obs_node.size() != data.size()) throw UsageError("grid is not aligned with the data");
  std::vector<LossTerm> terms(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    terms[i] = {i, opts.reweight ? data.weights[i] : 1.0, grid.obs_node[i]};
  }
  return terms;
}

double objective(const AugmentedSystem& system, const Vector& z0, const ObservationSet& data,
                 const TimeGrid& grid, const LossOptions& opts) {
  const auto terms = full_terms(data, grid, opts);
  const Trajectory traj = integrate(system, z0, grid);
  const int d = system.d();
  double value = 0.0;
  for (const auto& term : terms) {
    value += term.scale *
             loss(data.model, data.y(term.obs),
                  traj.states.col(static_cast<Eigen::Index>(term.node)).head(d));
  }
  return value;
}

GradientEvaluation gradient(const AugmentedSystem& system, const Vector& z0,
                            const ObservationSet& data, const TimeGrid& grid, DerivativeMode mode,
                            const LossOptions& opts) {
  const auto terms = full_terms(data, grid, opts);
  return assemble_gradient(system, z0, data, grid, terms, mode);
}

TimeGrid grid_for(const AugmentedSystem& system, const ObservationSet& data, double h) {
  return build_grid(system.model().t0, system.model().t_end, h, data.times);
}

namespace {

std::string join_matrix(const Matrix& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (i || j) os << ", ";
      os << m(i, j);
    }
  }
  return os.str();
}

std::vector<double> split_numbers(const std::string& text, char sep) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    std::size_t used = 0;
    try {
      out.push_back(std::stod(item, &used));
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + item + "'");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size()) throw UsageError("not a number: '" + item + "'");
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_observations(const std::filesystem::path& path, const ObservationSet& data,
                        const ObservationMetadata& meta) {
  data.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream csv(path);
  if (!csv) throw UsageError("cannot write " + path.string());
  csv << std::setprecision(17);
  csv << "t";
  for (int j = 1; j <= data.model.n(); ++j) csv << ",y" << j;
  csv << ",weight\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    csv << data.times[i];
    for (int j = 0; j < data.model.n(); ++j) csv << ',' << data.values(j, static_cast<Eigen::Index>(i));
    csv << ',' << data.weights[i] << '\n';
  }

  std::ofstream side(path.string() + ".meta");
  if (!side) throw UsageError("cannot write " + path.string() + ".meta");
  side << std::setprecision(17);
  side << "model = " << meta.model << '\n'
       << "seed = " << meta.seed << '\n'
       << "period = " << meta.period << '\n'
       << "n = " << data.model.n() << '\n'
       << "d = " << data.model.d() << '\n'
       << "H = " << join_matrix(data.model.H()) << '\n'
       << "V = " << join_matrix(data.model.V()) << '\n';
}

ObservationSet read_observations(const std::filesystem::path& path, ObservationMetadata* meta) {
  std::ifstream side(path.string() + ".meta");
  if (!side) throw UsageError("missing sidecar " + path.string() + ".meta");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(side, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  for (const char* key : {"n", "d", "H", "V"}) {
    if (!kv.count(key)) throw UsageError("sidecar is missing key '" + std::string(key) + "'");
  }
  const int n = std::stoi(kv["n"]);
  const int d = std::stoi(kv["d"]);
  const auto h = split_numbers(kv["H"], ',');
  const auto v = split_numbers(kv["V"], ',');
  if (static_cast<int>(h.size()) != n * d || static_cast<int>(v.size()) != n * n) {
    throw UsageError("sidecar H/V sizes do not match n and d");
  }
  Matrix H(n, d), V(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) H(i, j) = h[static_cast<std::size_t>(i * d + j)];
    for (int j = 0; j < n; ++j) V(i, j) = v[static_cast<std::size_t>(i * n + j)];
  }
  if (meta) {
    meta->model = kv["model"];
    meta->seed = kv.count("seed") ? std::stoull(kv["seed"]) : 0;
    meta->period = kv.count("period") ? std::stod(kv["period"]) : 0.0;
  }

  std::ifstream csv(path);
  if (!csv) throw UsageError("cannot read " + path.string());
  std::getline(csv, line);
  std::string expected = "t";
  for (int j = 1; j <= n; ++j) expected += ",y" + std::to_string(j);
  expected += ",weight";
  if (trim(line) != expected) throw UsageError("unexpected CSV header '" + line + "'");

  ObservationSet data;
  data.model = ObservationModel(H, V);
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto row = split_numbers(line, ',');
    if (static_cast<int>(row.size()) != n + 2) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(n + 2) + " columns");
    }
    rows.push_back(std::move(row));
  }
  data.values.resize(n, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    data.times.push_back(rows[i][0]);
    for (int j = 0; j < n; ++j) data.values(j, static_cast<Eigen::Index>(i)) = rows[i][static_cast<std::size_t>(j + 1)];
    data.weights.push_back(rows[i][static_cast<std::size_t>(n + 1)]);
  }
  data.validate();
  return data;
}

}  // namespace hfda
