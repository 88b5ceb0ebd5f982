#include "hfda/stochastic.hpp"

#include "hfda/errors.hpp"

#include <algorithm>
#include <set>

namespace hfda {

void SampleSet::validate(std::size_t N) const {
  if (indices.size() != pi.size()) throw UsageError("sample: indices and pi differ in length");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= N) throw UsageError("sample index out of range");
    if (i > 0 && indices[i] <= indices[i - 1]) throw UsageError("sample indices must increase");
    if (!(pi[i] > 0.0 && pi[i] <= 1.0)) throw UsageError("inclusion probability outside (0, 1]");
  }
}

SampleSet full_sample(std::size_t N) {
  SampleSet s;
  s.indices.resize(N);
  for (std::size_t i = 0; i < N; ++i) s.indices[i] = i;
  s.pi.assign(N, 1.0);
  return s;
}

SampleSet systematic_sample(std::size_t N, std::size_t kappa, std::size_t offset) {
  if (kappa < 1 || kappa > N) throw UsageError("systematic sampling needs 1 <= kappa <= N");
  if (offset >= kappa) throw UsageError("systematic offset must be below kappa");
  SampleSet s;
  for (std::size_t i = offset; i < N; i += kappa) s.indices.push_back(i);
  s.pi.assign(s.indices.size(), 1.0 / static_cast<double>(kappa));
  return s;
}

SampleSet draw_systematic(std::size_t N, std::size_t kappa, Rng& rng) {
  if (kappa < 1 || kappa > N) throw UsageError("systematic sampling needs 1 <= kappa <= N");
  return systematic_sample(N, kappa, static_cast<std::size_t>(rng.uniform_int(0, kappa - 1)));
}

SampleSet draw_simple(std::size_t N, std::size_t m, Rng& rng) {
  if (m < 1 || m > N) throw UsageError("simple random sampling needs 1 <= m <= N");
  // Floyd's algorithm: m draws, no rejection loop.
  std::set<std::size_t> chosen;
  for (std::size_t j = N - m; j < N; ++j) {
    const auto t = static_cast<std::size_t>(rng.uniform_int(0, j));
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  SampleSet s;
  s.indices.assign(chosen.begin(), chosen.end());
  s.pi.assign(m, static_cast<double>(m) / static_cast<double>(N));
  return s;
}

SampleSet draw_stratified(std::size_t N, std::size_t kappa, Rng& rng) {
  if (kappa < 1 || kappa > N) throw UsageError("stratified sampling needs 1 <= kappa <= N");
  SampleSet s;
  for (std::size_t start = 0; start < N; start += kappa) {
    const std::size_t width = std::min(kappa, N - start);
    s.indices.push_back(start + static_cast<std::size_t>(rng.uniform_int(0, width - 1)));
    s.pi.push_back(1.0 / static_cast<double>(width));
  }
  return s;
}

TimeGrid sample_grid(const AugmentedSystem& system, const ObservationSet& data,
                     const SampleSet& sample, double h) {
  std::vector<double> times;
  times.reserve(sample.size());
  for (auto i : sample.indices) {
    if (i >= data.size()) throw UsageError("sample index out of range");
    times.push_back(data.times[i]);
  }
  return build_grid(system.model().t0, system.model().t_end, h, times);
}

std::vector<LossTerm> sample_terms(const ObservationSet& data, const SampleSet& sample,
                                   const TimeGrid& grid, const LossOptions& opts) {
  if (sample.empty()) throw UsageError("empty sample");
  sample.validate(data.size());
  const bool per_sample = grid.obs_node.size() == sample.size();
  if (!per_sample && grid.obs_node.size() != data.size())
    throw UsageError("grid is not aligned with the sample");
  std::vector<LossTerm> terms(sample.size());
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const auto i = sample.indices[k];
    const double w = opts.reweight ? data.weights[i] : 1.0;
    terms[k] = {i, w * (1.0 / sample.pi[k]), grid.obs_node[per_sample ? k : i]};
  }
  return terms;
}

GradientEvaluation stochastic_gradient(const AugmentedSystem& system, const Vector& z0,
                                       const ObservationSet& data, const SampleSet& sample,
                                       const TimeGrid& grid, DerivativeMode mode,
                                       const LossOptions& opts) {
  const auto terms = sample_terms(data, sample, grid, opts);
  return assemble_gradient(system, z0, data, grid, terms, mode);
}

ResidualSystem residual_system(const AugmentedSystem& system, const Vector& z0,
                               const ObservationSet& data, const SampleSet& sample,
                               const TimeGrid& grid, const LossOptions& opts) {
  const auto terms = sample_terms(data, sample, grid, opts);
  const int n = data.model.n();
  const int d = system.d();
  const int q = system.q();
  const auto& H = data.model.H();

  ResidualSystem rs;
  rs.n = n;
  rs.V = data.model.V();
  rs.V_inv = data.model.V_inv();
  rs.r.resize(n * static_cast<Eigen::Index>(terms.size()));
  rs.D.resize(rs.r.size(), q);
  rs.block_scale.resize(terms.size());

  std::size_t next = 0;
  integrate_with_sensitivity(system, z0, grid,
                             [&](std::size_t node, ConstVectorRef z, ConstMatrixRef phi) {
                               for (; next < terms.size() && terms[next].node == node; ++next) {
                                 const auto row = static_cast<Eigen::Index>(next) * n;
                                 rs.r.segment(row, n) = data.y(terms[next].obs) - H * z.head(d);
                                 rs.D.middleRows(row, n).noalias() = H * phi.topRows(d);
                                 rs.block_scale[next] = terms[next].scale;
                               }
                             });
  return rs;
}

Matrix ResidualSystem::normal_matrix() const {
  const auto q = D.cols();
  Matrix A = Matrix::Zero(q, q);
  Matrix tmp(n, q);
  for (std::size_t s = 0; s < blocks(); ++s) {
    const auto blk = D.middleRows(static_cast<Eigen::Index>(s) * n, n);
    tmp.noalias() = V_inv * blk;
    A.noalias() += block_scale[s] * (blk.transpose() * tmp);
  }
  return 0.5 * (A + A.transpose());
}

Vector ResidualSystem::normal_rhs() const {
  Vector b = Vector::Zero(D.cols());
  for (std::size_t s = 0; s < blocks(); ++s) {
    const auto row = static_cast<Eigen::Index>(s) * n;
    b.noalias() += block_scale[s] * (D.middleRows(row, n).transpose() * (V_inv * r.segment(row, n)));
  }
  return b;
}

Matrix ResidualSystem::W_inv_dense() const {
  Matrix W = Matrix::Zero(r.size(), r.size());
  for (std::size_t s = 0; s < blocks(); ++s) {
    const auto row = static_cast<Eigen::Index>(s) * n;
    W.block(row, row, n, n) = block_scale[s] * V_inv;
  }
  return W;
}

Matrix ResidualSystem::W_dense() const {
  Matrix W = Matrix::Zero(r.size(), r.size());
  for (std::size_t s = 0; s < blocks(); ++s) {
    const auto row = static_cast<Eigen::Index>(s) * n;
    W.block(row, row, n, n) = (1.0 / block_scale[s]) * V;
  }
  return W;
}

ResidualSystem ResidualSystem::select_columns(const std::vector<int>& columns) const {
  ResidualSystem out = *this;
  out.D.resize(D.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out.D.col(static_cast<Eigen::Index>(j)) = D.col(columns[j]);
  }
  return out;
}

}  // namespace hfda
