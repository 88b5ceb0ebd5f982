#include "hfda/modify.hpp"

#include "hfda/errors.hpp"
#include "hfda/rng.hpp"
#include "hfda/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hfda {

namespace {

constexpr std::uint64_t kModifyStream = 0x6d6f64;

const std::map<ModificationKind, std::string>& names() {
  static const std::map<ModificationKind, std::string> table{
      {ModificationKind::none, "none"},
      {ModificationKind::accumulate_upper, "accumulate_upper"},
      {ModificationKind::accumulate_nearest, "accumulate_nearest"},
      {ModificationKind::average_upper, "average_upper"},
      {ModificationKind::average_nearest, "average_nearest"},
      {ModificationKind::simple_random, "simple_random"},
      {ModificationKind::systematic_random, "systematic_random"},
  };
  return table;
}

double tolerance(const ObservationSet& data, const std::vector<double>& targets) {
  double lo = targets.front(), hi = targets.back();
  if (!data.times.empty()) {
    lo = std::min(lo, data.times.front());
    hi = std::max(hi, data.times.back());
  }
  return 1e-9 * std::max(1.0, hi - lo);
}

void check_targets(const ObservationSet& data, const std::vector<double>& targets) {
  if (targets.empty()) throw UsageError("no predetermined times");
  for (std::size_t j = 1; j < targets.size(); ++j) {
    if (!(targets[j] > targets[j - 1])) throw UsageError("predetermined times must increase");
  }
  if (!data.times.empty() && data.times.back() > targets.back() + tolerance(data, targets)) {
    throw UsageError("observation later than the last predetermined time");
  }
}

// Target index for each observation.
std::vector<std::size_t> assign_upper(const ObservationSet& data,
                                      const std::vector<double>& targets) {
  check_targets(data, targets);
  const double tol = tolerance(data, targets);
  std::vector<std::size_t> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto it = std::lower_bound(targets.begin(), targets.end(), data.times[i] - tol);
    out[i] = static_cast<std::size_t>(it - targets.begin());
  }
  return out;
}

std::vector<std::size_t> assign_nearest(const ObservationSet& data,
                                        const std::vector<double>& targets) {
  auto out = assign_upper(data, targets);
  const double tol = tolerance(data, targets);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t j = out[i];
    if (j == 0) continue;
    const double up = targets[j] - data.times[i];
    const double down = data.times[i] - targets[j - 1];
    if (down < up - tol) out[i] = j - 1;
  }
  return out;
}

ObservationSet accumulate(const ObservationSet& data, const std::vector<double>& targets,
                          const std::vector<std::size_t>& assignment) {
  ObservationSet out = data;
  for (std::size_t i = 0; i < data.size(); ++i) out.times[i] = targets[assignment[i]];
  return out;
}

ObservationSet average(const ObservationSet& data, const std::vector<double>& targets,
                       const std::vector<std::size_t>& assignment) {
  ObservationSet out;
  out.model = data.model;
  std::vector<Vector> means;
  std::size_t i = 0;
  while (i < data.size()) {
    const std::size_t group = assignment[i];
    Vector sum = Vector::Zero(data.model.n());
    double weight = 0.0;
    std::size_t members = 0;
    for (; i < data.size() && assignment[i] == group; ++i) {
      sum += data.y(i);
      weight += data.weights[i];
      ++members;
    }
    out.times.push_back(targets[group]);
    out.weights.push_back(weight);
    means.push_back(sum / static_cast<double>(members));
  }
  out.values.resize(data.model.n(), static_cast<Eigen::Index>(means.size()));
  for (std::size_t k = 0; k < means.size(); ++k) out.values.col(static_cast<Eigen::Index>(k)) = means[k];
  return out;
}

}  // namespace

std::string to_string(ModificationKind kind) { return names().at(kind); }

ModificationKind parse_modification(const std::string& name) {
  for (const auto& [kind, text] : names()) {
    if (text == name) return kind;
  }
  throw UsageError("unknown modification scheme '" + name + "'");
}

const std::vector<ModificationKind>& all_modifications() {
  static const std::vector<ModificationKind> six{
      ModificationKind::accumulate_upper, ModificationKind::accumulate_nearest,
      ModificationKind::average_upper,    ModificationKind::average_nearest,
      ModificationKind::simple_random,    ModificationKind::systematic_random,
  };
  return six;
}

std::size_t round_count(double x) {
  if (!(x >= 0.0) || !std::isfinite(x)) throw UsageError("count must be a finite nonnegative value");
  return static_cast<std::size_t>(std::llround(x));
}

std::vector<double> predetermined_times(const ObservationSet& data, double potp) {
  if (!(potp > 0.0 && potp <= 1.0)) throw UsageError("potp must lie in (0, 1]");
  if (data.size() == 0) throw UsageError("no observations");
  const std::size_t kappa = round_count(1.0 / potp);
  std::vector<double> out;
  for (std::size_t i = kappa - 1; i < data.size(); i += kappa) {
    if (out.empty() || data.times[i] > out.back()) out.push_back(data.times[i]);
  }
  if (out.empty() || data.times.back() > out.back()) out.push_back(data.times.back());
  return out;
}

ObservationSet accumulate_upper(const ObservationSet& data, const std::vector<double>& predetermined) {
  return accumulate(data, predetermined, assign_upper(data, predetermined));
}

ObservationSet accumulate_nearest(const ObservationSet& data,
                                  const std::vector<double>& predetermined) {
  return accumulate(data, predetermined, assign_nearest(data, predetermined));
}

ObservationSet average_upper(const ObservationSet& data, const std::vector<double>& predetermined) {
  return average(data, predetermined, assign_upper(data, predetermined));
}

ObservationSet average_nearest(const ObservationSet& data,
                               const std::vector<double>& predetermined) {
  return average(data, predetermined, assign_nearest(data, predetermined));
}

ObservationSet subset(const ObservationSet& data, const std::vector<std::size_t>& indices) {
  ObservationSet out;
  out.model = data.model;
  out.values.resize(data.model.n(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto i = indices[k];
    if (i >= data.size()) throw UsageError("subset index out of range");
    out.times.push_back(data.times[i]);
    out.weights.push_back(data.weights[i]);
    out.values.col(static_cast<Eigen::Index>(k)) = data.y(i);
  }
  return out;
}

ObservationSet simple_random_sample(const ObservationSet& data, double potp, std::uint64_t seed) {
  if (!(potp > 0.0 && potp <= 1.0)) throw UsageError("potp must lie in (0, 1]");
  const std::size_t m = round_count(potp * static_cast<double>(data.size()));
  if (m == 0) throw UsageError("potp keeps no observations");
  Rng rng = Rng(seed).split(kModifyStream);
  return subset(data, draw_simple(data.size(), m, rng).indices);
}

ObservationSet systematic_random_sample(const ObservationSet& data, double potp,
                                        std::uint64_t seed) {
  if (!(potp > 0.0 && potp <= 1.0)) throw UsageError("potp must lie in (0, 1]");
  const std::size_t kappa = round_count(1.0 / potp);
  if (kappa > data.size()) throw UsageError("sampling interval longer than the data");
  Rng rng = Rng(seed).split(kModifyStream);
  return subset(data, draw_systematic(data.size(), kappa, rng).indices);
}

ObservationSet apply_modification(const ObservationSet& data, const ModificationScheme& scheme) {
  const auto targets = [&] {
    return scheme.predetermined.empty() ? predetermined_times(data, scheme.potp)
                                        : scheme.predetermined;
  };
  switch (scheme.kind) {
    case ModificationKind::none:
      return data;
    case ModificationKind::accumulate_upper:
      return accumulate_upper(data, targets());
    case ModificationKind::accumulate_nearest:
      return accumulate_nearest(data, targets());
    case ModificationKind::average_upper:
      return average_upper(data, targets());
    case ModificationKind::average_nearest:
      return average_nearest(data, targets());
    case ModificationKind::simple_random:
      return simple_random_sample(data, scheme.potp, scheme.seed);
    case ModificationKind::systematic_random:
      return systematic_random_sample(data, scheme.potp, scheme.seed);
  }
  throw UsageError("unhandled modification scheme");
}

}  // namespace hfda
