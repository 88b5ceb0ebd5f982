#pragma once

#include "hfda/observe.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hfda {

enum class ModificationKind {
  none,
  accumulate_upper,
  accumulate_nearest,
  average_upper,
  average_nearest,
  simple_random,
  systematic_random,
};

std::string to_string(ModificationKind kind);
/// Throws UsageError for an unknown name.
ModificationKind parse_modification(const std::string& name);
/// The six schemes, in reporting order.
const std::vector<ModificationKind>& all_modifications();

struct ModificationScheme {
  ModificationKind kind = ModificationKind::none;
  /// Target times for accumulate/average; derived from potp when empty.
  std::vector<double> predetermined;
  double potp = 1.0;
  std::uint64_t seed = 0;
};

/// Every round(1/potp)-th observation time, plus the last observation time so
/// that every observation has an upper target.
std::vector<double> predetermined_times(const ObservationSet& data, double potp);

/// Moves each observation in (p_{j-1}, p_j] to p_j; values untouched.
ObservationSet accumulate_upper(const ObservationSet& data, const std::vector<double>& predetermined);
/// Moves each observation to its nearest target; equidistant ones go up.
ObservationSet accumulate_nearest(const ObservationSet& data,
                                  const std::vector<double>& predetermined);
/// One observation per nonempty group (upper assignment) holding the mean
/// value; weight = summed member weights.
ObservationSet average_upper(const ObservationSet& data, const std::vector<double>& predetermined);
/// As average_upper with nearest assignment.
ObservationSet average_nearest(const ObservationSet& data,
                               const std::vector<double>& predetermined);
/// Keeps m = round(potp N) observations chosen uniformly without replacement.
ObservationSet simple_random_sample(const ObservationSet& data, double potp, std::uint64_t seed);
/// Keeps every kappa-th observation (kappa = round(1/potp)) from a random offset.
ObservationSet systematic_random_sample(const ObservationSet& data, double potp,
                                        std::uint64_t seed);

ObservationSet apply_modification(const ObservationSet& data, const ModificationScheme& scheme);

/// Keeps the listed observation indices (sorted) with their weights.
ObservationSet subset(const ObservationSet& data, const std::vector<std::size_t>& indices);

/// Count derived from a fraction, rounded half away from zero.
std::size_t round_count(double x);

}  // namespace hfda
