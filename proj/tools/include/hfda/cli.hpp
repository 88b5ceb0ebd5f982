#pragma once

#include "hfda/harness.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hfda::cli {

struct CheckResult {
  std::string name;
  double discrepancy = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct CheckOptions {
  std::size_t points = 3;         // random parameter points per gradient check
  double spread = 0.1;            // relative perturbation around the reference
  std::uint64_t seed = 1;
  bool corrupt_jacobian = false;  // negative control: scale one entry of f_x
};

/// Gradient and estimator self-checks on the configured model:
/// forward_vs_adjoint, finite_difference, offset_unbiasedness,
/// ksgd_vs_rls, update_forms.
std::vector<CheckResult> run_checks(const ExperimentConfig& config, const CheckOptions& options);

/// `name discrepancy=... tolerance=... PASS|FAIL`
std::string format_check(const CheckResult& result);

/// Entry point of the `hfda` executable. Returns the process exit status:
/// 0 on success, 1 when work failed, 2 on usage errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hfda::cli
