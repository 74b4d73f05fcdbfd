#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace tami {

struct GradCheckEntry {
  std::string block;
  std::string scope;  // "isolated" or "end_to_end"
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool pass = true;
};

void to_json(nlohmann::json& j, const GradCheckReport& r);

// Relative error used throughout: |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-8);

// Central difference step for a parameter of magnitude |x|.
inline double fd_step(double x) { return 1e-6 * (std::abs(x) > 1.0 ? std::abs(x) : 1.0); }

// Compares analytic gradients with central finite differences for every
// trainable block: each block on its own, then the full positive/negative BCE
// through a small synthetic stream. `configs` random configurations each.
GradCheckReport run_gradcheck(std::size_t configs, std::uint64_t seed,
                              double isolated_tol = 1e-5, double end_to_end_tol = 1e-4);

}  // namespace tami
