#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace tami {

enum class Transform { identity, log1p };

std::string to_string(Transform t);

struct SkewnessReport {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population (biased) standard deviation
  double skewness = 0.0;
  Transform transform = Transform::identity;
};

void to_json(nlohmann::json& j, const SkewnessReport& r);

// Fisher moment coefficient m3 / m2^{3/2} from two-pass central moments.
// Throws DataError for n < 3 or zero spread.
SkewnessReport fisher_skewness(std::span<const double> samples);

// Skewness of ln(1 + x) over the samples (x >= 0).
SkewnessReport fisher_skewness_log1p(std::span<const double> samples);

struct ParetoParams {
  double shape = 8.0;  // alpha
  double scale = 1.5;  // x_min
};

// Inverse-CDF draws x_min * U^{-1/alpha}.
std::vector<double> pareto_sample(const ParetoParams& p, std::size_t n, std::uint64_t seed);

// g(alpha) = 2(1+alpha)/(alpha-3) * sqrt(1 - 2/alpha), alpha > 3.
double pareto_skewness_closed_form(double alpha);

struct Prop1Tolerance {
  double raw_rel = 0.05;  // relative, against g(alpha)
  double log_abs = 0.05;  // absolute, against 2
};

struct Prop1Result {
  double raw_skew = 0.0;
  double log_skew = 0.0;
  double expected_raw = 0.0;
  double log_mean = 0.0;  // should approach ln(x_min) + 1/alpha
  bool pass = false;
  // Set when the sixth moment is infinite (alpha <= 6) and n is too small for
  // the raw estimate to settle; pass/fail is then advisory only.
  bool high_variance = false;
};

void to_json(nlohmann::json& j, const Prop1Result& r);

// Draws Pareto samples and compares the skewness of X and ln X against g(alpha)
// and the exponential value 2.
Prop1Result verify_proposition1(const ParetoParams& p, std::size_t n, std::uint64_t seed,
                                const Prop1Tolerance& tol = {});

}  // namespace tami
