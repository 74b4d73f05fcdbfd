#include "tami/time_encoding.hpp"

#include <cmath>

#include "tami/error.hpp"

namespace tami {

std::string to_string(EncodingMode m) { return m == EncodingMode::original ? "original" : "log"; }

EncodingMode parse_encoding_mode(const std::string& s) {
  if (s == "original") return EncodingMode::original;
  if (s == "log") return EncodingMode::log;
  throw ConfigError("encoder mode must be 'original' or 'log', got '" + s + "'");
}

std::vector<double> init_frequencies(std::size_t dim) {
  if (dim == 0) throw ConfigError("time encoding dimension must be >= 1");
  const double base = std::sqrt(static_cast<double>(dim));
  std::vector<double> omega(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    omega[i] = std::pow(base, -static_cast<double>(i) / base);
  }
  return omega;
}

TimeEncoder::TimeEncoder(std::size_t dim, EncodingMode mode, bool trainable)
    : omega_(init_frequencies(dim)), mode_(mode), trainable_(trainable) {}

double TimeEncoder::scaled(double dt) const {
  if (!(dt >= 0.0)) {
    throw DataError("time difference must be non-negative, got " + std::to_string(dt));
  }
  return mode_ == EncodingMode::log ? std::log1p(dt) : dt;
}

void TimeEncoder::encode(double dt, std::span<double> out) const {
  if (out.size() != omega_.size()) throw DataError("encode: output size mismatch");
  const double s = scaled(dt);
  for (std::size_t i = 0; i < omega_.size(); ++i) out[i] = std::cos(s * omega_[i]);
}

std::vector<double> TimeEncoder::encode(double dt) const {
  std::vector<double> z(omega_.size());
  encode(dt, z);
  return z;
}

void TimeEncoder::encode_with_grad(double dt, std::span<double> z,
                                   std::span<double> dz_domega) const {
  if (!trainable_) throw ConfigError("encode_with_grad on a fixed-frequency encoder");
  if (z.size() != omega_.size() || dz_domega.size() != omega_.size()) {
    throw DataError("encode_with_grad: output size mismatch");
  }
  const double s = scaled(dt);
  for (std::size_t i = 0; i < omega_.size(); ++i) {
    const double a = s * omega_[i];
    z[i] = std::cos(a);
    dz_domega[i] = -s * std::sin(a);
  }
}

void TimeEncoder::accumulate_grad(double dt, std::span<const double> upstream,
                                  std::span<double> grad_omega) const {
  const double s = scaled(dt);
  for (std::size_t i = 0; i < omega_.size(); ++i) {
    grad_omega[i] += upstream[i] * (-s * std::sin(s * omega_[i]));
  }
}

}  // namespace tami
