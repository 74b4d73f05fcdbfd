#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tami {

enum class EncodingMode { original, log };

std::string to_string(EncodingMode m);
EncodingMode parse_encoding_mode(const std::string& s);

// omega_i = (sqrt d)^{-(i-1)/sqrt d}, i = 1..d.
std::vector<double> init_frequencies(std::size_t dim);

// Cosine time encoding z = cos(s * omega), where s = dt (original) or
// log1p(dt) (log). omega is shared by every use inside one model.
class TimeEncoder {
 public:
  TimeEncoder() = default;
  TimeEncoder(std::size_t dim, EncodingMode mode, bool trainable = true);

  std::size_t dim() const { return omega_.size(); }
  EncodingMode mode() const { return mode_; }
  void set_mode(EncodingMode m) { mode_ = m; }
  bool trainable() const { return trainable_; }

  std::span<const double> frequencies() const { return omega_; }
  std::span<double> frequencies() { return omega_; }

  // The scalar fed to the cosines.
  double scaled(double dt) const;

  void encode(double dt, std::span<double> out) const;
  std::vector<double> encode(double dt) const;

  // Fills z and the diagonal Jacobian dz_i/domega_i = -s sin(s omega_i).
  void encode_with_grad(double dt, std::span<double> z, std::span<double> dz_domega) const;

  // grad_omega[i] += upstream[i] * dz_i/domega_i for the encoding of dt.
  void accumulate_grad(double dt, std::span<const double> upstream,
                       std::span<double> grad_omega) const;

 private:
  std::vector<double> omega_;
  EncodingMode mode_ = EncodingMode::log;
  bool trainable_ = true;
};

}  // namespace tami
