#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tami::nn {

enum class Activation { relu, identity, sigmoid };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

double sigmoid(double x);

struct MlpSpec {
  std::vector<std::size_t> sizes;        // input, hidden..., output
  std::vector<Activation> activations;   // one per layer (sizes.size() - 1)
  std::uint64_t seed = 0;
};

class Mlp;

// Cached activations of one forward pass; valid until the owning network's
// parameters change.
struct MlpTape {
  std::vector<std::vector<double>> inputs;   // per layer
  std::vector<std::vector<double>> outputs;  // per layer, post activation
  const Mlp* owner = nullptr;
  std::uint64_t generation = 0;

  const std::vector<double>& output() const { return outputs.back(); }
};

// Dense feed-forward network with parameters stored flat, layer by layer:
// W (out x in, row-major) followed by b (out).
class Mlp {
 public:
  Mlp() = default;
  // He-uniform init for relu layers, Xavier-uniform for the rest; zero bias.
  explicit Mlp(const MlpSpec& spec);

  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return acts_.size(); }
  std::size_t num_params() const { return params_.size(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  const std::vector<Activation>& activations() const { return acts_; }

  std::span<const double> params() const { return params_; }
  // Invalidates outstanding tapes.
  std::span<double> mutable_params();

  // Weight (row r, column c) and bias views of layer l, for tests and tools.
  double weight(std::size_t l, std::size_t r, std::size_t c) const;
  double& weight(std::size_t l, std::size_t r, std::size_t c);
  double& bias(std::size_t l, std::size_t r);

  void forward(std::span<const double> x, MlpTape& tape) const;
  std::vector<double> forward(std::span<const double> x) const;

  // dparams += dL/dparams; dx (if non-empty) = dL/dx.
  void backward(const MlpTape& tape, std::span<const double> dy, std::span<double> dparams,
                std::span<double> dx = {}) const;

 private:
  std::size_t weight_offset(std::size_t l) const { return offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const { return offsets_[l] + sizes_[l + 1] * sizes_[l]; }

  std::vector<std::size_t> sizes_;
  std::vector<Activation> acts_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::uint64_t generation_ = 0;
};

inline constexpr double kProbClamp = 1e-7;

struct BceResult {
  double loss = 0.0;
  double dloss_dp = 0.0;
};

// Binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
BceResult bce_loss(double p, double label);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ParamBlock {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(const AdamConfig& cfg, const std::vector<std::size_t>& block_sizes);

  std::size_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // Bias-corrected Adam update over every block. Throws DivergenceError naming
  // the first block with a non-finite gradient, before touching any value.
  void step(const std::vector<ParamBlock>& blocks);

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace tami::nn
