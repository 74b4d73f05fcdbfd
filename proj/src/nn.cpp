#include "tami/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tami/error.hpp"

namespace tami::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::identity:
      return "identity";
    case Activation::sigmoid:
      return "sigmoid";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Mlp::Mlp(const MlpSpec& spec) : sizes_(spec.sizes), acts_(spec.activations) {
  if (sizes_.size() < 2) throw ConfigError("MLP needs at least input and output sizes");
  if (acts_.size() != sizes_.size() - 1) {
    throw ConfigError("MLP needs one activation per layer");
  }
  for (std::size_t s : sizes_) {
    if (s == 0) throw ConfigError("MLP layer sizes must be positive");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l < acts_.size(); ++l) {
    offsets_.push_back(total);
    total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);

  std::mt19937_64 rng(spec.seed);
  for (std::size_t l = 0; l < acts_.size(); ++l) {
    const double fan_in = static_cast<double>(sizes_[l]);
    const double fan_out = static_cast<double>(sizes_[l + 1]);
    const double limit = acts_[l] == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                      : std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> init(-limit, limit);
    const std::size_t w0 = weight_offset(l);
    for (std::size_t k = 0; k < sizes_[l + 1] * sizes_[l]; ++k) params_[w0 + k] = init(rng);
  }
}

std::span<double> Mlp::mutable_params() {
  ++generation_;
  return params_;
}

double Mlp::weight(std::size_t l, std::size_t r, std::size_t c) const {
  return params_[weight_offset(l) + r * sizes_[l] + c];
}

double& Mlp::weight(std::size_t l, std::size_t r, std::size_t c) {
  ++generation_;
  return params_[weight_offset(l) + r * sizes_[l] + c];
}

double& Mlp::bias(std::size_t l, std::size_t r) {
  ++generation_;
  return params_[bias_offset(l) + r];
}

void Mlp::forward(std::span<const double> x, MlpTape& tape) const {
  if (x.size() != input_dim()) {
    throw DataError("MLP input has size " + std::to_string(x.size()) + ", expected " +
                    std::to_string(input_dim()));
  }
  const std::size_t L = acts_.size();
  tape.inputs.resize(L);
  tape.outputs.resize(L);
  tape.owner = this;
  tape.generation = generation_;
  tape.inputs[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double* W = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    const std::vector<double>& a = tape.inputs[l];
    std::vector<double>& y = tape.outputs[l];
    y.resize(out);
    for (std::size_t r = 0; r < out; ++r) {
      double s = b[r];
      const double* row = W + r * in;
      for (std::size_t c = 0; c < in; ++c) s += row[c] * a[c];
      switch (acts_[l]) {
        case Activation::relu:
          y[r] = s < 0.0 ? 0.0 : s;  // lets NaN through to the divergence check
          break;
        case Activation::identity:
          y[r] = s;
          break;
        case Activation::sigmoid:
          y[r] = sigmoid(s);
          break;
      }
    }
    if (l + 1 < L) tape.inputs[l + 1] = y;
  }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  MlpTape tape;
  forward(x, tape);
  return std::move(tape.outputs.back());
}

void Mlp::backward(const MlpTape& tape, std::span<const double> dy, std::span<double> dparams,
                   std::span<double> dx) const {
  if (tape.owner != this || tape.generation != generation_) {
    throw Error("MLP backward called with a stale tape");
  }
  if (dy.size() != output_dim()) throw DataError("MLP backward: upstream gradient size mismatch");
  if (dparams.size() != params_.size()) throw DataError("MLP backward: gradient buffer mismatch");
  if (!dx.empty() && dx.size() != input_dim()) throw DataError("MLP backward: dx size mismatch");

  std::vector<double> delta(dy.begin(), dy.end());
  std::vector<double> prev;
  for (std::size_t l = acts_.size(); l-- > 0;) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const std::vector<double>& y = tape.outputs[l];
    const std::vector<double>& a = tape.inputs[l];
    for (std::size_t r = 0; r < out; ++r) {
      switch (acts_[l]) {
        case Activation::relu:
          if (!(y[r] > 0.0)) delta[r] = 0.0;
          break;
        case Activation::identity:
          break;
        case Activation::sigmoid:
          delta[r] *= y[r] * (1.0 - y[r]);
          break;
      }
    }
    double* gW = dparams.data() + weight_offset(l);
    double* gb = dparams.data() + bias_offset(l);
    for (std::size_t r = 0; r < out; ++r) {
      const double d = delta[r];
      gb[r] += d;
      if (d == 0.0) continue;
      double* row = gW + r * in;
      for (std::size_t c = 0; c < in; ++c) row[c] += d * a[c];
    }
    if (l == 0 && dx.empty()) break;
    prev.assign(in, 0.0);
    const double* W = params_.data() + weight_offset(l);
    for (std::size_t r = 0; r < out; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* row = W + r * in;
      for (std::size_t c = 0; c < in; ++c) prev[c] += d * row[c];
    }
    delta.swap(prev);
  }
  if (!dx.empty()) std::copy(delta.begin(), delta.end(), dx.begin());
}

BceResult bce_loss(double p, double label) {
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  BceResult r;
  r.loss = -(label * std::log(q) + (1.0 - label) * std::log(1.0 - q));
  r.dloss_dp = -label / q + (1.0 - label) / (1.0 - q);
  return r;
}

AdamState::AdamState(const AdamConfig& cfg, const std::vector<std::size_t>& block_sizes)
    : cfg_(cfg) {
  if (!(cfg.lr >= 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) ||
      !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  for (std::size_t n : block_sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void AdamState::step(const std::vector<ParamBlock>& blocks) {
  if (blocks.size() != m_.size()) throw DataError("Adam: block count mismatch");
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    if (b.value.size() != m_[k].size() || b.grad.size() != m_[k].size()) {
      throw DataError("Adam: shape mismatch in block '" + b.name + "'");
    }
    for (double g : b.grad) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in block '" + b.name + "'");
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto& m = m_[k];
    auto& v = v_[k];
    const auto& b = blocks[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = b.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      b.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace tami::nn
