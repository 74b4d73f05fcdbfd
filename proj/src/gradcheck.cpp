#include "tami/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "tami/model.hpp"
#include "tami/trainer.hpp"

namespace tami {

namespace {

struct Accumulator {
  double max_rel = 0.0;
  std::size_t checked = 0;
  void add(double analytic, double numeric) {
    max_rel = std::max(max_rel, relative_error(analytic, numeric));
    ++checked;
  }
};

template <typename Fn>
double central_difference(double& x, Fn&& f) {
  const double h = fd_step(x);
  const double saved = x;
  x = saved + h;
  const double fp = f();
  x = saved - h;
  const double fm = f();
  x = saved;
  return (fp - fm) / (2.0 * h);
}

std::vector<double> uniform_vec(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Sum of upstream-weighted outputs of a standalone network.
void check_mlp(const nn::Mlp& source, std::mt19937_64& rng, Accumulator& acc) {
  nn::Mlp net = source;
  const auto x = uniform_vec(net.input_dim(), -1.0, 1.0, rng);
  const auto w = uniform_vec(net.output_dim(), -1.0, 1.0, rng);
  auto f = [&] {
    const auto y = net.forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };
  std::vector<double> grad(net.num_params(), 0.0);
  nn::MlpTape tape;
  net.forward(x, tape);
  net.backward(tape, w, grad);
  auto params = net.mutable_params();
  for (std::size_t i = 0; i < params.size(); ++i) acc.add(grad[i], central_difference(params[i], f));
}

void check_encoder(const TimeEncoder& source, std::mt19937_64& rng, Accumulator& acc) {
  TimeEncoder enc = source;
  std::uniform_real_distribution<double> dt_dist(0.0, 20.0);
  const double dt = dt_dist(rng);
  const auto w = uniform_vec(enc.dim(), -1.0, 1.0, rng);
  std::vector<double> z(enc.dim()), dz(enc.dim());
  enc.encode_with_grad(dt, z, dz);
  auto f = [&] {
    const auto y = enc.encode(dt);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };
  auto omega = enc.frequencies();
  for (std::size_t i = 0; i < omega.size(); ++i) {
    acc.add(w[i] * dz[i], central_difference(omega[i], f));
  }
}

ModelConfig random_config(std::mt19937_64& rng, std::uint64_t seed) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  ModelConfig c;
  c.backbone.dim = pick(3, 6);
  c.backbone.time_dim = pick(2, 5);
  c.backbone.num_neighbors = pick(2, 4);
  c.backbone.token_hidden = pick(0, 1) ? std::vector<std::size_t>{pick(3, 5)}
                                       : std::vector<std::size_t>{};
  c.backbone.combine_hidden = pick(0, 1) ? std::vector<std::size_t>{pick(3, 5)}
                                         : std::vector<std::size_t>{};
  c.use_lte = pick(0, 1) == 1;
  c.use_lha = true;
  c.lha.dim = pick(2, 5);
  c.lha.k = pick(1, 3);
  c.lha.gamma = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
  c.lha.aggregator = static_cast<Aggregator>(pick(0, 2));
  c.node_feature_dim = pick(0, 1) * 2;
  c.edge_feature_dim = pick(0, 1) * 2;
  c.seed = seed;
  return c;
}

TemporalGraph random_graph(const ModelConfig& c, std::mt19937_64& rng) {
  const std::size_t nodes = 8;
  std::uniform_int_distribution<NodeId> node(0, nodes - 1);
  std::uniform_real_distribution<double> ts(0.0, 30.0);
  std::normal_distribution<double> feat(0.0, 1.0);
  std::vector<Event> events;
  for (std::size_t i = 0; i < 40; ++i) {
    Event e;
    e.src = node(rng);
    do {
      e.dst = node(rng);
    } while (e.dst == e.src);
    e.ts = ts(rng);
    for (std::size_t k = 0; k < c.edge_feature_dim; ++k) e.features.push_back(feat(rng));
    events.push_back(std::move(e));
  }
  std::vector<std::vector<double>> nf;
  if (c.node_feature_dim > 0) {
    nf.assign(nodes, {});
    for (auto& row : nf) {
      for (std::size_t k = 0; k < c.node_feature_dim; ++k) row.push_back(feat(rng));
    }
  }
  return TemporalGraph(std::move(events), nodes, std::move(nf));
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

void to_json(nlohmann::json& j, const GradCheckReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"block", e.block},
                       {"scope", e.scope},
                       {"checked", e.checked},
                       {"max_rel_err", e.max_rel_err},
                       {"tolerance", e.tolerance},
                       {"pass", e.pass}});
  }
  j = {{"entries", entries}, {"pass", r.pass}};
}

GradCheckReport run_gradcheck(std::size_t configs, std::uint64_t seed, double isolated_tol,
                              double end_to_end_tol) {
  constexpr std::size_t B = TamiModel::kNumBlocks;
  std::vector<Accumulator> iso(B), e2e(B);
  for (std::size_t c = 0; c < configs; ++c) {
    std::mt19937_64 rng(seed * 7919 + c);
    const ModelConfig cfg = random_config(rng, seed + c);
    const TemporalGraph g = random_graph(cfg, rng);
    TamiModel model(cfg);
    // Move every parameter off the initialization (zero biases sit on relu kinks).
    for (auto block : model.parameter_blocks()) {
      for (double& x : block) x += std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    }
    replay(model, g, {0, 30});

    check_mlp(model.token_mlp(), rng, iso[TamiModel::kToken]);
    check_mlp(model.combine_mlp(), rng, iso[TamiModel::kCombine]);
    check_mlp(model.c_projection(), rng, iso[TamiModel::kCProj]);
    check_mlp(model.predictor(), rng, iso[TamiModel::kPredictor]);
    check_encoder(model.encoder(), rng, iso[TamiModel::kOmega]);
    if (model.memory().projection()) {
      check_mlp(*model.memory().projection(), rng, iso[TamiModel::kMaxProj]);
    }

    // End to end: BCE of a later positive and a random negative.
    const Event& e = g.event(30 + std::uniform_int_distribution<std::size_t>(0, 9)(rng));
    const NodeId neg = std::uniform_int_distribution<NodeId>(0, g.num_nodes() - 1)(rng);
    ModelGrad grad = model.zero_grad();
    pair_loss(model, g, e.src, e.dst, neg, e.ts, &grad);
    auto f = [&] { return pair_loss(model, g, e.src, e.dst, neg, e.ts, nullptr); };
    auto blocks = model.parameter_blocks();
    for (std::size_t k = 0; k < B; ++k) {
      for (std::size_t i = 0; i < blocks[k].size(); ++i) {
        e2e[k].add(grad.blocks[k][i], central_difference(blocks[k][i], f));
      }
    }
  }

  GradCheckReport rep;
  for (std::size_t k = 0; k < B; ++k) {
    for (int scope = 0; scope < 2; ++scope) {
      const Accumulator& a = scope == 0 ? iso[k] : e2e[k];
      if (a.checked == 0) continue;
      GradCheckEntry entry;
      entry.block = TamiModel::kBlockNames[k];
      entry.scope = scope == 0 ? "isolated" : "end_to_end";
      entry.checked = a.checked;
      entry.max_rel_err = a.max_rel;
      entry.tolerance = scope == 0 ? isolated_tol : end_to_end_tol;
      entry.pass = a.max_rel < entry.tolerance;
      rep.pass = rep.pass && entry.pass;
      rep.entries.push_back(entry);
    }
  }
  return rep;
}

}  // namespace tami
