#include "tami/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "tami/error.hpp"
#include "tami/eval.hpp"
#include "tami/parallel.hpp"

namespace tami {

namespace {

constexpr std::uint64_t kValNegSalt = 0x7a1d5eedULL;

bool masked_event(const Event& e, const std::vector<bool>* mask) {
  return mask && ((*mask)[e.src] || (*mask)[e.dst]);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (patience > max_epochs) throw ConfigError("train.patience must not exceed max_epochs");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  for (double g : gamma_grid) {
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("gamma grid values must lie in [0, 1]");
  }
}

nlohmann::json history_json(const TrainResult& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.history) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_ap", e.val_ap}});
  }
  return {{"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"best_val_ap", r.best_val_ap},
          {"epochs_run", r.epochs_run}};
}

bool EarlyStopper::update(double metric) {
  ++epoch_;
  if (metric > best_) {
    best_ = metric;
    best_epoch_ = epoch_;
  }
  return epoch_ - best_epoch_ >= patience_;
}

double pair_loss(const TamiModel& model, const TemporalGraph& g, NodeId u, NodeId v,
                 NodeId v_neg, double tau, ModelGrad* grad) {
  EmbeddingTrace eu, ev, en;
  model.node_embedding(g, u, tau, eu);
  model.node_embedding(g, v, tau, ev);
  model.node_embedding(g, v_neg, tau, en);
  PredictionTrace pp, pn;
  const double p1 = model.predict_from_embeddings(eu.embedding(), ev.embedding(), u, v, tau, &pp);
  const double p0 =
      model.predict_from_embeddings(eu.embedding(), en.embedding(), u, v_neg, tau, &pn);
  const auto l1 = nn::bce_loss(p1, 1.0);
  const auto l0 = nn::bce_loss(p0, 0.0);
  if (grad) {
    const std::size_t d = model.config().backbone.dim;
    std::vector<double> dhu(d, 0.0), dhv(d, 0.0), dhn(d, 0.0);
    model.backward_prediction(pp, l1.dloss_dp, dhu, dhv, *grad);
    model.backward_prediction(pn, l0.dloss_dp, dhu, dhn, *grad);
    model.backward_embedding(g, eu, dhu, *grad);
    model.backward_embedding(g, ev, dhv, *grad);
    model.backward_embedding(g, en, dhn, *grad);
  }
  return l1.loss + l0.loss;
}

std::vector<bool> make_inductive_mask(const TemporalGraph& g, const Split& split, double fraction,
                                      std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError("inductive mask fraction must lie in [0, 1]");
  }
  std::vector<bool> later(g.num_nodes(), false);
  for (std::size_t i = split.val.begin; i < split.test.end; ++i) {
    later[g.event(i).src] = true;
    later[g.event(i).dst] = true;
  }
  std::vector<NodeId> candidates;
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    if (later[u]) candidates.push_back(u);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  const auto take = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(candidates.size())));
  std::vector<bool> mask(g.num_nodes(), false);
  for (std::size_t i = 0; i < take; ++i) mask[candidates[i]] = true;
  return mask;
}

std::vector<bool> seen_in_train(const TemporalGraph& g, const Split& split,
                                const std::vector<bool>* mask) {
  std::vector<bool> seen(g.num_nodes(), false);
  for (std::size_t i = split.train.begin; i < split.train.end; ++i) {
    const Event& e = g.event(i);
    if (masked_event(e, mask)) continue;
    seen[e.src] = true;
    seen[e.dst] = true;
  }
  return seen;
}

void replay(TamiModel& model, const TemporalGraph& g, IndexRange range,
            const std::vector<bool>* mask) {
  for (std::size_t i = range.begin; i < range.end; ++i) {
    if (!masked_event(g.event(i), mask)) model.process_event(g, g.event(i));
  }
}

TrainResult train(TamiModel& model, const TemporalGraph& g, const Split& split,
                  const TrainConfig& cfg, const std::vector<bool>* mask) {
  cfg.validate();
  if (split.train.empty() || split.val.empty()) {
    throw DataError("training needs non-empty train and validation ranges");
  }
  std::vector<std::size_t> train_events;
  for (std::size_t i = split.train.begin; i < split.train.end; ++i) {
    if (!masked_event(g.event(i), mask)) train_events.push_back(i);
  }
  if (train_events.empty()) throw DataError("no training events left after masking");

  ModelGrad probe = model.zero_grad();
  std::vector<std::size_t> sizes;
  for (const auto& b : probe.blocks) sizes.push_back(b.size());
  nn::AdamState adam({cfg.lr}, sizes);
  EarlyStopper stopper(cfg.patience);
  const NegativeSampler val_sampler(g, split, {NegKind::random, cfg.seed ^ kValNegSalt, 1});
  EvalOptions val_opt;
  val_opt.keep_records = false;

  std::vector<std::vector<double>> best_params;
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  std::uniform_int_distribution<NodeId> any_node(0, static_cast<NodeId>(g.num_nodes() - 1));

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    model.reset_stream();
    std::mt19937_64 rng(cfg.seed * 1000003ULL + epoch);
    double loss_sum = 0.0;
    ModelGrad total = model.zero_grad();
    ModelGrad scratch = model.zero_grad();

    for (std::size_t start = 0; start < train_events.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(train_events.size(), start + cfg.batch_size);
      const std::size_t n = stop - start;
      std::vector<NodeId> negs(n);
      for (auto& x : negs) x = any_node(rng);

      total.zero();
      std::vector<double> losses(n);
      auto example = [&](std::size_t j, ModelGrad& into) {
        const Event& e = g.event(train_events[start + j]);
        losses[j] = pair_loss(model, g, e.src, e.dst, negs[j], e.ts, &into);
      };
      if (cfg.threads <= 1) {
        for (std::size_t j = 0; j < n; ++j) {
          scratch.zero();
          example(j, scratch);
          total.add(scratch);
        }
      } else {
        std::vector<ModelGrad> per(n, scratch);
        parallel_for(n, cfg.threads, [&](std::size_t j) {
          per[j].zero();
          example(j, per[j]);
        });
        for (std::size_t j = 0; j < n; ++j) total.add(per[j]);
      }
      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite training loss in epoch " + std::to_string(epoch) +
                              " at event " + std::to_string(train_events[start]));
      }
      loss_sum += batch_loss;
      total.scale(1.0 / static_cast<double>(n));

      auto values = model.parameter_blocks();
      std::vector<nn::ParamBlock> blocks;
      for (std::size_t k = 0; k < values.size(); ++k) {
        blocks.push_back({TamiModel::kBlockNames[k], values[k], total.blocks[k]});
      }
      adam.step(blocks);

      for (std::size_t j = start; j < stop; ++j) model.process_event(g, g.event(train_events[j]));
    }

    ModelScorer scorer(model, cfg.threads);
    const EvalReport val = evaluate(scorer, g, split.val, val_sampler, val_opt);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_events.size());
    rec.val_ap = val.ap;
    rec.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);

    const bool stop = stopper.update(val.ap);
    if (stopper.best_epoch() == epoch) {
      best_params.clear();
      for (auto view : std::as_const(model).parameter_blocks()) {
        best_params.emplace_back(view.begin(), view.end());
      }
    }
    if (stop) break;
  }

  auto views = model.parameter_blocks();
  for (std::size_t k = 0; k < views.size(); ++k) {
    std::copy(best_params[k].begin(), best_params[k].end(), views[k].begin());
  }
  model.reset_stream();
  result.best_epoch = stopper.best_epoch();
  result.best_val_ap = stopper.best();
  result.epochs_run = result.history.size();
  return result;
}

GammaSweepResult gamma_sweep(const ModelConfig& base, const TemporalGraph& g, const Split& split,
                             const TrainConfig& cfg, const std::vector<bool>* mask) {
  if (cfg.gamma_grid.empty()) throw ConfigError("gamma grid is empty");
  GammaSweepResult out;
  double best_ap = -1.0;
  for (double gamma : cfg.gamma_grid) {
    ModelConfig mc = base;
    mc.lha.gamma = gamma;
    TamiModel model(mc);
    const TrainResult r = train(model, g, split, cfg, mask);
    out.entries.push_back({gamma, r.best_val_ap, r.best_epoch});
    if (r.best_val_ap > best_ap) {
      best_ap = r.best_val_ap;
      out.best_gamma = gamma;
      out.best_model = std::move(model);
    }
  }
  return out;
}

}  // namespace tami
