#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tami/event_store.hpp"
#include "tami/model.hpp"
#include "tami/nn.hpp"

namespace tami {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 200;
  std::size_t max_epochs = 100;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::vector<double> gamma_grid = {0.0001, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_ap = 0.0;
  double elapsed_seconds = 0.0;  // wall clock; excluded from deterministic outputs
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_ap = 0.0;
  std::size_t epochs_run = 0;
};

// Deterministic part of the history (no wall-clock values).
nlohmann::json history_json(const TrainResult& r);

// Stops `patience` epochs after the last strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}
  // Returns true when training should stop after this epoch.
  bool update(double metric);
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

// BCE of one positive (u, v) and one negative (u, v_neg) at tau. When grad is
// non-null, dL/dtheta is accumulated into it.
double pair_loss(const TamiModel& model, const TemporalGraph& g, NodeId u, NodeId v,
                 NodeId v_neg, double tau, ModelGrad* grad);

// Nodes whose events are excluded from training when evaluating unseen nodes.
// Samples `fraction` of the nodes that appear after the train range.
std::vector<bool> make_inductive_mask(const TemporalGraph& g, const Split& split, double fraction,
                                      std::uint64_t seed);

// Nodes appearing in at least one non-masked train event.
std::vector<bool> seen_in_train(const TemporalGraph& g, const Split& split,
                                const std::vector<bool>* mask);

// Feeds events of `range` through process_event (skipping masked ones).
void replay(TamiModel& model, const TemporalGraph& g, IndexRange range,
            const std::vector<bool>* mask = nullptr);

// Trains with Adam on chronological batches, one random negative per
// positive. On return the model holds the best-validation parameters and an
// empty link history.
TrainResult train(TamiModel& model, const TemporalGraph& g, const Split& split,
                  const TrainConfig& cfg, const std::vector<bool>* mask = nullptr);

struct GammaSweepEntry {
  double gamma = 0.0;
  double best_val_ap = 0.0;
  std::size_t best_epoch = 0;
};

struct GammaSweepResult {
  std::vector<GammaSweepEntry> entries;
  double best_gamma = 0.0;
  TamiModel best_model;
};

// Trains one model per grid value; ties keep the earlier grid member.
GammaSweepResult gamma_sweep(const ModelConfig& base, const TemporalGraph& g, const Split& split,
                             const TrainConfig& cfg, const std::vector<bool>* mask = nullptr);

}  // namespace tami
