#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>

#include "tami/eval.hpp"

namespace tami {

enum class EdgeBankVariant { infinity, tw_ts, tw_re, th };

std::string to_string(EdgeBankVariant v);
EdgeBankVariant parse_edgebank_variant(const std::string& s);

struct EdgeBankConfig {
  EdgeBankVariant variant = EdgeBankVariant::infinity;
  double window = 0.0;       // tw_ts: usually the duration of the test split
  std::size_t threshold = 2;  // th: positive iff count > threshold
};

// Trainless memorization baseline: a pair scores 1 if it is retained in the
// edge memory at the query time, 0 otherwise.
class EdgeBank : public LinkScorer {
 public:
  explicit EdgeBank(const EdgeBankConfig& cfg);

  double predict(NodeId u, NodeId v, double tau) const;
  void update(const Event& e);

  // Per-pair window used by tw_re: mean repeat interval so far, or the global
  // mean for pairs without a repeat (unbounded while no repeat exists at all).
  double repeat_window(NodeId u, NodeId v) const;

  std::vector<double> score(const TemporalGraph& g, std::span<const Candidate> pairs,
                            double tau) const override;
  void observe(const TemporalGraph&, const Event& e) override { update(e); }

 private:
  struct PairState {
    double first = 0.0;
    double last = 0.0;
    std::size_t count = 0;
  };

  EdgeBankConfig cfg_;
  std::unordered_map<PairKey, PairState, PairKeyHash> pairs_;
  double interval_sum_ = 0.0;
  std::size_t interval_count_ = 0;
};

}  // namespace tami
