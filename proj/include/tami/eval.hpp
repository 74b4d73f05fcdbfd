#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tami/event_store.hpp"

namespace tami {

class TamiModel;

struct Candidate {
  NodeId u = 0;
  NodeId v = 0;
};

// Anything that scores candidate links at a query time and consumes the true
// event stream afterwards.
class LinkScorer {
 public:
  virtual ~LinkScorer() = default;
  virtual std::vector<double> score(const TemporalGraph& g, std::span<const Candidate> pairs,
                                    double tau) const = 0;
  virtual void observe(const TemporalGraph& g, const Event& e) = 0;
};

// Embeddings of the distinct endpoints are computed once per call, fanned out
// over `threads` workers.
class ModelScorer : public LinkScorer {
 public:
  explicit ModelScorer(TamiModel& model, std::size_t threads = 1)
      : model_(model), threads_(threads) {}
  std::vector<double> score(const TemporalGraph& g, std::span<const Candidate> pairs,
                            double tau) const override;
  void observe(const TemporalGraph& g, const Event& e) override;

 private:
  TamiModel& model_;
  std::size_t threads_;
};

// ---- metrics ------------------------------------------------------------

// Average precision over the ranking by descending score. At equal score,
// negatives rank ahead of positives. Throws DataError without positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// 1 / rank of the positive among itself and the negatives; ties count against
// the positive.
double reciprocal_rank(double positive, std::span<const double> negatives);

// ---- negative sampling ----------------------------------------------------

enum class NegKind { random, historical, inductive };

std::string to_string(NegKind k);
NegKind parse_neg_kind(const std::string& s);  // accepts rnd/hist/ind and long names

struct NegStrategy {
  NegKind kind = NegKind::random;
  std::uint64_t seed = 0;
  std::size_t k = 1;
};

class NegativeSampler {
 public:
  NegativeSampler(const TemporalGraph& g, const Split& split, const NegStrategy& strategy);

  const NegStrategy& strategy() const { return strategy_; }
  std::size_t pool_size() const { return pool_.size(); }
  bool fell_back() const { return fell_back_; }

  // K negatives for the positive event; deterministic in (seed, event index).
  std::vector<Candidate> sample(const Event& positive) const;

 private:
  bool occurs_at(const PairKey& key, double tau) const;
  Candidate random_negative(const Event& positive, std::uint64_t& state) const;

  const TemporalGraph& g_;
  NegStrategy strategy_;
  std::vector<Candidate> pool_;
  std::unordered_map<PairKey, std::vector<double>, PairKeyHash> pair_times_;
  mutable bool fell_back_ = false;
};

// ---- evaluation -------------------------------------------------------------

enum class EvalMode { transductive, inductive_nodes };

enum class EimGroup { exclusive, isolated, mutual };
std::string to_string(EimGroup g);

struct PositiveRecord {
  Event event;
  double positive_score = 0.0;
  std::vector<double> negative_scores;
  std::optional<double> mean_interval;  // none: pair has no history before tau
  EimGroup group = EimGroup::exclusive;
  std::optional<std::size_t> appearance;  // none: beyond m
};

struct EvalOptions {
  EvalMode mode = EvalMode::transductive;
  // Nodes counted as seen during training (inductive_nodes mode only).
  const std::vector<bool>* seen_in_train = nullptr;
  std::size_t diagnostics_m = 10;  // m used for EIM grouping / appearance index
  bool keep_records = true;
};

struct EvalReport {
  double ap = 0.0;
  double mrr = 0.0;
  std::size_t num_positives = 0;
  std::size_t num_negatives = 0;
  std::size_t k = 1;
  NegKind neg_kind = NegKind::random;
  EvalMode mode = EvalMode::transductive;
  std::vector<PositiveRecord> records;
};

void to_json(nlohmann::json& j, const EvalReport& r);

// Scores each positive in `range` against its K negatives, then feeds the
// positive to the scorer. Throws DataError if the filtered set is empty.
EvalReport evaluate(LinkScorer& scorer, const TemporalGraph& g, IndexRange range,
                    const NegativeSampler& sampler, const EvalOptions& opt = {});

// ---- diagnostics ------------------------------------------------------------

struct BucketResult {
  std::string label;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t positives = 0;
  std::optional<double> ap;  // none when the bucket is empty
};

// Log-spaced edges over the observed mean intervals.
std::vector<double> log_bucket_edges(std::span<const PositiveRecord> records,
                                     std::size_t buckets = 6);

// Positives grouped by the pair's mean interval before tau, each with its own
// negatives; the last entry is the no-history bucket.
std::vector<BucketResult> bucketed_ap_by_interval(std::span<const PositiveRecord> records,
                                                  std::span<const double> edges);

std::vector<BucketResult> ap_by_group(std::span<const PositiveRecord> records);
std::vector<BucketResult> ap_by_appearance(std::span<const PositiveRecord> records,
                                           std::size_t m);

// Position (1-based) at which one endpoint first appears among the other's m
// most recent interactions before tau; none if neither appears.
std::optional<std::size_t> appearance_index(const TemporalGraph& g, NodeId u, NodeId v,
                                            double tau, std::size_t m);

EimGroup eim_grouping(const TemporalGraph& g, NodeId u, NodeId v, double tau, std::size_t m);

// Mean gap of the pair up to tau, (tau - first) / (#interactions before tau).
std::optional<double> mean_pair_interval(const std::vector<double>& pair_times, double tau);

}  // namespace tami
