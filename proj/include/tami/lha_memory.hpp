#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tami/event_store.hpp"
#include "tami/nn.hpp"

namespace tami {

enum class Aggregator { most_recent, mean, max };

std::string to_string(Aggregator a);
Aggregator parse_aggregator(const std::string& s);

struct LhaConfig {
  double gamma = 0.9;  // forgetting rate; 1 discards history
  std::size_t k = 1;
  std::size_t dim = 32;  // d_r
  Aggregator aggregator = Aggregator::most_recent;

  void validate() const;
  std::uint64_t hash() const;
  friend bool operator==(const LhaConfig&, const LhaConfig&) = default;
};

struct HistoryEntry {
  std::vector<double> r;
  double ts = 0.0;
};

// Newest first, at most k entries.
using PairHistory = std::deque<HistoryEntry>;

struct LhaSnapshot {
  LhaConfig config;
  std::unordered_map<PairKey, PairHistory, PairKeyHash> pairs;
};

// Which stored entries fed a lookup; enough to backpropagate through the max
// aggregator's projection.
struct AggregateTrace {
  std::vector<nn::MlpTape> tapes;       // one per contributing entry (max only)
  std::vector<std::size_t> argmax;      // per output component (max only)
  bool empty = true;
};

// Per-pair ring buffers of exponentially averaged edge embeddings:
//   r_new = gamma * c + (1 - gamma) * r_newest
class LhaMemory {
 public:
  LhaMemory() = default;
  explicit LhaMemory(const LhaConfig& cfg, std::uint64_t seed = 0);

  const LhaConfig& config() const { return cfg_; }
  std::size_t pair_count() const { return pairs_.size(); }

  // History of the pair, or nullptr when never updated.
  const PairHistory* history(NodeId u, NodeId v) const;

  // Aggregate of the entries with ts < tau; zero vector for cold pairs.
  std::vector<double> lookup(NodeId u, NodeId v, double tau,
                             AggregateTrace* trace = nullptr) const;

  // Inserts gamma*c + (1-gamma)*newest as the newest entry, evicting the oldest
  // beyond k. Returns the stored vector. tau must not precede the newest entry.
  const std::vector<double>& update(NodeId u, NodeId v, double tau, std::span<const double> c);

  // dparams += d(out)/d(projection) for a max-aggregated lookup.
  void projection_backward(const AggregateTrace& trace, std::span<const double> dh,
                           std::span<double> dparams) const;

  // Present only for the max aggregator: dense layer + relu of width d_r.
  const nn::Mlp* projection() const { return has_projection_ ? &projection_ : nullptr; }
  nn::Mlp* mutable_projection() { return has_projection_ ? &projection_ : nullptr; }

  LhaSnapshot snapshot() const;
  LhaSnapshot empty_snapshot() const { return LhaSnapshot{cfg_, {}}; }
  void restore(const LhaSnapshot& snap);
  void clear() { pairs_.clear(); }

 private:
  LhaConfig cfg_;
  std::unordered_map<PairKey, PairHistory, PairKeyHash> pairs_;
  nn::Mlp projection_;
  bool has_projection_ = false;
};

// Versioned little-endian blob: magic, version, config, config hash, then the
// pairs in ascending key order.
void write_snapshot(const LhaSnapshot& snap, std::ostream& out);
LhaSnapshot read_snapshot(std::istream& in);

}  // namespace tami
