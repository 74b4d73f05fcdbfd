#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tami {

using NodeId = std::uint32_t;

struct Event {
  NodeId src = 0;
  NodeId dst = 0;
  double ts = 0.0;
  std::vector<double> features;
  std::size_t index = 0;  // position in the global chronological order
  std::optional<double> label;
};

// Unordered pair key (min, max); every pair-keyed structure uses it.
struct PairKey {
  NodeId a = 0;
  NodeId b = 0;

  static PairKey of(NodeId u, NodeId v) { return u < v ? PairKey{u, v} : PairKey{v, u}; }
  std::uint64_t packed() const { return (static_cast<std::uint64_t>(a) << 32) | b; }
  friend bool operator==(const PairKey&, const PairKey&) = default;
  friend auto operator<=>(const PairKey&, const PairKey&) = default;
};

struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const noexcept {
    std::uint64_t x = k.packed();
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

struct Neighbor {
  NodeId node = 0;
  double ts = 0.0;
  std::size_t event_index = 0;
};

struct GraphDiagnostics {
  std::size_t self_loops = 0;
};

// Immutable after construction. Events are sorted by (ts, input order) and
// event.index equals position in events().
class TemporalGraph {
 public:
  TemporalGraph() = default;
  // Sorts stably by timestamp and assigns event indices. Node ids must already
  // be dense in [0, num_nodes).
  TemporalGraph(std::vector<Event> events, std::size_t num_nodes,
                std::vector<std::vector<double>> node_features = {});

  const std::vector<Event>& events() const { return events_; }
  const Event& event(std::size_t i) const { return events_[i]; }
  std::size_t num_events() const { return events_.size(); }
  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t edge_feature_dim() const { return edge_dim_; }
  std::size_t node_feature_dim() const { return node_dim_; }
  bool empty() const { return events_.empty(); }
  double horizon() const { return events_.empty() ? 0.0 : events_.back().ts; }
  const GraphDiagnostics& diagnostics() const { return diag_; }

  // Zero-length span when the graph has no node features.
  const std::vector<double>& node_features(NodeId u) const;

  // Event indices touching `u`, ascending.
  const std::vector<std::size_t>& node_events(NodeId u) const;

  // The node on the other side of event `i` as seen from `u`.
  NodeId other_endpoint(std::size_t i, NodeId u) const;

  // Number of interactions of `u` strictly before `tau`.
  std::size_t history_size(NodeId u, double tau) const;

 private:
  void check_node(NodeId u) const;

  std::vector<Event> events_;
  std::size_t num_nodes_ = 0;
  std::size_t edge_dim_ = 0;
  std::size_t node_dim_ = 0;
  std::vector<std::vector<double>> node_features_;
  std::vector<std::vector<std::size_t>> node_index_;
  GraphDiagnostics diag_;
  std::vector<double> no_features_;
};

// ---- ingestion ----------------------------------------------------------

struct CsvSchema {
  std::string src_column = "src";
  std::string dst_column = "dst";
  std::string ts_column = "ts";
  std::string label_column;  // empty: no label column
  // Explicit feature columns; when empty, every column named f<digits> is a
  // feature column, in header order.
  std::vector<std::string> feature_columns;
  char delimiter = ',';
};

TemporalGraph load_events(const std::string& path, const CsvSchema& schema = {});
TemporalGraph parse_events(std::istream& in, const CsvSchema& schema = {});

// Canonical CSV: header src,dst,ts[,label][,f0..fk].
void write_events(const TemporalGraph& g, std::ostream& out);
void write_events(const TemporalGraph& g, const std::string& path);

// ---- splits -------------------------------------------------------------

struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.15;
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

struct Split {
  IndexRange train;
  IndexRange val;
  IndexRange test;
  double t_train_end = 0.0;  // timestamp of the last train event
  double t_val_end = 0.0;    // timestamp of the last val event (or t_train_end)
  bool degenerate = false;   // some range came out empty after tie absorption
};

Split chronological_split(const TemporalGraph& g, const SplitSpec& spec = {});

// ---- neighbor queries ---------------------------------------------------

// Up to m interactions of `node` with ts < tau, most recent first; equal
// timestamps ordered by descending event index.
std::vector<Neighbor> recent_neighbors(const TemporalGraph& g, NodeId node, double tau,
                                       std::size_t m);

// Uniform sample without replacement over interactions with ts < tau,
// returned most recent first.
std::vector<Neighbor> uniform_neighbors(const TemporalGraph& g, NodeId node, double tau,
                                        std::size_t m, std::uint64_t seed);

// Consecutive differences of every unordered pair with >= 2 interactions,
// concatenated in ascending pair-key order.
std::vector<double> interaction_intervals(const TemporalGraph& g);

// Per pair intervals, for callers that need the grouping.
std::vector<std::pair<PairKey, std::vector<double>>> pair_intervals(const TemporalGraph& g);

// ---- synthetic fixture --------------------------------------------------

struct SynthSpec {
  std::size_t num_nodes = 300;
  std::size_t num_frequent_pairs = 150;
  std::size_t num_infrequent_pairs = 1200;
  double pareto_shape = 3.5;
  double pareto_scale = 20000.0;
  double horizon = 100000.0;
  // Frequent pairs repeat with a per-pair period drawn from this range.
  double frequent_period_min = 600.0;
  double frequent_period_max = 1400.0;
  std::uint64_t seed = 0;
};

// Frequent pairs repeat at a fixed period; infrequent pairs have
// Pareto(shape, scale) distributed gaps. Node ids are relabeled by first
// appearance, so write/load round-trips exactly.
TemporalGraph synth_pareto_graph(const SynthSpec& spec);

}  // namespace tami
