#include "tami/event_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tami/error.hpp"

namespace tami {

namespace {

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == delim && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

bool is_auto_feature(const std::string& name) {
  if (name.size() < 2 || name[0] != 'f') return false;
  return std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

// ---- TemporalGraph ------------------------------------------------------

TemporalGraph::TemporalGraph(std::vector<Event> events, std::size_t num_nodes,
                             std::vector<std::vector<double>> node_features)
    : events_(std::move(events)), num_nodes_(num_nodes), node_features_(std::move(node_features)) {
  std::stable_sort(events_.begin(), events_.end(),
                   [](const Event& a, const Event& b) { return a.ts < b.ts; });
  node_index_.assign(num_nodes_, {});
  for (std::size_t i = 0; i < events_.size(); ++i) {
    Event& e = events_[i];
    e.index = i;
    if (e.src >= num_nodes_ || e.dst >= num_nodes_) {
      throw DataError("event " + std::to_string(i) + " references node outside [0, " +
                      std::to_string(num_nodes_) + ")");
    }
    if (!(e.ts >= 0.0) || !std::isfinite(e.ts)) {
      throw DataError("event " + std::to_string(i) + " has invalid timestamp");
    }
    if (i == 0) {
      edge_dim_ = e.features.size();
    } else if (e.features.size() != edge_dim_) {
      throw DataError("event " + std::to_string(i) + " has " + std::to_string(e.features.size()) +
                      " edge features, expected " + std::to_string(edge_dim_));
    }
    node_index_[e.src].push_back(i);
    if (e.dst != e.src) {
      node_index_[e.dst].push_back(i);
    } else {
      ++diag_.self_loops;
    }
  }
  if (!node_features_.empty()) {
    if (node_features_.size() != num_nodes_) {
      throw DataError("node feature matrix has " + std::to_string(node_features_.size()) +
                      " rows, expected " + std::to_string(num_nodes_));
    }
    node_dim_ = node_features_.front().size();
    for (const auto& row : node_features_) {
      if (row.size() != node_dim_) throw DataError("ragged node feature matrix");
    }
  }
}

void TemporalGraph::check_node(NodeId u) const {
  if (u >= num_nodes_) {
    throw DataError("node " + std::to_string(u) + " out of range [0, " +
                    std::to_string(num_nodes_) + ")");
  }
}

const std::vector<double>& TemporalGraph::node_features(NodeId u) const {
  check_node(u);
  return node_features_.empty() ? no_features_ : node_features_[u];
}

const std::vector<std::size_t>& TemporalGraph::node_events(NodeId u) const {
  check_node(u);
  return node_index_[u];
}

NodeId TemporalGraph::other_endpoint(std::size_t i, NodeId u) const {
  const Event& e = events_[i];
  return e.src == u ? e.dst : e.src;
}

std::size_t TemporalGraph::history_size(NodeId u, double tau) const {
  const auto& idx = node_events(u);
  auto it = std::lower_bound(idx.begin(), idx.end(), tau,
                             [this](std::size_t i, double t) { return events_[i].ts < t; });
  return static_cast<std::size_t>(it - idx.begin());
}

// ---- ingestion ----------------------------------------------------------

TemporalGraph parse_events(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  if (in.fail() && line.empty()) throw DataError("empty event file");

  const auto header = split_line(line, schema.delimiter);
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column '" + name + "' in header");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_src = column(schema.src_column);
  const std::size_t c_dst = column(schema.dst_column);
  const std::size_t c_ts = column(schema.ts_column);
  std::optional<std::size_t> c_label;
  if (!schema.label_column.empty()) c_label = column(schema.label_column);
  std::vector<std::size_t> c_feat;
  if (!schema.feature_columns.empty()) {
    for (const auto& f : schema.feature_columns) c_feat.push_back(column(f));
  } else {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (is_auto_feature(header[i])) c_feat.push_back(i);
    }
  }

  struct RawRow {
    std::string src, dst;
    Event ev;
  };
  std::vector<RawRow> rows;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row_no;
    auto cells = split_line(line, schema.delimiter);
    auto where = [&] {
      return "row " + std::to_string(row_no) + " (line " + std::to_string(line_no) + ")";
    };
    if (cells.size() < header.size()) {
      throw DataError(where() + ": expected " + std::to_string(header.size()) + " columns, got " +
                      std::to_string(cells.size()));
    }
    RawRow r;
    r.src = cells[c_src];
    r.dst = cells[c_dst];
    if (r.src.empty() || r.dst.empty()) throw DataError(where() + ": empty node id");
    auto ts = parse_real(cells[c_ts]);
    if (!ts) throw DataError(where() + ": non-numeric timestamp '" + cells[c_ts] + "'");
    if (*ts < 0.0) throw DataError(where() + ": negative timestamp");
    r.ev.ts = *ts;
    if (c_label) {
      auto lab = parse_real(cells[*c_label]);
      if (!lab) throw DataError(where() + ": non-numeric label");
      r.ev.label = *lab;
    }
    r.ev.features.reserve(c_feat.size());
    for (std::size_t c : c_feat) {
      auto v = parse_real(cells[c]);
      if (!v) throw DataError(where() + ": non-numeric feature in column '" + header[c] + "'");
      r.ev.features.push_back(*v);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("event file has no data rows");

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].ev.ts < rows[b].ev.ts; });

  std::unordered_map<std::string, NodeId> ids;
  auto densify = [&](const std::string& name) {
    auto [it, inserted] = ids.try_emplace(name, static_cast<NodeId>(ids.size()));
    return it->second;
  };
  std::vector<Event> events;
  events.reserve(rows.size());
  for (std::size_t i : order) {
    Event e = std::move(rows[i].ev);
    e.src = densify(rows[i].src);
    e.dst = densify(rows[i].dst);
    events.push_back(std::move(e));
  }
  return TemporalGraph(std::move(events), ids.size());
}

TemporalGraph load_events(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file '" + path + "'");
  return parse_events(in, schema);
}

void write_events(const TemporalGraph& g, std::ostream& out) {
  const bool has_label =
      !g.empty() && std::all_of(g.events().begin(), g.events().end(),
                                [](const Event& e) { return e.label.has_value(); });
  out << "src,dst,ts";
  if (has_label) out << ",label";
  for (std::size_t k = 0; k < g.edge_feature_dim(); ++k) out << ",f" << k;
  out << "\n";
  for (const Event& e : g.events()) {
    out << e.src << ',' << e.dst << ',' << format_double(e.ts);
    if (has_label) out << ',' << format_double(*e.label);
    for (double f : e.features) out << ',' << format_double(f);
    out << "\n";
  }
}

void write_events(const TemporalGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_events(g, out);
}

// ---- splits -------------------------------------------------------------

Split chronological_split(const TemporalGraph& g, const SplitSpec& spec) {
  if (!(spec.train_frac > 0.0 && spec.train_frac < 1.0) ||
      !(spec.val_frac > 0.0 && spec.val_frac < 1.0) || spec.train_frac + spec.val_frac >= 1.0) {
    throw ConfigError("split fractions must lie in (0,1) with train_frac + val_frac < 1");
  }
  if (g.empty()) throw DataError("cannot split an empty graph");
  const std::size_t n = g.num_events();
  const auto& ev = g.events();
  // Boundaries are pushed forward to the end of a timestamp tie group.
  auto absorb_ties = [&](std::size_t end) {
    while (end > 0 && end < n && ev[end].ts == ev[end - 1].ts) ++end;
    return end;
  };
  constexpr double kEps = 1e-9;
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_frac * n + kEps));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * n + kEps));

  Split s;
  const std::size_t train_end = absorb_ties(n_train);
  const std::size_t val_end = std::max(train_end, absorb_ties(std::min(n, n_train + n_val)));
  s.train = {0, train_end};
  s.val = {train_end, val_end};
  s.test = {val_end, n};
  s.t_train_end = train_end > 0 ? ev[train_end - 1].ts : ev.front().ts;
  s.t_val_end = val_end > 0 ? ev[val_end - 1].ts : s.t_train_end;
  s.degenerate = s.train.empty() || s.val.empty() || s.test.empty();
  if (train_end != n_train || val_end != n_train + n_val) {
    log_warning("split boundary moved to keep timestamp ties together: train=[0," +
                std::to_string(train_end) + ") val=[" + std::to_string(train_end) + "," +
                std::to_string(val_end) + ") test=[" + std::to_string(val_end) + "," +
                std::to_string(n) + ")");
  }
  if (s.degenerate) log_warning("degenerate split: at least one range is empty");
  return s;
}

// ---- neighbor queries ---------------------------------------------------

std::vector<Neighbor> recent_neighbors(const TemporalGraph& g, NodeId node, double tau,
                                       std::size_t m) {
  const auto& idx = g.node_events(node);
  const std::size_t avail = g.history_size(node, tau);
  const std::size_t take = std::min(avail, m);
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t k = 0; k < take; ++k) {
    const std::size_t i = idx[avail - 1 - k];
    out.push_back({g.other_endpoint(i, node), g.event(i).ts, i});
  }
  return out;
}

std::vector<Neighbor> uniform_neighbors(const TemporalGraph& g, NodeId node, double tau,
                                        std::size_t m, std::uint64_t seed) {
  const auto& idx = g.node_events(node);
  const std::size_t avail = g.history_size(node, tau);
  std::vector<std::size_t> picked;
  if (avail <= m) {
    picked.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(avail));
  } else {
    // Partial Fisher-Yates over positions [0, avail).
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> pos(avail);
    std::iota(pos.begin(), pos.end(), 0);
    for (std::size_t k = 0; k < m; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, avail - 1);
      std::swap(pos[k], pos[pick(rng)]);
      picked.push_back(idx[pos[k]]);
    }
  }
  std::sort(picked.begin(), picked.end(), std::greater<>());
  std::vector<Neighbor> out;
  out.reserve(picked.size());
  for (std::size_t i : picked) out.push_back({g.other_endpoint(i, node), g.event(i).ts, i});
  return out;
}

std::vector<std::pair<PairKey, std::vector<double>>> pair_intervals(const TemporalGraph& g) {
  std::map<PairKey, std::vector<double>> times;
  for (const Event& e : g.events()) times[PairKey::of(e.src, e.dst)].push_back(e.ts);
  std::vector<std::pair<PairKey, std::vector<double>>> out;
  for (auto& [key, ts] : times) {
    if (ts.size() < 2) continue;
    std::vector<double> gaps;
    gaps.reserve(ts.size() - 1);
    for (std::size_t i = 1; i < ts.size(); ++i) gaps.push_back(ts[i] - ts[i - 1]);
    out.emplace_back(key, std::move(gaps));
  }
  return out;
}

std::vector<double> interaction_intervals(const TemporalGraph& g) {
  std::vector<double> flat;
  for (auto& [key, gaps] : pair_intervals(g)) flat.insert(flat.end(), gaps.begin(), gaps.end());
  return flat;
}

// ---- synthetic fixture --------------------------------------------------

TemporalGraph synth_pareto_graph(const SynthSpec& spec) {
  if (!(spec.pareto_shape > 3.0)) {
    throw ConfigError("pareto_shape must exceed 3 (the skewness of Pareto gaps is finite only "
                      "for shape > 3)");
  }
  if (!(spec.pareto_scale > 0.0) || !(spec.horizon > 0.0)) {
    throw ConfigError("pareto_scale and horizon must be positive");
  }
  if (spec.num_nodes < 2) throw ConfigError("synthetic graph needs at least 2 nodes");
  if (!(spec.frequent_period_min > 0.0) || spec.frequent_period_max < spec.frequent_period_min) {
    throw ConfigError("invalid frequent period range");
  }
  const std::size_t max_pairs = spec.num_nodes * (spec.num_nodes - 1) / 2;
  if (spec.num_frequent_pairs + spec.num_infrequent_pairs > max_pairs) {
    throw ConfigError("more pairs requested than the node count allows");
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::unordered_set<PairKey, PairKeyHash> used;
  std::vector<NodeId> perm(spec.num_nodes);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  auto random_pair = [&]() {
    std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(spec.num_nodes - 1));
    while (true) {
      NodeId u = node(rng), v = node(rng);
      if (u == v) continue;
      if (used.insert(PairKey::of(u, v)).second) return std::make_pair(u, v);
    }
  };

  std::vector<Event> events;
  // Frequent pairs first take a perfect matching over a shuffled node order.
  for (std::size_t p = 0; p < spec.num_frequent_pairs; ++p) {
    std::pair<NodeId, NodeId> uv;
    if (2 * p + 1 < perm.size()) {
      uv = {perm[2 * p], perm[2 * p + 1]};
      used.insert(PairKey::of(uv.first, uv.second));
    } else {
      uv = random_pair();
    }
    const double period =
        spec.frequent_period_min + (spec.frequent_period_max - spec.frequent_period_min) * unit(rng);
    for (double t = period * unit(rng); t <= spec.horizon; t += period) {
      events.push_back({uv.first, uv.second, t, {}, 0, std::nullopt});
    }
  }
  for (std::size_t p = 0; p < spec.num_infrequent_pairs; ++p) {
    auto uv = random_pair();
    double t = spec.pareto_scale * unit(rng);
    while (t <= spec.horizon) {
      events.push_back({uv.first, uv.second, t, {}, 0, std::nullopt});
      const double u01 = 1.0 - unit(rng);  // (0, 1]
      t += spec.pareto_scale * std::pow(u01, -1.0 / spec.pareto_shape);
    }
  }
  if (events.empty()) throw ConfigError("synthetic spec produced no events");

  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.ts < b.ts; });
  std::vector<NodeId> relabel(spec.num_nodes, std::numeric_limits<NodeId>::max());
  NodeId next = 0;
  for (Event& e : events) {
    for (NodeId* x : {&e.src, &e.dst}) {
      if (relabel[*x] == std::numeric_limits<NodeId>::max()) relabel[*x] = next++;
      *x = relabel[*x];
    }
  }
  return TemporalGraph(std::move(events), next);
}

}  // namespace tami
