#include "tami/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "tami/error.hpp"
#include "tami/model.hpp"
#include "tami/parallel.hpp"

namespace tami {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::size_t kMaxAttempts = 64;

std::unordered_map<PairKey, std::vector<double>, PairKeyHash> collect_pair_times(
    const TemporalGraph& g) {
  std::unordered_map<PairKey, std::vector<double>, PairKeyHash> out;
  for (const Event& e : g.events()) out[PairKey::of(e.src, e.dst)].push_back(e.ts);
  return out;
}

std::optional<double> ap_or_none(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (std::find(labels.begin(), labels.end(), 1) == labels.end()) return std::nullopt;
  return average_precision(scores, labels);
}

void append_record(const PositiveRecord& r, std::vector<double>& scores, std::vector<int>& labels) {
  scores.push_back(r.positive_score);
  labels.push_back(1);
  for (double s : r.negative_scores) {
    scores.push_back(s);
    labels.push_back(0);
  }
}

}  // namespace

// ---- scorer adapter -----------------------------------------------------

std::vector<double> ModelScorer::score(const TemporalGraph& g, std::span<const Candidate> pairs,
                                       double tau) const {
  std::vector<NodeId> nodes;
  for (const Candidate& c : pairs) {
    nodes.push_back(c.u);
    nodes.push_back(c.v);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::vector<std::vector<double>> emb(nodes.size());
  parallel_for(nodes.size(), threads_,
               [&](std::size_t i) { emb[i] = model_.node_embedding(g, nodes[i], tau); });
  auto find = [&](NodeId x) -> const std::vector<double>& {
    return emb[static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), x) -
                                        nodes.begin())];
  };
  std::vector<double> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i] = model_.predict_from_embeddings(find(pairs[i].u), find(pairs[i].v), pairs[i].u,
                                            pairs[i].v, tau);
  }
  return out;
}

void ModelScorer::observe(const TemporalGraph& g, const Event& e) { model_.process_event(g, e); }

// ---- metrics ------------------------------------------------------------

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("AP: scores and labels differ in length");
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("AP: labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  if (positives == 0) throw DataError("AP undefined without positive labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return labels[a] < labels[b];
  });
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      ++tp;
      sum += static_cast<double>(tp) / static_cast<double>(rank + 1);
    }
  }
  return sum / static_cast<double>(positives);
}

double reciprocal_rank(double positive, std::span<const double> negatives) {
  std::size_t rank = 1;
  for (double s : negatives) {
    if (s >= positive) ++rank;
  }
  return 1.0 / static_cast<double>(rank);
}

// ---- negative sampling ------------------------------------------------------

std::string to_string(NegKind k) {
  switch (k) {
    case NegKind::random:
      return "random";
    case NegKind::historical:
      return "historical";
    case NegKind::inductive:
      return "inductive";
  }
  return "?";
}

NegKind parse_neg_kind(const std::string& s) {
  if (s == "rnd" || s == "random") return NegKind::random;
  if (s == "hist" || s == "historical") return NegKind::historical;
  if (s == "ind" || s == "inductive") return NegKind::inductive;
  throw ConfigError("negative strategy must be rnd, hist or ind; got '" + s + "'");
}

NegativeSampler::NegativeSampler(const TemporalGraph& g, const Split& split,
                                 const NegStrategy& strategy)
    : g_(g), strategy_(strategy), pair_times_(collect_pair_times(g)) {
  if (strategy_.k < 1) throw ConfigError("negatives per positive must be >= 1");
  if (g.num_nodes() == 0) throw DataError("negative sampling on an empty graph");
  if (strategy_.kind == NegKind::random) return;

  std::unordered_set<PairKey, PairKeyHash> seen;
  auto add_range = [&](IndexRange r, bool collect) {
    for (std::size_t i = r.begin; i < r.end; ++i) {
      const Event& e = g.event(i);
      if (seen.insert(PairKey::of(e.src, e.dst)).second && collect) pool_.push_back({e.src, e.dst});
    }
  };
  if (strategy_.kind == NegKind::historical) {
    add_range(split.train, true);
  } else {
    add_range(split.train, false);
    add_range(split.val, false);
    add_range(split.test, true);
  }
  if (pool_.empty()) {
    log_warning(to_string(strategy_.kind) +
                " negative pool is empty; falling back to random negatives");
  }
}

bool NegativeSampler::occurs_at(const PairKey& key, double tau) const {
  auto it = pair_times_.find(key);
  if (it == pair_times_.end()) return false;
  return std::binary_search(it->second.begin(), it->second.end(), tau);
}

Candidate NegativeSampler::random_negative(const Event& positive, std::uint64_t& state) const {
  const PairKey pos = PairKey::of(positive.src, positive.dst);
  const std::size_t n = g_.num_nodes();
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    state = splitmix(state);
    const auto v = static_cast<NodeId>(state % n);
    if (!(PairKey::of(positive.src, v) == pos)) return {positive.src, v};
  }
  if (!fell_back_) {
    log_warning("random negative sampling cannot avoid the positive pair on this graph");
    fell_back_ = true;
  }
  return {positive.src, positive.dst == 0 && n > 1 ? NodeId{1} : NodeId{0}};
}

std::vector<Candidate> NegativeSampler::sample(const Event& positive) const {
  std::uint64_t state = splitmix(strategy_.seed ^ splitmix(positive.index + 0x51ed27));
  std::vector<Candidate> out;
  out.reserve(strategy_.k);
  const PairKey pos = PairKey::of(positive.src, positive.dst);
  for (std::size_t j = 0; j < strategy_.k; ++j) {
    bool found = false;
    if (!pool_.empty()) {
      for (std::size_t attempt = 0; attempt < kMaxAttempts && !found; ++attempt) {
        state = splitmix(state);
        const Candidate& c = pool_[state % pool_.size()];
        const PairKey key = PairKey::of(c.u, c.v);
        if (key == pos || occurs_at(key, positive.ts)) continue;
        out.push_back(c);
        found = true;
      }
      if (!found && !fell_back_) {
        log_warning(to_string(strategy_.kind) +
                    " negative pool exhausted for a positive; falling back to random");
        fell_back_ = true;
      }
    }
    if (!found) out.push_back(random_negative(positive, state));
  }
  return out;
}

// ---- evaluation -------------------------------------------------------------

std::string to_string(EimGroup g) {
  switch (g) {
    case EimGroup::exclusive:
      return "exclusive";
    case EimGroup::isolated:
      return "isolated";
    case EimGroup::mutual:
      return "mutual";
  }
  return "?";
}

std::optional<double> mean_pair_interval(const std::vector<double>& pair_times, double tau) {
  auto end = std::lower_bound(pair_times.begin(), pair_times.end(), tau);
  const auto n = static_cast<std::size_t>(end - pair_times.begin());
  if (n == 0) return std::nullopt;
  return (tau - pair_times.front()) / static_cast<double>(n);
}

EvalReport evaluate(LinkScorer& scorer, const TemporalGraph& g, IndexRange range,
                    const NegativeSampler& sampler, const EvalOptions& opt) {
  if (opt.mode == EvalMode::inductive_nodes && opt.seen_in_train == nullptr) {
    throw ConfigError("inductive evaluation needs the set of nodes seen in training");
  }
  const auto pair_times = collect_pair_times(g);
  EvalReport rep;
  rep.k = sampler.strategy().k;
  rep.neg_kind = sampler.strategy().kind;
  rep.mode = opt.mode;

  std::vector<double> scores;
  std::vector<int> labels;
  double rr_sum = 0.0;
  std::vector<Candidate> cands;
  for (std::size_t i = range.begin; i < range.end; ++i) {
    const Event& e = g.event(i);
    bool keep = true;
    if (opt.mode == EvalMode::inductive_nodes) {
      const auto& seen = *opt.seen_in_train;
      keep = !seen[e.src] || !seen[e.dst];
    }
    if (keep) {
      cands.clear();
      cands.push_back({e.src, e.dst});
      const auto negs = sampler.sample(e);
      cands.insert(cands.end(), negs.begin(), negs.end());
      const auto s = scorer.score(g, cands, e.ts);
      PositiveRecord rec;
      rec.positive_score = s[0];
      rec.negative_scores.assign(s.begin() + 1, s.end());
      rr_sum += reciprocal_rank(rec.positive_score, rec.negative_scores);
      append_record(rec, scores, labels);
      ++rep.num_positives;
      rep.num_negatives += negs.size();
      if (opt.keep_records) {
        rec.event = e;
        rec.mean_interval = mean_pair_interval(pair_times.at(PairKey::of(e.src, e.dst)), e.ts);
        rec.group = eim_grouping(g, e.src, e.dst, e.ts, opt.diagnostics_m);
        rec.appearance = appearance_index(g, e.src, e.dst, e.ts, opt.diagnostics_m);
        rep.records.push_back(std::move(rec));
      }
    }
    scorer.observe(g, e);
  }
  if (rep.num_positives == 0) throw DataError("evaluation range has no eligible positives");
  rep.ap = average_precision(scores, labels);
  rep.mrr = rr_sum / static_cast<double>(rep.num_positives);
  return rep;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"ap", r.ap},
                     {"mrr", r.mrr},
                     {"num_positives", r.num_positives},
                     {"num_negatives", r.num_negatives},
                     {"K", r.k},
                     {"negatives", to_string(r.neg_kind)},
                     {"mode", r.mode == EvalMode::transductive ? "transductive" : "inductive"}};
}

// ---- diagnostics ------------------------------------------------------------

std::vector<double> log_bucket_edges(std::span<const PositiveRecord> records, std::size_t buckets) {
  if (buckets < 1) throw ConfigError("need at least one bucket");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : records) {
    if (!r.mean_interval) continue;
    lo = std::min(lo, *r.mean_interval);
    hi = std::max(hi, *r.mean_interval);
  }
  if (!std::isfinite(lo)) return {0.0, std::numeric_limits<double>::infinity()};
  lo = std::max(lo, 1e-12);
  hi = std::max(hi, lo * (1.0 + 1e-9));
  std::vector<double> edges(buckets + 1);
  const double llo = std::log(lo), lhi = std::log(hi);
  for (std::size_t b = 0; b <= buckets; ++b) {
    edges[b] = std::exp(llo + (lhi - llo) * static_cast<double>(b) / static_cast<double>(buckets));
  }
  edges.front() = 0.0;
  edges.back() = std::numeric_limits<double>::infinity();
  return edges;
}

std::vector<BucketResult> bucketed_ap_by_interval(std::span<const PositiveRecord> records,
                                                  std::span<const double> edges) {
  if (edges.size() < 2) throw ConfigError("bucket edges need at least two values");
  for (std::size_t b = 1; b < edges.size(); ++b) {
    if (!(edges[b] > edges[b - 1])) throw ConfigError("bucket edges must increase");
  }
  const std::size_t nb = edges.size() - 1;
  std::vector<std::vector<double>> sc(nb + 1);
  std::vector<std::vector<int>> lb(nb + 1);
  std::vector<BucketResult> out(nb + 1);
  for (std::size_t b = 0; b < nb; ++b) {
    out[b].lo = edges[b];
    out[b].hi = edges[b + 1];
    out[b].label = "bucket" + std::to_string(b);
  }
  out[nb].label = "no_history";
  out[nb].lo = out[nb].hi = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : records) {
    std::size_t b = nb;
    if (r.mean_interval) {
      const double x = *r.mean_interval;
      if (x < edges.front() || x >= edges.back()) {
        throw ConfigError("bucket edges do not cover interval " + std::to_string(x));
      }
      b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) -
                                   edges.begin()) - 1;
    }
    append_record(r, sc[b], lb[b]);
    ++out[b].positives;
  }
  for (std::size_t b = 0; b <= nb; ++b) out[b].ap = ap_or_none(sc[b], lb[b]);
  return out;
}

std::vector<BucketResult> ap_by_group(std::span<const PositiveRecord> records) {
  std::vector<BucketResult> out(3);
  std::vector<std::vector<double>> sc(3);
  std::vector<std::vector<int>> lb(3);
  for (std::size_t b = 0; b < 3; ++b) out[b].label = to_string(static_cast<EimGroup>(b));
  for (const auto& r : records) {
    const auto b = static_cast<std::size_t>(r.group);
    append_record(r, sc[b], lb[b]);
    ++out[b].positives;
  }
  for (std::size_t b = 0; b < 3; ++b) out[b].ap = ap_or_none(sc[b], lb[b]);
  return out;
}

std::vector<BucketResult> ap_by_appearance(std::span<const PositiveRecord> records,
                                           std::size_t m) {
  std::vector<BucketResult> out(m + 1);
  std::vector<std::vector<double>> sc(m + 1);
  std::vector<std::vector<int>> lb(m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    out[i].label = std::to_string(i + 1);
    out[i].lo = out[i].hi = static_cast<double>(i + 1);
  }
  out[m].label = ">" + std::to_string(m);
  out[m].lo = out[m].hi = static_cast<double>(m + 1);
  for (const auto& r : records) {
    const std::size_t b = r.appearance && *r.appearance <= m ? *r.appearance - 1 : m;
    append_record(r, sc[b], lb[b]);
    ++out[b].positives;
  }
  for (std::size_t b = 0; b <= m; ++b) out[b].ap = ap_or_none(sc[b], lb[b]);
  return out;
}

std::optional<std::size_t> appearance_index(const TemporalGraph& g, NodeId u, NodeId v,
                                            double tau, std::size_t m) {
  if (m < 1) throw ConfigError("appearance index needs m >= 1");
  auto position = [&](NodeId a, NodeId b) -> std::optional<std::size_t> {
    const auto nbrs = recent_neighbors(g, a, tau, m);
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      if (nbrs[i].node == b) return i + 1;
    }
    return std::nullopt;
  };
  const auto pu = position(u, v);
  const auto pv = position(v, u);
  if (pu && pv) return std::min(*pu, *pv);
  return pu ? pu : pv;
}

EimGroup eim_grouping(const TemporalGraph& g, NodeId u, NodeId v, double tau, std::size_t m) {
  auto appears = [&](NodeId a, NodeId b) {
    for (const auto& nb : recent_neighbors(g, a, tau, m)) {
      if (nb.node == b) return true;
    }
    return false;
  };
  const bool v_in_u = appears(u, v);
  const bool u_in_v = appears(v, u);
  if (v_in_u && u_in_v) return EimGroup::mutual;
  if (v_in_u || u_in_v) return EimGroup::isolated;
  return EimGroup::exclusive;
}

}  // namespace tami
