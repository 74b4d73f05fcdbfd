#include "tami/lha_memory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "tami/error.hpp"

namespace tami {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'M', 'I', 'L', 'H', 'A', '\0'};
constexpr std::uint32_t kSnapshotVersion = 1;

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::ostream& out, const T& v) {
  static_assert(std::endian::native == std::endian::little, "snapshot format is little-endian");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated LHA snapshot");
  return v;
}

}  // namespace

std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::most_recent:
      return "most_recent";
    case Aggregator::mean:
      return "mean";
    case Aggregator::max:
      return "max";
  }
  return "?";
}

Aggregator parse_aggregator(const std::string& s) {
  if (s == "most_recent") return Aggregator::most_recent;
  if (s == "mean") return Aggregator::mean;
  if (s == "max") return Aggregator::max;
  throw ConfigError("aggregator must be most_recent, mean or max; got '" + s + "'");
}

void LhaConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("lha.gamma must lie in [0, 1]");
  if (k < 1) throw ConfigError("lha.k must be >= 1");
  if (dim < 1) throw ConfigError("lha dimension must be >= 1");
}

std::uint64_t LhaConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, &gamma, sizeof gamma);
  const std::uint64_t kk = k, dd = dim, agg = static_cast<std::uint64_t>(aggregator);
  h = fnv1a(h, &kk, sizeof kk);
  h = fnv1a(h, &dd, sizeof dd);
  h = fnv1a(h, &agg, sizeof agg);
  return h;
}

LhaMemory::LhaMemory(const LhaConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.aggregator == Aggregator::max) {
    projection_ = nn::Mlp({{cfg_.dim, cfg_.dim}, {nn::Activation::relu}, seed});
    has_projection_ = true;
  }
}

const PairHistory* LhaMemory::history(NodeId u, NodeId v) const {
  auto it = pairs_.find(PairKey::of(u, v));
  return it == pairs_.end() ? nullptr : &it->second;
}

std::vector<double> LhaMemory::lookup(NodeId u, NodeId v, double tau,
                                      AggregateTrace* trace) const {
  std::vector<double> h(cfg_.dim, 0.0);
  if (trace) *trace = AggregateTrace{};
  const PairHistory* hist = history(u, v);
  if (!hist) return h;
  std::vector<const HistoryEntry*> live;
  for (const HistoryEntry& e : *hist) {
    if (e.ts < tau) live.push_back(&e);
  }
  if (live.empty()) return h;
  if (trace) trace->empty = false;

  switch (cfg_.aggregator) {
    case Aggregator::most_recent:
      h = live.front()->r;
      break;
    case Aggregator::mean:
      for (const HistoryEntry* e : live) {
        for (std::size_t i = 0; i < cfg_.dim; ++i) h[i] += e->r[i];
      }
      for (double& x : h) x /= static_cast<double>(live.size());
      break;
    case Aggregator::max: {
      std::vector<nn::MlpTape> tapes(live.size());
      std::vector<std::size_t> arg(cfg_.dim, 0);
      for (std::size_t j = 0; j < live.size(); ++j) {
        projection_.forward(live[j]->r, tapes[j]);
        const auto& y = tapes[j].output();
        for (std::size_t i = 0; i < cfg_.dim; ++i) {
          if (j == 0 || y[i] > h[i]) {
            h[i] = y[i];
            arg[i] = j;
          }
        }
      }
      if (trace) {
        trace->tapes = std::move(tapes);
        trace->argmax = std::move(arg);
      }
      break;
    }
  }
  return h;
}

void LhaMemory::projection_backward(const AggregateTrace& trace, std::span<const double> dh,
                                    std::span<double> dparams) const {
  if (!has_projection_ || trace.empty) return;
  std::vector<std::vector<double>> per_entry(trace.tapes.size(),
                                             std::vector<double>(cfg_.dim, 0.0));
  for (std::size_t i = 0; i < cfg_.dim; ++i) per_entry[trace.argmax[i]][i] = dh[i];
  for (std::size_t j = 0; j < trace.tapes.size(); ++j) {
    projection_.backward(trace.tapes[j], per_entry[j], dparams);
  }
}

const std::vector<double>& LhaMemory::update(NodeId u, NodeId v, double tau,
                                             std::span<const double> c) {
  if (c.size() != cfg_.dim) {
    throw DataError("LHA update: contribution has size " + std::to_string(c.size()) +
                    ", expected " + std::to_string(cfg_.dim));
  }
  PairHistory& hist = pairs_[PairKey::of(u, v)];
  if (!hist.empty() && tau < hist.front().ts) {
    throw DataError("LHA update out of chronological order for pair (" + std::to_string(u) + "," +
                    std::to_string(v) + ")");
  }
  HistoryEntry e;
  e.ts = tau;
  e.r.resize(cfg_.dim);
  const double g = cfg_.gamma;
  for (std::size_t i = 0; i < cfg_.dim; ++i) {
    const double prev = hist.empty() ? 0.0 : hist.front().r[i];
    e.r[i] = g * c[i] + (1.0 - g) * prev;
  }
  hist.push_front(std::move(e));
  while (hist.size() > cfg_.k) hist.pop_back();
  return hist.front().r;
}

LhaSnapshot LhaMemory::snapshot() const { return LhaSnapshot{cfg_, pairs_}; }

void LhaMemory::restore(const LhaSnapshot& snap) {
  if (!(snap.config == cfg_)) throw ConfigError("LHA snapshot config does not match memory");
  pairs_ = snap.pairs;
}

void write_snapshot(const LhaSnapshot& snap, std::ostream& out) {
  out.write(kMagic, sizeof kMagic);
  put(out, kSnapshotVersion);
  put(out, snap.config.gamma);
  put(out, static_cast<std::uint64_t>(snap.config.k));
  put(out, static_cast<std::uint64_t>(snap.config.dim));
  put(out, static_cast<std::uint8_t>(snap.config.aggregator));
  put(out, snap.config.hash());
  std::vector<PairKey> keys;
  keys.reserve(snap.pairs.size());
  for (const auto& [k, h] : snap.pairs) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  put(out, static_cast<std::uint64_t>(keys.size()));
  for (const PairKey& k : keys) {
    const PairHistory& h = snap.pairs.at(k);
    put(out, k.a);
    put(out, k.b);
    put(out, static_cast<std::uint64_t>(h.size()));
    for (const HistoryEntry& e : h) {
      put(out, e.ts);
      out.write(reinterpret_cast<const char*>(e.r.data()),
                static_cast<std::streamsize>(e.r.size() * sizeof(double)));
    }
  }
  if (!out) throw DataError("failed writing LHA snapshot");
}

LhaSnapshot read_snapshot(std::istream& in) {
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("not an LHA snapshot");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kSnapshotVersion) {
    throw DataError("unsupported LHA snapshot version " + std::to_string(version));
  }
  LhaSnapshot snap;
  snap.config.gamma = get<double>(in);
  snap.config.k = get<std::uint64_t>(in);
  snap.config.dim = get<std::uint64_t>(in);
  const auto agg = get<std::uint8_t>(in);
  if (agg > static_cast<std::uint8_t>(Aggregator::max)) throw DataError("bad aggregator tag");
  snap.config.aggregator = static_cast<Aggregator>(agg);
  if (get<std::uint64_t>(in) != snap.config.hash()) throw DataError("LHA snapshot hash mismatch");
  snap.config.validate();
  const auto n = get<std::uint64_t>(in);
  for (std::uint64_t p = 0; p < n; ++p) {
    PairKey key;
    key.a = get<NodeId>(in);
    key.b = get<NodeId>(in);
    const auto len = get<std::uint64_t>(in);
    if (len > snap.config.k) throw DataError("LHA snapshot entry exceeds capacity");
    PairHistory h;
    for (std::uint64_t j = 0; j < len; ++j) {
      HistoryEntry e;
      e.ts = get<double>(in);
      e.r.resize(snap.config.dim);
      in.read(reinterpret_cast<char*>(e.r.data()),
              static_cast<std::streamsize>(e.r.size() * sizeof(double)));
      if (!in) throw DataError("truncated LHA snapshot");
      h.push_back(std::move(e));
    }
    snap.pairs.emplace(key, std::move(h));
  }
  return snap;
}

}  // namespace tami
