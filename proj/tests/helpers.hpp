#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "tami/event_store.hpp"

namespace tami::testing {

inline Event ev(NodeId s, NodeId d, double ts, std::vector<double> f = {}) {
  Event e;
  e.src = s;
  e.dst = d;
  e.ts = ts;
  e.features = std::move(f);
  return e;
}

inline TemporalGraph graph_of(std::vector<Event> events, std::size_t nodes = 0) {
  if (nodes == 0) {
    for (const auto& e : events) nodes = std::max<std::size_t>(nodes, std::max(e.src, e.dst) + 1);
  }
  return TemporalGraph(std::move(events), nodes);
}

inline TemporalGraph random_graph(std::size_t nodes, std::size_t events, double horizon,
                                  std::uint64_t seed, std::size_t feat = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(nodes - 1));
  std::uniform_real_distribution<double> ts(0.0, horizon);
  std::normal_distribution<double> f(0.0, 1.0);
  std::vector<Event> out;
  for (std::size_t i = 0; i < events; ++i) {
    Event e;
    e.src = node(rng);
    do {
      e.dst = node(rng);
    } while (e.dst == e.src);
    e.ts = ts(rng);
    for (std::size_t k = 0; k < feat; ++k) e.features.push_back(f(rng));
    out.push_back(std::move(e));
  }
  return TemporalGraph(std::move(out), nodes);
}

}  // namespace tami::testing
