#include "tami/edgebank.hpp"

#include <limits>

#include "tami/error.hpp"

namespace tami {

std::string to_string(EdgeBankVariant v) {
  switch (v) {
    case EdgeBankVariant::infinity:
      return "infinity";
    case EdgeBankVariant::tw_ts:
      return "tw_ts";
    case EdgeBankVariant::tw_re:
      return "tw_re";
    case EdgeBankVariant::th:
      return "th";
  }
  return "?";
}

EdgeBankVariant parse_edgebank_variant(const std::string& s) {
  if (s == "infinity" || s == "inf") return EdgeBankVariant::infinity;
  if (s == "tw_ts") return EdgeBankVariant::tw_ts;
  if (s == "tw_re") return EdgeBankVariant::tw_re;
  if (s == "th") return EdgeBankVariant::th;
  throw ConfigError("EdgeBank variant must be infinity, tw_ts, tw_re or th; got '" + s + "'");
}

EdgeBank::EdgeBank(const EdgeBankConfig& cfg) : cfg_(cfg) {
  if (cfg_.variant == EdgeBankVariant::tw_ts && !(cfg_.window >= 0.0)) {
    throw ConfigError("EdgeBank tw_ts needs a non-negative window");
  }
}

double EdgeBank::repeat_window(NodeId u, NodeId v) const {
  auto it = pairs_.find(PairKey::of(u, v));
  if (it != pairs_.end() && it->second.count >= 2) {
    return (it->second.last - it->second.first) / static_cast<double>(it->second.count - 1);
  }
  if (interval_count_ == 0) return std::numeric_limits<double>::infinity();
  return interval_sum_ / static_cast<double>(interval_count_);
}

double EdgeBank::predict(NodeId u, NodeId v, double tau) const {
  auto it = pairs_.find(PairKey::of(u, v));
  if (it == pairs_.end() || !(it->second.first < tau)) return 0.0;
  const PairState& s = it->second;
  switch (cfg_.variant) {
    case EdgeBankVariant::infinity:
      return 1.0;
    case EdgeBankVariant::tw_ts:
      return tau - s.last <= cfg_.window ? 1.0 : 0.0;
    case EdgeBankVariant::tw_re:
      return tau - s.last <= repeat_window(u, v) ? 1.0 : 0.0;
    case EdgeBankVariant::th:
      return s.count > cfg_.threshold ? 1.0 : 0.0;
  }
  return 0.0;
}

void EdgeBank::update(const Event& e) {
  auto [it, inserted] = pairs_.try_emplace(PairKey::of(e.src, e.dst));
  PairState& s = it->second;
  if (inserted) {
    s.first = s.last = e.ts;
    s.count = 1;
    return;
  }
  interval_sum_ += e.ts - s.last;
  ++interval_count_;
  s.last = e.ts;
  ++s.count;
}

std::vector<double> EdgeBank::score(const TemporalGraph& /*g*/, std::span<const Candidate> pairs,
                                    double tau) const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const Candidate& c : pairs) out.push_back(predict(c.u, c.v, tau));
  return out;
}

}  // namespace tami
