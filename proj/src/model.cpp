#include "tami/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tami/error.hpp"

namespace tami {

namespace {

constexpr int kCheckpointVersion = 1;

std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden,
                               std::size_t out) {
  std::vector<std::size_t> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

std::vector<nn::Activation> acts(std::size_t layers, nn::Activation last) {
  std::vector<nn::Activation> a(layers, nn::Activation::relu);
  a.back() = last;
  return a;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t x) {
  h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

}  // namespace

std::string to_string(NeighborSampling s) {
  return s == NeighborSampling::recent ? "recent" : "uniform";
}

NeighborSampling parse_neighbor_sampling(const std::string& s) {
  if (s == "recent") return NeighborSampling::recent;
  if (s == "uniform") return NeighborSampling::uniform;
  throw ConfigError("neighbor sampling must be 'recent' or 'uniform', got '" + s + "'");
}

// ---- config -------------------------------------------------------------

void ModelConfig::validate() const {
  if (backbone.num_neighbors < 1) throw ConfigError("backbone.num_neighbors must be >= 1");
  if (backbone.dim < 1) throw ConfigError("backbone.dim must be >= 1");
  if (backbone.time_dim < 1) throw ConfigError("backbone.time_dim must be >= 1");
  for (std::size_t h : backbone.token_hidden) {
    if (h < 1) throw ConfigError("token hidden widths must be >= 1");
  }
  for (std::size_t h : backbone.combine_hidden) {
    if (h < 1) throw ConfigError("combine hidden widths must be >= 1");
  }
  for (std::size_t h : predictor_hidden) {
    if (h < 1) throw ConfigError("predictor hidden widths must be >= 1");
  }
  lha.validate();
}

std::uint64_t ModelConfig::hash() const {
  nlohmann::json j = *this;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{
      {"backbone",
       {{"num_neighbors", c.backbone.num_neighbors},
        {"dim", c.backbone.dim},
        {"time_dim", c.backbone.time_dim},
        {"token_hidden", c.backbone.token_hidden},
        {"combine_hidden", c.backbone.combine_hidden},
        {"sampling", to_string(c.backbone.sampling)}}},
      {"use_lte", c.use_lte},
      {"use_lha", c.use_lha},
      {"trainable_time", c.trainable_time},
      {"lha",
       {{"gamma", c.lha.gamma},
        {"k", c.lha.k},
        {"dim", c.lha.dim},
        {"aggregator", to_string(c.lha.aggregator)}}},
      {"predictor_hidden", c.predictor_hidden},
      {"node_feature_dim", c.node_feature_dim},
      {"edge_feature_dim", c.edge_feature_dim},
      {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const auto& b = j.at("backbone");
  c.backbone.num_neighbors = b.at("num_neighbors").get<std::size_t>();
  c.backbone.dim = b.at("dim").get<std::size_t>();
  c.backbone.time_dim = b.at("time_dim").get<std::size_t>();
  c.backbone.token_hidden = b.at("token_hidden").get<std::vector<std::size_t>>();
  c.backbone.combine_hidden = b.at("combine_hidden").get<std::vector<std::size_t>>();
  c.backbone.sampling = parse_neighbor_sampling(b.at("sampling").get<std::string>());
  c.use_lte = j.at("use_lte").get<bool>();
  c.use_lha = j.at("use_lha").get<bool>();
  c.trainable_time = j.at("trainable_time").get<bool>();
  const auto& l = j.at("lha");
  c.lha.gamma = l.at("gamma").get<double>();
  c.lha.k = l.at("k").get<std::size_t>();
  c.lha.dim = l.at("dim").get<std::size_t>();
  c.lha.aggregator = parse_aggregator(l.at("aggregator").get<std::string>());
  c.predictor_hidden = j.at("predictor_hidden").get<std::vector<std::size_t>>();
  c.node_feature_dim = j.at("node_feature_dim").get<std::size_t>();
  c.edge_feature_dim = j.at("edge_feature_dim").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

// ---- gradients ----------------------------------------------------------

void ModelGrad::zero() {
  for (auto& b : blocks) std::fill(b.begin(), b.end(), 0.0);
}

void ModelGrad::add(const ModelGrad& other, double scale) {
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto& dst = blocks[k];
    const auto& src = other.blocks[k];
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
}

void ModelGrad::scale(double s) {
  for (auto& b : blocks) {
    for (double& x : b) x *= s;
  }
}

bool ModelGrad::all_finite() const {
  for (const auto& b : blocks) {
    for (double x : b) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

// ---- model --------------------------------------------------------------

TamiModel::TamiModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& bb = cfg_.backbone;
  const std::size_t d = bb.dim;
  const std::size_t dr = cfg_.lha.dim;
  encoder_ = TimeEncoder(bb.time_dim, cfg_.use_lte ? EncodingMode::log : EncodingMode::original,
                         cfg_.trainable_time);
  const std::size_t tok_in = cfg_.node_feature_dim + cfg_.edge_feature_dim + bb.time_dim;
  auto tok_sizes = chain(tok_in, bb.token_hidden, d);
  token_ = nn::Mlp({tok_sizes, acts(tok_sizes.size() - 1, nn::Activation::relu), cfg_.seed * 7 + 1});
  auto comb_sizes = chain(d + cfg_.node_feature_dim, bb.combine_hidden, d);
  combine_ = nn::Mlp(
      {comb_sizes, acts(comb_sizes.size() - 1, nn::Activation::identity), cfg_.seed * 7 + 2});
  cproj_ = nn::Mlp({{2 * d, dr, dr},
                    {nn::Activation::relu, nn::Activation::identity},
                    cfg_.seed * 7 + 3});
  const std::vector<std::size_t> pred_hidden =
      cfg_.predictor_hidden.empty() ? std::vector<std::size_t>{dr} : cfg_.predictor_hidden;
  auto pred_sizes = chain(predictor_input_dim(), pred_hidden, 1);
  predictor_ = nn::Mlp(
      {pred_sizes, acts(pred_sizes.size() - 1, nn::Activation::sigmoid), cfg_.seed * 7 + 4});
  memory_ = LhaMemory(cfg_.lha, cfg_.seed * 7 + 5);
}

std::size_t TamiModel::predictor_input_dim() const {
  return 2 * cfg_.backbone.dim + (cfg_.use_lha ? cfg_.lha.dim : 0);
}

std::vector<Neighbor> TamiModel::sample_neighbors(const TemporalGraph& g, NodeId u,
                                                  double tau) const {
  const std::size_t m = cfg_.backbone.num_neighbors;
  if (cfg_.backbone.sampling == NeighborSampling::recent) return recent_neighbors(g, u, tau, m);
  std::uint64_t tbits = 0;
  std::memcpy(&tbits, &tau, sizeof tbits);
  const std::uint64_t seed = mix(mix(cfg_.seed, u), tbits);
  return uniform_neighbors(g, u, tau, m, seed);
}

void TamiModel::build_token(const TemporalGraph& g, const Neighbor& nb, NodeId /*u*/, double tau,
                            std::vector<double>& tok) const {
  tok.clear();
  const auto& xj = g.node_features(nb.node);
  tok.insert(tok.end(), xj.begin(), xj.end());
  const auto& xe = g.event(nb.event_index).features;
  tok.insert(tok.end(), xe.begin(), xe.end());
  const std::size_t off = tok.size();
  tok.resize(off + encoder_.dim());
  encoder_.encode(tau - nb.ts, std::span<double>(tok).subspan(off));
}

void TamiModel::node_embedding(const TemporalGraph& g, NodeId u, double tau,
                               EmbeddingTrace& tr) const {
  const std::size_t m = cfg_.backbone.num_neighbors;
  const std::size_t d = cfg_.backbone.dim;
  tr.node = u;
  tr.tau = tau;
  tr.neighbors = sample_neighbors(g, u, tau);
  tr.token_tapes.resize(tr.neighbors.size());
  tr.num_pad = m - tr.neighbors.size();

  std::vector<double> pooled(d, 0.0);
  std::vector<double> tok;
  for (std::size_t j = 0; j < tr.neighbors.size(); ++j) {
    build_token(g, tr.neighbors[j], u, tau, tok);
    token_.forward(tok, tr.token_tapes[j]);
    const auto& y = tr.token_tapes[j].output();
    for (std::size_t i = 0; i < d; ++i) pooled[i] += y[i];
  }
  if (tr.num_pad > 0) {
    std::vector<double> zero(token_.input_dim(), 0.0);
    token_.forward(zero, tr.pad_tape);
    const auto& y = tr.pad_tape.output();
    for (std::size_t i = 0; i < d; ++i) pooled[i] += static_cast<double>(tr.num_pad) * y[i];
  }
  for (double& x : pooled) x /= static_cast<double>(m);
  const auto& xu = g.node_features(u);
  pooled.insert(pooled.end(), xu.begin(), xu.end());
  combine_.forward(pooled, tr.combine_tape);
}

std::vector<double> TamiModel::node_embedding(const TemporalGraph& g, NodeId u,
                                              double tau) const {
  EmbeddingTrace tr;
  node_embedding(g, u, tau, tr);
  return tr.embedding();
}

double TamiModel::predict_from_embeddings(std::span<const double> hu, std::span<const double> hv,
                                          NodeId u, NodeId v, double tau,
                                          PredictionTrace* trace) const {
  std::vector<double> in;
  in.reserve(predictor_input_dim());
  in.insert(in.end(), hu.begin(), hu.end());
  in.insert(in.end(), hv.begin(), hv.end());
  PredictionTrace local;
  PredictionTrace& pt = trace ? *trace : local;
  if (cfg_.use_lha) {
    pt.pair_embedding = memory_.lookup(u, v, tau, &pt.aggregate);
    in.insert(in.end(), pt.pair_embedding.begin(), pt.pair_embedding.end());
  } else {
    pt.pair_embedding.clear();
    pt.aggregate = AggregateTrace{};
  }
  predictor_.forward(in, pt.predictor_tape);
  pt.probability = std::clamp(pt.predictor_tape.output()[0], nn::kProbClamp, 1.0 - nn::kProbClamp);
  return pt.probability;
}

double TamiModel::predict_link(const TemporalGraph& g, NodeId u, NodeId v, double tau) const {
  const auto hu = node_embedding(g, u, tau);
  const auto hv = node_embedding(g, v, tau);
  return predict_from_embeddings(hu, hv, u, v, tau);
}

void TamiModel::backward_prediction(const PredictionTrace& pt, double dloss_dp,
                                    std::span<double> dhu, std::span<double> dhv,
                                    ModelGrad& grad) const {
  const std::size_t d = cfg_.backbone.dim;
  std::vector<double> dx(predictor_input_dim());
  const double dy[1] = {dloss_dp};
  predictor_.backward(pt.predictor_tape, dy, grad.blocks[kPredictor], dx);
  for (std::size_t i = 0; i < d; ++i) {
    dhu[i] += dx[i];
    dhv[i] += dx[d + i];
  }
  if (cfg_.use_lha && memory_.projection()) {
    memory_.projection_backward(pt.aggregate, std::span<const double>(dx).subspan(2 * d),
                                grad.blocks[kMaxProj]);
  }
}

void TamiModel::backward_embedding(const TemporalGraph& g, const EmbeddingTrace& tr,
                                   std::span<const double> dh, ModelGrad& grad) const {
  const std::size_t m = cfg_.backbone.num_neighbors;
  const std::size_t d = cfg_.backbone.dim;
  std::vector<double> dcomb(combine_.input_dim());
  combine_.backward(tr.combine_tape, dh, grad.blocks[kCombine], dcomb);
  std::vector<double> dtoken_out(d);
  for (std::size_t i = 0; i < d; ++i) dtoken_out[i] = dcomb[i] / static_cast<double>(m);

  const bool omega_grad = encoder_.trainable();
  std::vector<double> dtok(omega_grad ? token_.input_dim() : 0);
  const std::size_t zoff = token_.input_dim() - encoder_.dim();
  for (std::size_t j = 0; j < tr.neighbors.size(); ++j) {
    token_.backward(tr.token_tapes[j], dtoken_out, grad.blocks[kToken], dtok);
    if (omega_grad) {
      encoder_.accumulate_grad(tr.tau - tr.neighbors[j].ts,
                               std::span<const double>(dtok).subspan(zoff), grad.blocks[kOmega]);
    }
  }
  if (tr.num_pad > 0) {
    std::vector<double> dpad(d);
    for (std::size_t i = 0; i < d; ++i) dpad[i] = dtoken_out[i] * static_cast<double>(tr.num_pad);
    token_.backward(tr.pad_tape, dpad, grad.blocks[kToken]);
  }
  (void)g;
}

void TamiModel::process_event(const TemporalGraph& g, const Event& e) {
  if (e.ts < stream_ts_) {
    throw DataError("process_event: event " + std::to_string(e.index) +
                    " arrives out of chronological order");
  }
  stream_ts_ = e.ts;
  if (!cfg_.use_lha) return;
  auto in = node_embedding(g, e.src, e.ts);
  const auto hv = node_embedding(g, e.dst, e.ts);
  in.insert(in.end(), hv.begin(), hv.end());
  const auto c = cproj_.forward(in);
  memory_.update(e.src, e.dst, e.ts, c);
}

void TamiModel::reset_stream() {
  memory_.clear();
  stream_ts_ = -1.0;
}

ModelGrad TamiModel::zero_grad() const {
  ModelGrad g;
  g.blocks.resize(kNumBlocks);
  g.blocks[kToken].assign(token_.num_params(), 0.0);
  g.blocks[kCombine].assign(combine_.num_params(), 0.0);
  g.blocks[kCProj].assign(cproj_.num_params(), 0.0);
  g.blocks[kPredictor].assign(predictor_.num_params(), 0.0);
  g.blocks[kOmega].assign(encoder_.dim(), 0.0);
  g.blocks[kMaxProj].assign(memory_.projection() ? memory_.projection()->num_params() : 0, 0.0);
  return g;
}

std::vector<std::span<double>> TamiModel::parameter_blocks() {
  std::vector<std::span<double>> b(kNumBlocks);
  b[kToken] = token_.mutable_params();
  b[kCombine] = combine_.mutable_params();
  b[kCProj] = cproj_.mutable_params();
  b[kPredictor] = predictor_.mutable_params();
  b[kOmega] = encoder_.frequencies();
  if (auto* p = memory_.mutable_projection()) b[kMaxProj] = p->mutable_params();
  return b;
}

std::vector<std::span<const double>> TamiModel::parameter_blocks() const {
  std::vector<std::span<const double>> b(kNumBlocks);
  b[kToken] = token_.params();
  b[kCombine] = combine_.params();
  b[kCProj] = cproj_.params();
  b[kPredictor] = predictor_.params();
  b[kOmega] = encoder_.frequencies();
  if (const auto* p = memory_.projection()) b[kMaxProj] = p->params();
  return b;
}

// ---- checkpoints --------------------------------------------------------

nlohmann::json checkpoint_json(const TamiModel& model) {
  nlohmann::json j;
  j["format"] = "tami-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = model.config();
  std::ostringstream h;
  h << std::hex << model.config().hash();
  j["config_hash"] = h.str();
  nlohmann::json blocks = nlohmann::json::object();
  const auto views = model.parameter_blocks();
  for (std::size_t k = 0; k < TamiModel::kNumBlocks; ++k) {
    blocks[TamiModel::kBlockNames[k]] = std::vector<double>(views[k].begin(), views[k].end());
  }
  j["blocks"] = std::move(blocks);
  return j;
}

TamiModel model_from_checkpoint(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "tami-checkpoint") {
      throw DataError("not a tami checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version");
    }
    const auto cfg = j.at("config").get<ModelConfig>();
    std::ostringstream h;
    h << std::hex << cfg.hash();
    if (j.at("config_hash").get<std::string>() != h.str()) {
      throw DataError("checkpoint config hash mismatch");
    }
    TamiModel model(cfg);
    auto views = model.parameter_blocks();
    for (std::size_t k = 0; k < TamiModel::kNumBlocks; ++k) {
      const auto values = j.at("blocks").at(TamiModel::kBlockNames[k]).get<std::vector<double>>();
      if (values.size() != views[k].size()) {
        throw DataError(std::string("checkpoint block '") + TamiModel::kBlockNames[k] +
                        "' has wrong size");
      }
      std::copy(values.begin(), values.end(), views[k].begin());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const TamiModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out << checkpoint_json(model).dump(1) << "\n";
}

TamiModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
  return model_from_checkpoint(j);
}

}  // namespace tami
