#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tami/event_store.hpp"
#include "tami/lha_memory.hpp"
#include "tami/nn.hpp"
#include "tami/time_encoding.hpp"

namespace tami {

enum class NeighborSampling { recent, uniform };

std::string to_string(NeighborSampling s);
NeighborSampling parse_neighbor_sampling(const std::string& s);

struct BackboneConfig {
  std::size_t num_neighbors = 10;  // m
  std::size_t dim = 32;            // d, node embedding width
  std::size_t time_dim = 16;       // d_T
  std::vector<std::size_t> token_hidden;            // token MLP hidden widths
  std::vector<std::size_t> combine_hidden = {32};   // combine MLP hidden widths
  NeighborSampling sampling = NeighborSampling::recent;
};

struct ModelConfig {
  BackboneConfig backbone;
  bool use_lte = true;
  bool use_lha = true;
  bool trainable_time = true;
  LhaConfig lha;  // lha.dim defaults to backbone.dim
  std::vector<std::size_t> predictor_hidden;  // empty: one hidden layer of width d_r
  std::size_t node_feature_dim = 0;
  std::size_t edge_feature_dim = 0;
  std::uint64_t seed = 0;

  void validate() const;
  std::uint64_t hash() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Every trainable tensor, one flat vector per block, in a fixed order.
struct ModelGrad {
  std::vector<std::vector<double>> blocks;

  void zero();
  void add(const ModelGrad& other, double scale = 1.0);
  void scale(double s);
  bool all_finite() const;
};

struct EmbeddingTrace {
  std::vector<Neighbor> neighbors;
  std::vector<nn::MlpTape> token_tapes;  // one per real neighbor
  nn::MlpTape pad_tape;                  // shared by all padding slots
  std::size_t num_pad = 0;
  nn::MlpTape combine_tape;
  double tau = 0.0;
  NodeId node = 0;

  const std::vector<double>& embedding() const { return combine_tape.output(); }
};

struct PredictionTrace {
  AggregateTrace aggregate;
  std::vector<double> pair_embedding;  // h_uv
  nn::MlpTape predictor_tape;
  double probability = 0.0;
};

// Mixer-style temporal-neighbor backbone with log time encoding and link
// history aggregation feeding a sigmoid link predictor.
class TamiModel {
 public:
  static constexpr const char* kBlockNames[] = {"token_mlp",  "combine_mlp", "c_projection",
                                                "predictor",  "omega",       "max_projection"};
  enum Block : std::size_t { kToken, kCombine, kCProj, kPredictor, kOmega, kMaxProj, kNumBlocks };

  TamiModel() = default;
  explicit TamiModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const TimeEncoder& encoder() const { return encoder_; }
  TimeEncoder& mutable_encoder() { return encoder_; }
  const LhaMemory& memory() const { return memory_; }
  LhaMemory& memory() { return memory_; }
  const nn::Mlp& token_mlp() const { return token_; }
  const nn::Mlp& combine_mlp() const { return combine_; }
  const nn::Mlp& c_projection() const { return cproj_; }
  const nn::Mlp& predictor() const { return predictor_; }
  nn::Mlp& mutable_predictor() { return predictor_; }
  std::size_t predictor_input_dim() const;

  // h_u from the m sampled neighbors before tau.
  std::vector<double> node_embedding(const TemporalGraph& g, NodeId u, double tau) const;
  void node_embedding(const TemporalGraph& g, NodeId u, double tau, EmbeddingTrace& tr) const;

  // p_uv; never touches the memory.
  double predict_link(const TemporalGraph& g, NodeId u, NodeId v, double tau) const;
  double predict_from_embeddings(std::span<const double> hu, std::span<const double> hv,
                                 NodeId u, NodeId v, double tau,
                                 PredictionTrace* trace = nullptr) const;

  // Accumulates dL/dtheta into grad given dL/dp and the traces of the forward
  // pass. Embedding gradients are returned through dhu/dhv (accumulated) so
  // shared embeddings can be backpropagated once.
  void backward_prediction(const PredictionTrace& pt, double dloss_dp, std::span<double> dhu,
                           std::span<double> dhv, ModelGrad& grad) const;
  void backward_embedding(const TemporalGraph& g, const EmbeddingTrace& tr,
                          std::span<const double> dh, ModelGrad& grad) const;

  // c_uv = MLP([h_u; h_v]) then the LHA update; no-op without LHA.
  void process_event(const TemporalGraph& g, const Event& e);
  void reset_stream();

  ModelGrad zero_grad() const;
  // Mutable views of every block, aligned with ModelGrad::blocks.
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;

 private:
  std::vector<Neighbor> sample_neighbors(const TemporalGraph& g, NodeId u, double tau) const;
  void build_token(const TemporalGraph& g, const Neighbor& nb, NodeId u, double tau,
                   std::vector<double>& tok) const;

  ModelConfig cfg_;
  TimeEncoder encoder_;
  nn::Mlp token_;
  nn::Mlp combine_;
  nn::Mlp cproj_;
  nn::Mlp predictor_;
  LhaMemory memory_;
  std::vector<double> no_omega_grad_;
  double stream_ts_ = -1.0;
};

// Checkpoint: JSON with format tag, version, config, config hash and one array
// per parameter block.
nlohmann::json checkpoint_json(const TamiModel& model);
TamiModel model_from_checkpoint(const nlohmann::json& j);
void save_checkpoint(const TamiModel& model, const std::string& path);
TamiModel load_checkpoint(const std::string& path);

}  // namespace tami
