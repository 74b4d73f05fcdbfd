#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "tami/eval.hpp"
#include "tami/event_store.hpp"
#include "tami/model.hpp"
#include "tami/trainer.hpp"

namespace tami {

struct DatasetConfig {
  std::string path;  // empty: generate the synthetic fixture from `synth`
  CsvSchema schema;
};

struct EvalConfig {
  NegKind negatives = NegKind::random;
  std::size_t k = 1;
  EvalMode mode = EvalMode::transductive;
  bool cold_start = false;
  double inductive_fraction = 0.1;
  std::size_t diagnostics_m = 10;
  std::size_t buckets = 6;
};

// Full run description. Every key is optional in the JSON form; see
// docs/config.md for the schema and defaults.
struct RunConfig {
  DatasetConfig dataset;
  SynthSpec synth;
  SplitSpec split;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir;  // empty: not set in the file
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // Pushes seed/threads into the sub-configs and validates everything.
  void finalize();
};

// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_json(const RunConfig& c);

// `none` disables both parts, `both` enables both, `lte`/`lha` enable one.
void apply_ablation(ModelConfig& m, const std::string& ablate);

// flag > TAMI_OUTPUT_DIR > config file > "tami_out".
std::string resolve_output_dir(const std::optional<std::string>& flag, const RunConfig& c);

// Loads the CSV or generates the fixture, and sizes the model's feature
// inputs to match.
TemporalGraph load_dataset(RunConfig& c);

}  // namespace tami
