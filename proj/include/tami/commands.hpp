#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tami/config.hpp"
#include "tami/edgebank.hpp"
#include "tami/eval.hpp"
#include "tami/time_stats.hpp"

namespace tami {

// Exit codes: 0 ok, 1 config, 2 data (divergence included), 3 verification.
int run_guarded(const std::function<void()>& body);

// ---- analysis ---------------------------------------------------------------

// Delta t = tau - t_j over the m most recent neighbors of both endpoints of
// every event in `range`.
std::vector<double> neighbor_time_deltas(const TemporalGraph& g, IndexRange range, std::size_t m);

// Interval skewness and Delta t skewness under the raw and log1p transforms.
nlohmann::json analyze_dataset(const TemporalGraph& g, const Split& split, std::size_t m);

// ---- train / eval -------------------------------------------------------------

struct Experiment {
  TemporalGraph graph;
  Split split;
  std::vector<bool> mask;  // inductive-node mask; empty in transductive mode

  const std::vector<bool>* mask_ptr() const { return mask.empty() ? nullptr : &mask; }
};

// Loads the dataset, splits it and draws the inductive mask if needed.
Experiment prepare_experiment(RunConfig& cfg);

// Replays the pre-test stream (unless cold start) and evaluates the test range.
EvalReport evaluate_model(TamiModel& model, const Experiment& ex, const RunConfig& cfg,
                          std::optional<std::size_t> k_override = std::nullopt);

EvalReport evaluate_edgebank(const EdgeBankConfig& eb, const Experiment& ex, const RunConfig& cfg);

struct TrainEvalOutcome {
  TrainResult train;
  EvalReport report;
};

// Trains a fresh model from cfg.model and evaluates it on the test range.
TrainEvalOutcome train_and_evaluate(const RunConfig& cfg, const Experiment& ex);

void write_diagnostics(const EvalReport& report, const RunConfig& cfg, const std::string& dir);

// ---- subcommands ----------------------------------------------------------------

void cmd_synth(const RunConfig& cfg, const std::string& out_csv);
void cmd_analyze(RunConfig cfg, const std::string& out_dir);

struct Prop1Options {
  std::vector<double> alphas = {8.0};
  double x_min = 1.5;
  std::size_t n = 1000000;
  std::uint64_t seed = 0;
  Prop1Tolerance tol;
};
void cmd_verify_prop1(const Prop1Options& opt, const std::string& out_dir);

void cmd_gradcheck(std::size_t configs, std::uint64_t seed, const std::string& out_dir);

struct TrainOptions {
  std::optional<std::string> ablate;  // none|lte|lha|both; unset keeps the config
  bool gamma_sweep = false;
};
void cmd_train(RunConfig cfg, const TrainOptions& opt, const std::string& out_dir);

struct EvalCmdOptions {
  std::string checkpoint;  // empty: <out_dir>/checkpoint.json
  std::optional<EdgeBankVariant> edgebank;
  std::optional<double> edgebank_window;
};
void cmd_eval(RunConfig cfg, const EvalCmdOptions& opt, const std::string& out_dir);
void cmd_buckets(RunConfig cfg, const EvalCmdOptions& opt, const std::string& out_dir);

}  // namespace tami
