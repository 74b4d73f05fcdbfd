#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <optional>
#include <string>

#include "tami/commands.hpp"
#include "tami/error.hpp"

namespace {

// Options shared by every subcommand that reads a run configuration.
struct Common {
  std::string config;
  std::string output_dir;
  std::string data;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "JSON run configuration");
  app->add_option("-o,--output-dir", c.output_dir, "Output directory (overrides TAMI_OUTPUT_DIR)");
  app->add_option("-d,--data", c.data, "Event CSV (default: synthetic fixture)");
  app->add_option("--seed", c.seed, "Random seed");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

tami::RunConfig build_config(const Common& c) {
  tami::RunConfig cfg = c.config.empty() ? tami::parse_run_config(nlohmann::json::object())
                                         : tami::load_run_config(c.config);
  if (!c.data.empty()) cfg.dataset.path = c.data;
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  return cfg;
}

std::string out_dir(const Common& c, const tami::RunConfig& cfg) {
  return tami::resolve_output_dir(c.output_dir.empty() ? std::nullopt
                                                       : std::optional<std::string>(c.output_dir),
                                  cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal link prediction with log time encoding and link history aggregation"};
  app.require_subcommand(1);

  // synth
  Common synth_c;
  std::string synth_out = "synth.csv";
  std::optional<std::size_t> s_nodes, s_freq, s_infreq;
  std::optional<double> s_alpha, s_xmin, s_horizon;
  auto* synth = app.add_subcommand("synth", "Generate the periodic + Pareto synthetic fixture");
  add_common(synth, synth_c);
  synth->add_option("--out", synth_out, "Output CSV path");
  synth->add_option("--nodes", s_nodes, "Number of nodes");
  synth->add_option("--frequent", s_freq, "Number of periodic pairs");
  synth->add_option("--infrequent", s_infreq, "Number of Pareto pairs");
  synth->add_option("--alpha", s_alpha, "Pareto shape (> 3)");
  synth->add_option("--xmin", s_xmin, "Pareto scale");
  synth->add_option("--horizon", s_horizon, "Time horizon");

  // analyze
  Common analyze_c;
  auto* analyze = app.add_subcommand("analyze", "Interval and time-delta skewness report");
  add_common(analyze, analyze_c);

  // verify-prop1
  tami::Prop1Options p1;
  std::string p1_out = "tami_out";
  auto* prop1 = app.add_subcommand("verify-prop1", "Monte Carlo skewness check for Pareto gaps");
  prop1->add_option("--alpha", p1.alphas, "Pareto shapes (repeatable)");
  prop1->add_option("--xmin", p1.x_min, "Pareto scale (> 1)");
  prop1->add_option("-n,--samples", p1.n, "Samples per shape");
  prop1->add_option("--seed", p1.seed, "Random seed");
  prop1->add_option("--raw-tol", p1.tol.raw_rel, "Relative tolerance on raw skewness");
  prop1->add_option("--log-tol", p1.tol.log_abs, "Absolute tolerance on log skewness");
  prop1->add_option("-o,--output-dir", p1_out, "Output directory");

  // gradcheck
  std::size_t gc_configs = 10;
  std::uint64_t gc_seed = 0;
  std::string gc_out = "tami_out";
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  gradcheck->add_option("--configs", gc_configs, "Random configurations");
  gradcheck->add_option("--seed", gc_seed, "Random seed");
  gradcheck->add_option("-o,--output-dir", gc_out, "Output directory");

  // train / gamma-sweep
  Common train_c;
  tami::TrainOptions train_opt;
  std::optional<std::size_t> t_epochs, t_patience, t_batch;
  std::optional<double> t_lr, t_gamma;
  auto add_train = [&](CLI::App* sub) {
    add_common(sub, train_c);
    sub->add_option("--ablate", train_opt.ablate, "Enabled parts: none, lte, lha, both")
        ->check(CLI::IsMember({"none", "lte", "lha", "both"}));
    sub->add_option("--epochs", t_epochs, "Maximum epochs");
    sub->add_option("--patience", t_patience, "Early stopping patience");
    sub->add_option("--batch-size", t_batch, "Batch size");
    sub->add_option("--lr", t_lr, "Adam learning rate");
    sub->add_option("--gamma", t_gamma, "LHA forgetting rate");
  };
  auto* train = app.add_subcommand("train", "Train and write a checkpoint");
  add_train(train);
  train->add_flag("--gamma-sweep", train_opt.gamma_sweep, "Sweep gamma over the grid");
  auto* sweep = app.add_subcommand("gamma-sweep", "Train once per gamma; keep the best");
  add_train(sweep);

  // eval / buckets
  Common eval_c;
  tami::EvalCmdOptions eval_opt;
  std::optional<std::string> e_neg, e_mode, e_edgebank;
  std::optional<std::size_t> e_k;
  bool e_cold = false;
  auto add_eval = [&](CLI::App* sub) {
    add_common(sub, eval_c);
    sub->add_option("--checkpoint", eval_opt.checkpoint, "Checkpoint (default <out>/checkpoint.json)");
    sub->add_option("--neg", e_neg, "Negatives: rnd, hist, ind");
    sub->add_option("--K", e_k, "Negatives per positive")->check(CLI::PositiveNumber);
    sub->add_option("--mode", e_mode, "transductive or inductive");
    sub->add_flag("--cold-start", e_cold, "Start the test stream with an empty link history");
  };
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test range");
  add_eval(eval);
  eval->add_option("--edgebank", e_edgebank, "Evaluate EdgeBank instead: infinity, tw_ts, tw_re, th");
  eval->add_option("--window", eval_opt.edgebank_window, "EdgeBank tw_ts window");
  auto* buckets = app.add_subcommand("buckets", "Interval-bucket, group and appearance tables");
  add_eval(buckets);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  auto apply_train = [&](tami::RunConfig& cfg) {
    if (t_epochs) cfg.train.max_epochs = *t_epochs;
    if (t_patience) {
      cfg.train.patience = *t_patience;
    } else if (t_epochs) {
      cfg.train.patience = std::min(cfg.train.patience, *t_epochs);
    }
    if (t_batch) cfg.train.batch_size = *t_batch;
    if (t_lr) cfg.train.lr = *t_lr;
    if (t_gamma) cfg.model.lha.gamma = *t_gamma;
  };
  auto apply_eval = [&](tami::RunConfig& cfg) {
    if (e_neg) cfg.eval.negatives = tami::parse_neg_kind(*e_neg);
    if (e_k) cfg.eval.k = *e_k;
    if (e_mode) {
      if (*e_mode == "transductive") {
        cfg.eval.mode = tami::EvalMode::transductive;
      } else if (*e_mode == "inductive") {
        cfg.eval.mode = tami::EvalMode::inductive_nodes;
      } else {
        throw tami::ConfigError("--mode must be transductive or inductive");
      }
    }
    if (e_cold) cfg.eval.cold_start = true;
  };

  return tami::run_guarded([&] {
    if (synth->parsed()) {
      auto cfg = build_config(synth_c);
      if (s_nodes) cfg.synth.num_nodes = *s_nodes;
      if (s_freq) cfg.synth.num_frequent_pairs = *s_freq;
      if (s_infreq) cfg.synth.num_infrequent_pairs = *s_infreq;
      if (s_alpha) cfg.synth.pareto_shape = *s_alpha;
      if (s_xmin) cfg.synth.pareto_scale = *s_xmin;
      if (s_horizon) cfg.synth.horizon = *s_horizon;
      if (synth_c.seed) cfg.synth.seed = *synth_c.seed;
      cfg.finalize();
      tami::cmd_synth(cfg, synth_out);
    } else if (analyze->parsed()) {
      auto cfg = build_config(analyze_c);
      cfg.finalize();
      tami::cmd_analyze(cfg, out_dir(analyze_c, cfg));
    } else if (prop1->parsed()) {
      tami::cmd_verify_prop1(p1, p1_out);
    } else if (gradcheck->parsed()) {
      tami::cmd_gradcheck(gc_configs, gc_seed, gc_out);
    } else if (train->parsed() || sweep->parsed()) {
      auto cfg = build_config(train_c);
      apply_train(cfg);
      cfg.finalize();
      if (sweep->parsed()) train_opt.gamma_sweep = true;
      tami::cmd_train(cfg, train_opt, out_dir(train_c, cfg));
    } else {
      auto cfg = build_config(eval_c);
      apply_eval(cfg);
      cfg.finalize();
      if (eval->parsed()) {
        if (e_edgebank) eval_opt.edgebank = tami::parse_edgebank_variant(*e_edgebank);
        tami::cmd_eval(cfg, eval_opt, out_dir(eval_c, cfg));
      } else {
        tami::cmd_buckets(cfg, eval_opt, out_dir(eval_c, cfg));
      }
    }
  });
}
