#include "tami/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tami/error.hpp"
#include "tami/gradcheck.hpp"
#include "tami/model.hpp"
#include "tami/trainer.hpp"

namespace tami {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTestNegSalt = 0x7e57ca5eULL;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

json skewness_or_null(const std::function<SkewnessReport()>& f) {
  try {
    return f();
  } catch (const Error& e) {
    log_warning(std::string("skewness unavailable: ") + e.what());
    return nullptr;
  }
}

void write_histogram(std::ostream& out, const std::string& series, const std::vector<double>& xs,
                     std::size_t bins) {
  if (xs.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double lo = *lo_it;
  const double width = std::max((*hi_it - lo) / static_cast<double>(bins), 1e-300);
  std::vector<std::size_t> counts(bins, 0);
  for (double x : xs) {
    auto b = static_cast<std::size_t>((x - lo) / width);
    ++counts[std::min(b, bins - 1)];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    out << series << ',' << lo + width * static_cast<double>(b) << ','
        << lo + width * static_cast<double>(b + 1) << ',' << counts[b] << '\n';
  }
}

void write_buckets_csv(const std::string& path, const std::string& key,
                       const std::vector<BucketResult>& rows, bool with_range) {
  auto out = open_out(path);
  out.precision(17);
  out << key << (with_range ? ",lo,hi" : "") << ",positives,ap\n";
  for (const auto& r : rows) {
    out << r.label;
    if (with_range) {
      out << ',';
      if (!std::isnan(r.lo)) out << r.lo;
      out << ',';
      if (!std::isnan(r.hi)) out << r.hi;
    }
    out << ',' << r.positives << ',';
    if (r.ap) out << *r.ap;
    out << '\n';
  }
}

json buckets_json(const std::vector<BucketResult>& rows) {
  json a = json::array();
  for (const auto& r : rows) {
    a.push_back({{"label", r.label},
                 {"lo", r.lo},
                 {"hi", std::isfinite(r.hi) ? json(r.hi) : json("inf")},
                 {"positives", r.positives},
                 {"ap", r.ap ? json(*r.ap) : json(nullptr)}});
  }
  return a;
}

TamiModel load_model_for(RunConfig& cfg, const EvalCmdOptions& opt, const std::string& out_dir) {
  const std::string path = opt.checkpoint.empty() ? join(out_dir, "checkpoint.json") : opt.checkpoint;
  if (!fs::exists(path)) throw DataError("missing checkpoint " + path);
  TamiModel model = load_checkpoint(path);
  cfg.model = model.config();
  return model;
}

json report_json(const EvalReport& r, const RunConfig& cfg, const std::string& scorer) {
  json j = r;
  j["scorer"] = scorer;
  j["cold_start"] = cfg.eval.cold_start;
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const VerificationError& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

// ---- analysis ---------------------------------------------------------------

std::vector<double> neighbor_time_deltas(const TemporalGraph& g, IndexRange range, std::size_t m) {
  std::vector<double> out;
  for (std::size_t i = range.begin; i < range.end; ++i) {
    const Event& e = g.event(i);
    for (NodeId u : {e.src, e.dst}) {
      for (const Neighbor& nb : recent_neighbors(g, u, e.ts, m)) out.push_back(e.ts - nb.ts);
    }
  }
  return out;
}

json analyze_dataset(const TemporalGraph& g, const Split& split, std::size_t m) {
  const auto intervals = interaction_intervals(g);
  const auto dts = neighbor_time_deltas(g, split.test, m);
  json j;
  j["num_events"] = g.num_events();
  j["num_nodes"] = g.num_nodes();
  j["num_intervals"] = intervals.size();
  j["interval_skewness"] = skewness_or_null([&] { return fisher_skewness(intervals); });
  j["dt"] = {{"population", "test events, m most recent neighbors of both endpoints"},
             {"m", m},
             {"count", dts.size()},
             {"original", skewness_or_null([&] { return fisher_skewness(dts); })},
             {"log", skewness_or_null([&] { return fisher_skewness_log1p(dts); })}};
  return j;
}

// ---- train / eval -------------------------------------------------------------

Experiment prepare_experiment(RunConfig& cfg) {
  Experiment ex;
  ex.graph = load_dataset(cfg);
  ex.split = chronological_split(ex.graph, cfg.split);
  if (ex.split.degenerate) log_warning("split is degenerate after tie absorption");
  if (cfg.eval.mode == EvalMode::inductive_nodes) {
    ex.mask = make_inductive_mask(ex.graph, ex.split, cfg.eval.inductive_fraction, cfg.seed);
  }
  return ex;
}

EvalReport evaluate_model(TamiModel& model, const Experiment& ex, const RunConfig& cfg,
                          std::optional<std::size_t> k_override) {
  model.reset_stream();
  if (!cfg.eval.cold_start) {
    replay(model, ex.graph, ex.split.train, ex.mask_ptr());
    replay(model, ex.graph, ex.split.val);
  }
  const NegativeSampler sampler(ex.graph, ex.split,
                                {cfg.eval.negatives, cfg.seed ^ kTestNegSalt,
                                 k_override.value_or(cfg.eval.k)});
  EvalOptions opt;
  opt.mode = cfg.eval.mode;
  opt.diagnostics_m = cfg.eval.diagnostics_m;
  std::vector<bool> seen;
  if (opt.mode == EvalMode::inductive_nodes) {
    seen = seen_in_train(ex.graph, ex.split, ex.mask_ptr());
    opt.seen_in_train = &seen;
  }
  ModelScorer scorer(model, cfg.threads);
  return evaluate(scorer, ex.graph, ex.split.test, sampler, opt);
}

EvalReport evaluate_edgebank(const EdgeBankConfig& eb, const Experiment& ex, const RunConfig& cfg) {
  EdgeBankConfig c = eb;
  if (c.variant == EdgeBankVariant::tw_ts && !(c.window > 0.0) && !ex.split.test.empty()) {
    c.window = ex.graph.event(ex.split.test.end - 1).ts - ex.graph.event(ex.split.test.begin).ts;
  }
  EdgeBank bank(c);
  for (std::size_t i = 0; i < ex.split.test.begin; ++i) bank.observe(ex.graph, ex.graph.event(i));
  const NegativeSampler sampler(ex.graph, ex.split,
                                {cfg.eval.negatives, cfg.seed ^ kTestNegSalt, cfg.eval.k});
  EvalOptions opt;
  opt.mode = cfg.eval.mode;
  opt.diagnostics_m = cfg.eval.diagnostics_m;
  std::vector<bool> seen;
  if (opt.mode == EvalMode::inductive_nodes) {
    seen = seen_in_train(ex.graph, ex.split, ex.mask_ptr());
    opt.seen_in_train = &seen;
  }
  return evaluate(bank, ex.graph, ex.split.test, sampler, opt);
}

TrainEvalOutcome train_and_evaluate(const RunConfig& cfg, const Experiment& ex) {
  TamiModel model(cfg.model);
  TrainEvalOutcome out;
  out.train = train(model, ex.graph, ex.split, cfg.train, ex.mask_ptr());
  out.report = evaluate_model(model, ex, cfg);
  return out;
}

void write_diagnostics(const EvalReport& report, const RunConfig& cfg, const std::string& dir) {
  ensure_dir(dir);
  const auto edges = log_bucket_edges(report.records, cfg.eval.buckets);
  const auto by_interval = bucketed_ap_by_interval(report.records, edges);
  const auto by_group = ap_by_group(report.records);
  const auto by_appearance = ap_by_appearance(report.records, cfg.eval.diagnostics_m);
  write_buckets_csv(join(dir, "buckets_interval.csv"), "bucket", by_interval, true);
  write_buckets_csv(join(dir, "groups.csv"), "group", by_group, false);
  write_buckets_csv(join(dir, "appearance.csv"), "index", by_appearance, false);
  write_json(join(dir, "buckets.json"), {{"interval", buckets_json(by_interval)},
                                         {"group", buckets_json(by_group)},
                                         {"appearance", buckets_json(by_appearance)},
                                         {"m", cfg.eval.diagnostics_m}});
}

// ---- subcommands ----------------------------------------------------------------

void cmd_synth(const RunConfig& cfg, const std::string& out_csv) {
  const TemporalGraph g = synth_pareto_graph(cfg.synth);
  const fs::path p(out_csv);
  if (p.has_parent_path()) ensure_dir(p.parent_path().string());
  write_events(g, out_csv);
  json manifest = {{"generator", "pareto_fixture"},
                   {"synth", run_config_json(cfg)["synth"]},
                   {"num_events", g.num_events()},
                   {"num_nodes", g.num_nodes()}};
  write_json(out_csv + ".manifest.json", manifest);
  std::cout << "wrote " << g.num_events() << " events over " << g.num_nodes() << " nodes to "
            << out_csv << '\n';
}

void cmd_analyze(RunConfig cfg, const std::string& out_dir) {
  const Experiment ex = prepare_experiment(cfg);
  const json report = analyze_dataset(ex.graph, ex.split, cfg.model.backbone.num_neighbors);
  ensure_dir(out_dir);
  write_json(join(out_dir, "analyze.json"), report);

  auto out = open_out(join(out_dir, "histograms.csv"));
  out.precision(17);
  out << "series,lo,hi,count\n";
  const auto intervals = interaction_intervals(ex.graph);
  auto dts = neighbor_time_deltas(ex.graph, ex.split.test, cfg.model.backbone.num_neighbors);
  auto logged = [](std::vector<double> v) {
    for (double& x : v) x = std::log1p(x);
    return v;
  };
  write_histogram(out, "interval", intervals, 50);
  write_histogram(out, "interval_log1p", logged(intervals), 50);
  write_histogram(out, "dt", dts, 50);
  write_histogram(out, "dt_log1p", logged(dts), 50);
  std::cout << report.dump(2) << '\n';
}

void cmd_verify_prop1(const Prop1Options& opt, const std::string& out_dir) {
  json results = json::array();
  bool pass = true;
  for (double alpha : opt.alphas) {
    const Prop1Result r = verify_proposition1({alpha, opt.x_min}, opt.n, opt.seed, opt.tol);
    json j = r;
    j["alpha"] = alpha;
    results.push_back(j);
    pass = pass && r.pass;
    std::cout << "alpha=" << alpha << " raw=" << r.raw_skew << " (g=" << r.expected_raw
              << ") log=" << r.log_skew << (r.pass ? " PASS" : " FAIL") << '\n';
  }
  ensure_dir(out_dir);
  write_json(join(out_dir, "prop1.json"), {{"n", opt.n},
                                           {"x_min", opt.x_min},
                                           {"seed", opt.seed},
                                           {"raw_rel_tol", opt.tol.raw_rel},
                                           {"log_abs_tol", opt.tol.log_abs},
                                           {"results", results},
                                           {"pass", pass}});
  if (!pass) throw VerificationError("skewness outside tolerance");
}

void cmd_gradcheck(std::size_t configs, std::uint64_t seed, const std::string& out_dir) {
  const GradCheckReport rep = run_gradcheck(configs, seed);
  for (const auto& e : rep.entries) {
    std::cout << e.scope << ' ' << e.block << " max_rel_err=" << e.max_rel_err << " tol="
              << e.tolerance << (e.pass ? " PASS" : " FAIL") << '\n';
  }
  ensure_dir(out_dir);
  write_json(join(out_dir, "gradcheck.json"), rep);
  if (!rep.pass) throw VerificationError("analytic gradients disagree with finite differences");
}

void cmd_train(RunConfig cfg, const TrainOptions& opt, const std::string& out_dir) {
  if (opt.ablate) apply_ablation(cfg.model, *opt.ablate);
  Experiment ex = prepare_experiment(cfg);
  cfg.finalize();
  ensure_dir(out_dir);
  write_json(join(out_dir, "config.json"), run_config_json(cfg));

  if (opt.gamma_sweep) {
    if (!cfg.model.use_lha) throw ConfigError("gamma sweep needs LHA enabled");
    GammaSweepResult r = gamma_sweep(cfg.model, ex.graph, ex.split, cfg.train, ex.mask_ptr());
    json entries = json::array();
    for (const auto& e : r.entries) {
      entries.push_back(
          {{"gamma", e.gamma}, {"best_val_ap", e.best_val_ap}, {"best_epoch", e.best_epoch}});
      std::cout << "gamma=" << e.gamma << " val_ap=" << e.best_val_ap << '\n';
    }
    write_json(join(out_dir, "gamma_sweep.json"), {{"entries", entries}, {"best_gamma", r.best_gamma}});
    save_checkpoint(r.best_model, join(out_dir, "checkpoint.json"));
    std::cout << "best gamma " << r.best_gamma << '\n';
    return;
  }

  TamiModel model(cfg.model);
  const TrainResult r = train(model, ex.graph, ex.split, cfg.train, ex.mask_ptr());
  save_checkpoint(model, join(out_dir, "checkpoint.json"));
  write_json(join(out_dir, "history.json"), history_json(r));

  auto log = open_out(join(out_dir, "train_log.jsonl"));
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  for (const auto& e : r.history) {
    log << json{{"epoch", e.epoch},
                {"train_loss", e.train_loss},
                {"val_ap", e.val_ap},
                {"elapsed_seconds", e.elapsed_seconds},
                {"finished_unix", static_cast<std::int64_t>(now)}}
               .dump()
        << '\n';
  }
  std::cout << "trained " << r.epochs_run << " epochs, best epoch " << r.best_epoch
            << " val_ap=" << r.best_val_ap << '\n';
}

void cmd_eval(RunConfig cfg, const EvalCmdOptions& opt, const std::string& out_dir) {
  ensure_dir(out_dir);
  if (opt.edgebank) {
    Experiment ex = prepare_experiment(cfg);
    EdgeBankConfig eb;
    eb.variant = *opt.edgebank;
    if (opt.edgebank_window) eb.window = *opt.edgebank_window;
    const EvalReport r = evaluate_edgebank(eb, ex, cfg);
    const std::string name = "edgebank_" + to_string(eb.variant);
    write_json(join(out_dir, "eval_report_" + name + ".json"), report_json(r, cfg, name));
    std::cout << name << " ap=" << r.ap << " mrr=" << r.mrr << " K=" << r.k << '\n';
    return;
  }
  TamiModel model = load_model_for(cfg, opt, out_dir);
  Experiment ex = prepare_experiment(cfg);
  const EvalReport r = evaluate_model(model, ex, cfg);
  write_json(join(out_dir, "eval_report.json"), report_json(r, cfg, "tami"));
  write_diagnostics(r, cfg, out_dir);
  std::cout << "ap=" << r.ap << " mrr=" << r.mrr << " K=" << r.k << " positives=" << r.num_positives
            << '\n';
}

void cmd_buckets(RunConfig cfg, const EvalCmdOptions& opt, const std::string& out_dir) {
  TamiModel model = load_model_for(cfg, opt, out_dir);
  Experiment ex = prepare_experiment(cfg);
  const EvalReport r = evaluate_model(model, ex, cfg);
  write_diagnostics(r, cfg, out_dir);
  std::cout << "wrote bucket, group and appearance tables to " << out_dir << '\n';
}

}  // namespace tami
