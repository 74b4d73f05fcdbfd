#include "tami/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "tami/error.hpp"

namespace tami {

namespace {

using nlohmann::json;

// Reads optional keys of one JSON object and rejects anything it did not read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  template <typename Parse, typename T>
  void get_enum(const char* key, T& out, Parse parse) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_string()) throw ConfigError(where(key) + " must be a string");
    try {
      out = parse(it->template get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? empty : *it, where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError("unknown config key " + where(it.key()));
    }
  }

 private:
  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_schema(Section s, CsvSchema& c) {
  s.get("src", c.src_column);
  s.get("dst", c.dst_column);
  s.get("ts", c.ts_column);
  s.get("label", c.label_column);
  s.get("features", c.feature_columns);
  std::string delim(1, c.delimiter);
  s.get("delimiter", delim);
  if (delim.size() != 1) throw ConfigError("dataset.schema.delimiter must be one character");
  c.delimiter = delim[0];
  s.finish();
}

}  // namespace

void RunConfig::finalize() {
  model.seed = seed;
  train.seed = seed;
  train.threads = threads;
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(split.train_frac > 0.0 && split.val_frac > 0.0 && split.train_frac + split.val_frac < 1.0)) {
    throw ConfigError("split fractions must satisfy train > 0, val > 0, train + val < 1");
  }
  if (eval.k < 1) throw ConfigError("eval.K must be >= 1");
  if (eval.diagnostics_m < 1) throw ConfigError("eval.diagnostics_m must be >= 1");
  if (eval.buckets < 1) throw ConfigError("eval.buckets must be >= 1");
  if (!(eval.inductive_fraction >= 0.0 && eval.inductive_fraction <= 1.0)) {
    throw ConfigError("eval.inductive_fraction must lie in [0, 1]");
  }
  if (dataset.path.empty() && !(synth.pareto_shape > 3.0)) {
    throw ConfigError("synth.alpha must exceed 3");
  }
  model.validate();
  train.validate();
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Section root(j, "");

  {
    Section d = root.child("dataset");
    d.get("path", c.dataset.path);
    read_schema(d.child("schema"), c.dataset.schema);
    d.finish();
  }
  {
    Section s = root.child("synth");
    s.get("num_nodes", c.synth.num_nodes);
    s.get("frequent_pairs", c.synth.num_frequent_pairs);
    s.get("infrequent_pairs", c.synth.num_infrequent_pairs);
    s.get("alpha", c.synth.pareto_shape);
    s.get("x_min", c.synth.pareto_scale);
    s.get("horizon", c.synth.horizon);
    s.get("period_min", c.synth.frequent_period_min);
    s.get("period_max", c.synth.frequent_period_max);
    s.get("seed", c.synth.seed);
    s.finish();
  }
  {
    Section s = root.child("split");
    s.get("train", c.split.train_frac);
    s.get("val", c.split.val_frac);
    s.finish();
  }
  {
    Section m = root.child("model");
    Section b = m.child("backbone");
    b.get("num_neighbors", c.model.backbone.num_neighbors);
    b.get("dim", c.model.backbone.dim);
    b.get("time_dim", c.model.backbone.time_dim);
    b.get("token_hidden", c.model.backbone.token_hidden);
    b.get("combine_hidden", c.model.backbone.combine_hidden);
    b.get_enum("sampling", c.model.backbone.sampling, parse_neighbor_sampling);
    b.finish();
    m.get("use_lte", c.model.use_lte);
    m.get("use_lha", c.model.use_lha);
    m.get("trainable_time", c.model.trainable_time);
    m.get("predictor_hidden", c.model.predictor_hidden);
    Section l = m.child("lha");
    const bool dim_given = l.has("dim");
    l.get("gamma", c.model.lha.gamma);
    l.get("k", c.model.lha.k);
    l.get("dim", c.model.lha.dim);
    l.get_enum("aggregator", c.model.lha.aggregator, parse_aggregator);
    l.finish();
    if (!dim_given) c.model.lha.dim = c.model.backbone.dim;
    m.finish();
  }
  {
    Section t = root.child("train");
    t.get("lr", c.train.lr);
    t.get("batch_size", c.train.batch_size);
    t.get("max_epochs", c.train.max_epochs);
    t.get("patience", c.train.patience);
    t.get("gamma_grid", c.train.gamma_grid);
    t.finish();
  }
  {
    Section e = root.child("eval");
    e.get_enum("negatives", c.eval.negatives, parse_neg_kind);
    e.get("K", c.eval.k);
    std::string mode = "transductive";
    e.get("mode", mode);
    if (mode == "transductive") {
      c.eval.mode = EvalMode::transductive;
    } else if (mode == "inductive" || mode == "inductive_nodes") {
      c.eval.mode = EvalMode::inductive_nodes;
    } else {
      throw ConfigError("eval.mode must be transductive or inductive");
    }
    e.get("cold_start", c.eval.cold_start);
    e.get("inductive_fraction", c.eval.inductive_fraction);
    e.get("diagnostics_m", c.eval.diagnostics_m);
    e.get("buckets", c.eval.buckets);
    e.finish();
  }
  root.get("output_dir", c.output_dir);
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  root.finish();
  c.finalize();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json run_config_json(const RunConfig& c) {
  const auto& s = c.dataset.schema;
  // Feature widths come from the data and the seed from the root key.
  json model = c.model;
  for (const char* derived : {"node_feature_dim", "edge_feature_dim", "seed"}) model.erase(derived);
  return json{
      {"dataset",
       {{"path", c.dataset.path},
        {"schema",
         {{"src", s.src_column},
          {"dst", s.dst_column},
          {"ts", s.ts_column},
          {"label", s.label_column},
          {"features", s.feature_columns},
          {"delimiter", std::string(1, s.delimiter)}}}}},
      {"synth",
       {{"num_nodes", c.synth.num_nodes},
        {"frequent_pairs", c.synth.num_frequent_pairs},
        {"infrequent_pairs", c.synth.num_infrequent_pairs},
        {"alpha", c.synth.pareto_shape},
        {"x_min", c.synth.pareto_scale},
        {"horizon", c.synth.horizon},
        {"period_min", c.synth.frequent_period_min},
        {"period_max", c.synth.frequent_period_max},
        {"seed", c.synth.seed}}},
      {"split", {{"train", c.split.train_frac}, {"val", c.split.val_frac}}},
      {"model", model},
      {"train",
       {{"lr", c.train.lr},
        {"batch_size", c.train.batch_size},
        {"max_epochs", c.train.max_epochs},
        {"patience", c.train.patience},
        {"gamma_grid", c.train.gamma_grid}}},
      {"eval",
       {{"negatives", to_string(c.eval.negatives)},
        {"K", c.eval.k},
        {"mode", c.eval.mode == EvalMode::transductive ? "transductive" : "inductive"},
        {"cold_start", c.eval.cold_start},
        {"inductive_fraction", c.eval.inductive_fraction},
        {"diagnostics_m", c.eval.diagnostics_m},
        {"buckets", c.eval.buckets}}},
      {"output_dir", c.output_dir},
      {"seed", c.seed},
      {"threads", c.threads}};
}

void apply_ablation(ModelConfig& m, const std::string& ablate) {
  if (ablate == "none") {
    m.use_lte = m.use_lha = false;
  } else if (ablate == "lte") {
    m.use_lte = true;
    m.use_lha = false;
  } else if (ablate == "lha") {
    m.use_lte = false;
    m.use_lha = true;
  } else if (ablate == "both") {
    m.use_lte = m.use_lha = true;
  } else {
    throw ConfigError("--ablate must be one of none, lte, lha, both");
  }
}

std::string resolve_output_dir(const std::optional<std::string>& flag, const RunConfig& c) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("TAMI_OUTPUT_DIR"); env && *env) return env;
  if (!c.output_dir.empty()) return c.output_dir;
  return "tami_out";
}

TemporalGraph load_dataset(RunConfig& c) {
  TemporalGraph g = c.dataset.path.empty() ? synth_pareto_graph(c.synth)
                                           : load_events(c.dataset.path, c.dataset.schema);
  c.model.node_feature_dim = g.node_feature_dim();
  c.model.edge_feature_dim = g.edge_feature_dim();
  return g;
}

}  // namespace tami
