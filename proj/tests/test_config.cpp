#include <doctest.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "tami/config.hpp"
#include "tami/error.hpp"

using namespace tami;
using nlohmann::json;

TEST_CASE("defaults") {
  const auto c = parse_run_config(json::object());
  CHECK(c.dataset.path.empty());
  CHECK(c.split.train_frac == 0.70);
  CHECK(c.split.val_frac == 0.15);
  CHECK(c.train.lr == 1e-4);
  CHECK(c.train.batch_size == 200);
  CHECK(c.model.lha.dim == c.model.backbone.dim);
  CHECK(c.model.lha.k == 1);
  CHECK(c.eval.k == 1);
  CHECK(c.eval.inductive_fraction == 0.1);
  CHECK(c.threads == 1);
}

TEST_CASE("values are read and propagated") {
  const auto c = parse_run_config(json::parse(R"({
    "seed": 7, "threads": 3,
    "model": {"backbone": {"dim": 16}, "lha": {"aggregator": "max", "k": 3}},
    "train": {"lr": 0.001, "max_epochs": 5, "patience": 2},
    "eval": {"negatives": "hist", "K": 50, "mode": "inductive"},
    "dataset": {"path": "x.csv", "schema": {"src": "u", "delimiter": ";"}}
  })"));
  CHECK(c.model.backbone.dim == 16);
  CHECK(c.model.lha.dim == 16);
  CHECK(c.model.lha.aggregator == Aggregator::max);
  CHECK(c.model.seed == 7);
  CHECK(c.train.seed == 7);
  CHECK(c.train.threads == 3);
  CHECK(c.eval.negatives == NegKind::historical);
  CHECK(c.eval.k == 50);
  CHECK(c.eval.mode == EvalMode::inductive_nodes);
  CHECK(c.dataset.schema.src_column == "u");
  CHECK(c.dataset.schema.delimiter == ';');
}

TEST_CASE("schema violations are config errors") {
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"bogus": 1})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"model": {"lha": {"gama": 0.5}}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"train": {"lr": "fast"}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"model": {"lha": {"gamma": 2}}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"eval": {"K": 0}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"eval": {"negatives": "hard"}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"split": {"train": 0.9, "val": 0.2}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"synth": {"alpha": 2.5}})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"([1, 2])")), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("resolved config round trips") {
  auto c = parse_run_config(json::parse(R"({"seed": 3, "model": {"use_lte": false}})"));
  const auto j = run_config_json(c);
  const auto back = parse_run_config(j);
  CHECK(run_config_json(back) == j);
}

TEST_CASE("ablation switches") {
  ModelConfig m;
  apply_ablation(m, "none");
  CHECK_FALSE(m.use_lte);
  CHECK_FALSE(m.use_lha);
  apply_ablation(m, "both");
  CHECK(m.use_lte);
  CHECK(m.use_lha);
  apply_ablation(m, "lte");
  CHECK(m.use_lte);
  CHECK_FALSE(m.use_lha);
  apply_ablation(m, "lha");
  CHECK_FALSE(m.use_lte);
  CHECK(m.use_lha);
  CHECK_THROWS_AS(apply_ablation(m, "all"), ConfigError);
}

TEST_CASE("output directory precedence") {
  RunConfig c;
  unsetenv("TAMI_OUTPUT_DIR");
  CHECK(resolve_output_dir(std::nullopt, c) == "tami_out");
  c.output_dir = "from_config";
  CHECK(resolve_output_dir(std::nullopt, c) == "from_config");
  setenv("TAMI_OUTPUT_DIR", "from_env", 1);
  CHECK(resolve_output_dir(std::nullopt, c) == "from_env");
  CHECK(resolve_output_dir(std::string("from_flag"), c) == "from_flag");
  unsetenv("TAMI_OUTPUT_DIR");
}
