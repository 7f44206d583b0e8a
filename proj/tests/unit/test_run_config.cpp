#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mupp/run_config.hpp"

#include <json.hpp>

using namespace mupp;
using nlohmann::json;

TEST_CASE("sweep job defaults and overrides") {
  const auto job = parse_sweep_job(R"j({"experiment": "width", "widths": [32, 64, 128], "seeds": 2,
      "preset": "mup-global", "depth": 3, "activation": "sigma_gelu(0.05)", "loss": "mse"})j");
  CHECK(job.experiment == Experiment::width);
  CHECK(job.sweep.widths == std::vector<int>{32, 64, 128});
  CHECK(job.sweep.seeds == 2);
  CHECK(job.sweep.model.depth() == 3);
  CHECK(job.sweep.model.loss == LossKind::mse);
  CHECK(job.sweep.model.activation.kind == ActivationKind::sigma_gelu);
  CHECK(job.tolerance == doctest::Approx(0.2));

  const auto empty = parse_sweep_job("{}");
  CHECK(empty.sweep.widths.size() == 5);
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK_THROWS_AS(parse_sweep_job(R"j({"widht": [16, 32, 64]})j"), ConfigError);
  CHECK_THROWS_AS(parse_sweep_job(R"j({"data": {"n_per_class": 8, "colour": 1}})j"), ConfigError);
  CHECK_THROWS_AS(parse_sweep_job(R"j({"widths": [64, 32, 128]})j"), ConfigError);
  CHECK_THROWS_AS(parse_sweep_job(R"j({"preset": "mup", "rule": "wobble"})j"), ConfigError);
  CHECK_THROWS_AS(parse_sweep_job(R"j({"experiment": "moon"})j"), ConfigError);
  CHECK_THROWS_AS(parse_sweep_job("not json"), ConfigError);
  CHECK_THROWS_AS(parse_train_job(R"j({"width": "wide"})j"), ConfigError);
  CHECK_THROWS_AS(parse_equiv_job(R"j({"theta": "x/y"})j"), ConfigError);
}

TEST_CASE("config echo round-trips") {
  const auto job = parse_sweep_job(R"j({"experiment": "coupling", "steps": 7, "preset": "mup-global"})j");
  const auto again = parse_sweep_job(to_json(job));
  CHECK(again.experiment == Experiment::coupling);
  CHECK(again.coupling.steps == 7);
  CHECK(to_json(again) == to_json(job));

  const auto train = parse_train_job(R"j({"width": 32, "parameterization": {"L": 1,
      "a": ["0", "0"], "b": ["0", "1"], "c": ["0", "1"], "d_layers": ["0", "0"], "d_global": "0",
      "rule": "none"}})j");
  CHECK(train.width == 32);
  CHECK(parse_train_job(to_json(train)).model.param.b == train.model.param.b);
}

TEST_CASE("equivalence job transforms") {
  const auto joint = parse_equiv_job(R"j({"preset": "mupp", "theta": "1/2"})j");
  const auto t = joint.transformed();
  CHECK(t.a[0] == joint.param.a[0] + Rational(1, 2));
  const auto layered = parse_equiv_job(R"j({"preset": "mupp", "theta_layers": ["1/2", "1/4", "-1/2"]})j");
  CHECK(layered.transformed().b[1] == layered.param.b[1] - Rational(1, 4));
}
