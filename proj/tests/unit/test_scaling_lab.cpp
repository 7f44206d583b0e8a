#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mupp/random.hpp"
#include "mupp/scaling_lab.hpp"

#include <cmath>

using namespace mupp;

namespace {

SweepConfig small_sweep(const std::string& preset_name) {
  SweepConfig cfg;
  cfg.widths = {16, 32, 64};
  cfg.seeds = 2;
  cfg.steps = 4;
  cfg.model = model_from_preset(preset_name, 2);
  return cfg;
}

}  // namespace

TEST_CASE("fit recovers exact power laws") {
  std::vector<std::pair<double, double>> pts;
  for (double w : {64.0, 128.0, 256.0}) pts.push_back({w, 3.0 * std::pow(w, -0.75)});
  const auto fit = fit_exponent(pts);
  CHECK(fit.slope == doctest::Approx(-0.75).epsilon(1e-12));
  CHECK(fit.r_squared == doctest::Approx(1.0));
  CHECK(fit.points == 3);

  const auto flat = fit_exponent({{64, 2.0}, {128, 2.0}, {256, 2.0}});
  CHECK(flat.slope == doctest::Approx(0.0));

  const auto excl = fit_exponent({{64, 1.0}, {128, 2.0}, {256, 4.0}, {512, -1.0}});
  CHECK(excl.excluded == 1);
  CHECK(excl.slope == doctest::Approx(1.0));

  CHECK_THROWS_AS(fit_exponent({{64, 1.0}, {128, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(fit_exponent({{64, 1.0}, {64, 2.0}, {128, 3.0}}), std::invalid_argument);
}

TEST_CASE("fit is accurate under 5% log-normal noise") {
  // Five base-2 widths: log2 noise sd 0.05/ln 2 over Σ(x − x̄)² = 10 gives
  // an OLS slope sd of about 0.023.
  const CounterRng rng(42, 1);
  std::uint64_t k = 0;
  const int reps = 400;
  double sum = 0, sq = 0;
  for (int r = 0; r < reps; ++r) {
    std::vector<std::pair<double, double>> pts;
    for (double w : {64.0, 128.0, 256.0, 512.0, 1024.0})
      pts.push_back({w, std::pow(w, 0.5) * std::exp(0.05 * rng.normal(k++))});
    const double s = fit_exponent(pts).slope;
    sum += s;
    sq += s * s;
  }
  const double mean = sum / reps;
  const double sd = std::sqrt(sq / reps - mean * mean);
  CHECK(std::abs(mean - 0.5) <= 0.05);
  CHECK(std::abs(mean - 0.5) <= 4 * sd / std::sqrt(reps));
  CHECK(sd == doctest::Approx(0.05 / std::log(2.0) / std::sqrt(10.0)).epsilon(0.15));
}

TEST_CASE("sweep output does not depend on worker count") {
  SweepConfig a = small_sweep("mupp");
  SweepConfig b = a;
  a.jobs = 1;
  b.jobs = 3;
  CHECK(sweep_csv(run_width_sweep(a)) == sweep_csv(run_width_sweep(b)));
}

TEST_CASE("every emitted statistic is predicted or labeled telemetry") {
  for (const char* name : {"mupp", "mup-global", "mup-naive"}) {
    const SweepConfig cfg = small_sweep(name);
    const auto predictions = predict_exponents(cfg.model.analysis_param());
    for (const auto& r : run_width_sweep(cfg))
      CHECK_MESSAGE(predictions.count(r.statistic) + is_unpredicted_telemetry(r.statistic) > 0, r.statistic);
  }
}

TEST_CASE("steps=0 records only initialization statistics, flat under muP") {
  SweepConfig cfg = small_sweep("mup");
  cfg.steps = 0;
  cfg.widths = {64, 128, 256, 512};
  cfg.seeds = 4;
  const auto records = run_width_sweep(cfg);
  REQUIRE_FALSE(records.empty());
  for (const auto& r : records) CHECK(r.statistic.rfind("h_init", 0) == 0);
  for (const auto& f : fit_sweep(records)) CHECK(std::abs(f.slope) <= 0.15);
}

TEST_CASE("first-step mode skips feature updates that have not happened yet") {
  SweepConfig cfg = small_sweep("mup-naive");
  cfg.step_range = "1";
  for (const auto& r : run_width_sweep(cfg)) {
    CHECK(r.step_range != "2..4");
    CHECK(r.statistic.rfind("dx_update", 0) != 0);
  }
}

TEST_CASE("sweep config validation") {
  SweepConfig cfg = small_sweep("mupp");
  cfg.widths = {16, 32};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.widths = {32, 16, 64};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("verdict report") {
  CHECK(verdict_report({}, {}).empty());
  const std::vector<ExponentFit> fits{{"df_perturb", 0.1, 0, 0.95, 5, 0, 0},
                                      {"vnorm", -0.45, 0, 0.97, 5, 0, 0},
                                      {"mystery", 0.3, 0, 0.99, 5, 0, 0},
                                      {"loss", 0.0, 0, 0.1, 5, 0, 0}};
  const std::map<std::string, Rational> pred{{"df_perturb", Rational(0)}, {"vnorm", Rational(-1, 2)}};
  const auto rows = verdict_report(fits, pred);
  REQUIRE(rows.size() == 4);
  auto row = [&](const std::string& s) {
    for (const auto& r : rows)
      if (r.statistic == s) return r;
    FAIL("missing row " << s);
    return VerdictRow{};
  };
  CHECK(row("df_perturb").pass);
  CHECK(row("vnorm").pass);
  CHECK_FALSE(row("mystery").pass);
  CHECK_FALSE(row("mystery").error.empty());
  CHECK(row("loss").unpredicted);
  CHECK_FALSE(verdict_pass(rows));
  CHECK(verdict_json(rows).find("mystery") != std::string::npos);
}

TEST_CASE("identical twins couple exactly") {
  CouplingConfig cfg;
  cfg.widths = {16, 32, 64};
  cfg.seeds = 1;
  cfg.steps = 3;
  cfg.model = model_from_preset("mup-global", 2);
  cfg.model.param.rule.tag = RuleTag::last_layer_only;
  for (const auto& r : coupling_experiment(cfg)) CHECK(r.d_last_layer == 0.0);
}

TEST_CASE("equivalence: identity is bit exact, joint shift agrees to rounding") {
  EquivalenceConfig cfg;
  cfg.width = 64;
  cfg.steps = 4;
  const auto p = preset("mupp", 2);
  CHECK(equivalence_check(p, 0, 0, cfg) == 0.0);
  CHECK(equivalence_check(p, Rational(1, 2), 0, cfg) <= 1e-6);
  Parameterization naive = preset("mup-naive", 2);
  CHECK(equivalence_deviation(p, naive, cfg) > 1e-3);
}

TEST_CASE("hp grid: rho=0 column is the SGD baseline and cells are complete") {
  HpGridConfig cfg;
  cfg.widths = {16, 32};
  cfg.etas = {0.1, 0.4};
  cfg.rhos = {0.0, 0.3};
  cfg.seeds = 1;
  cfg.steps = 5;
  cfg.test_points = 32;
  cfg.model = model_from_preset("mupp", 2);
  const auto res = hp_grid(cfg);
  CHECK(res.cells.size() == 8);
  CHECK(res.optima.size() == 2);

  HpGridConfig sgd = cfg;
  sgd.rhos = {0.0};
  sgd.model.param.rule.tag = RuleTag::none;
  const auto base = hp_grid(sgd);
  for (const auto& b : base.cells)
    for (const auto& c : res.cells)
      if (c.width == b.width && c.eta_index == b.eta_index && c.rho_index == 0) {
        CHECK(c.test_acc == b.test_acc);
        CHECK(c.final_loss == b.final_loss);
      }
  CHECK(hp_grid_csv(res).find("unstable") != std::string::npos);
}

TEST_CASE("dominant gradient-norm term") {
  CHECK(dominant_gap_statistic(preset("mup-global", 2)) == "gap_residual_last");
  CHECK(dominant_gap_statistic(preset("mupp", 2)) == "gap_residual_first");
}
