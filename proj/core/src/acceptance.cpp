#include "mupp/acceptance.hpp"

#include "mupp/param_algebra.hpp"
#include "mupp/random.hpp"
#include "mupp/run_config.hpp"
#include "mupp/scaling_lab.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace mupp {

namespace {

// Pinned acceptance tolerances.
constexpr double kBlowupMinSlope = 0.8;
constexpr double kVanishRatioMax = -0.3;
constexpr double kVanishDxMax = -0.6;
constexpr double kFlatTol = 0.15;
constexpr double kLastLayerEpsSlope = -0.5;
constexpr double kLastLayerEpsTol = 0.15;
constexpr double kGapSlope = -0.5;
constexpr double kGapTol = 0.2;
constexpr double kGapMinR2 = 0.85;
constexpr double kEquivMaxDeviation = 1e-6;
constexpr double kVariantFlatTol = 0.2;
constexpr double kVariantNaiveTol = 0.25;
constexpr double kGradRelTol = 1e-5;
constexpr double kTransferFraction = 0.7;

std::string num(double v, int digits = 3) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

CriterionResult criterion(int id, std::string title, bool pass) {
  CriterionResult r;
  r.id = id;
  r.title = std::move(title);
  r.pass = pass;
  return r;
}

std::string mark(bool ok) { return ok ? "ok  " : "BAD "; }

class Runner {
 public:
  explicit Runner(const AcceptanceOptions& o) : o_(o) {}

  void artifact(const std::string& name, const std::string& text) const {
    if (o_.out_dir.empty()) return;
    write_text_file((std::filesystem::path(o_.out_dir) / name).string(), text);
  }

  SweepConfig sweep(const ModelSpec& m) const {
    SweepConfig c;
    c.model = m;
    c.jobs = o_.jobs;
    return c;
  }

  /// Fits of a sweep, cached by label so criteria can share runs.
  const std::vector<ExponentFit>& fits(const std::string& label, const SweepConfig& cfg) {
    auto it = cache_.find(label);
    if (it != cache_.end()) return it->second;
    const auto records = run_width_sweep(cfg);
    artifact("sweep_" + label + ".csv", sweep_csv(records));
    auto f = fit_sweep(records);
    artifact("verdict_" + label + ".json",
             verdict_json(verdict_report(f, predict_exponents(cfg.model.analysis_param()))));
    return cache_.emplace(label, std::move(f)).first->second;
  }

  CriterionResult c1();
  CriterionResult c2();
  CriterionResult c3();
  CriterionResult c4();
  CriterionResult c5();
  CriterionResult c6();
  CriterionResult c7();
  CriterionResult c8();
  CriterionResult c9();
  CriterionResult c10();

  SweepConfig trained_sweep(const std::string& preset_name) const {
    SweepConfig c = sweep(model_from_preset(preset_name, 2));
    c.steps = 200;
    c.seeds = 8;
    c.record_every = 20;
    return c;
  }

 private:
  const AcceptanceOptions& o_;
  std::map<std::string, std::vector<ExponentFit>> cache_;
};

double slope_of(const std::vector<ExponentFit>& fits, const std::string& stat, double* r2 = nullptr) {
  const auto f = find_fit(fits, stat);
  if (!f) return std::nan("");
  if (r2) *r2 = f->r_squared;
  return f->slope;
}

// ---------------------------------------------------------------------------

CriterionResult Runner::c1() {
  CriterionResult res = criterion(1, "table reproduction", true);
  const auto t0 = std::chrono::steady_clock::now();
  struct Row {
    const char* preset;
    Rational r;
    bool stable;
    bool check_flags;
    bool nontrivial;
    bool feature_learning;
  };
  const Row table_b1[] = {
      {"sp", Rational(-1), false, false, false, false},
      {"sp-stable", half(), true, true, true, false},
      {"ntp", half(), true, true, true, false},
      {"mup", Rational(0), true, true, true, true},
  };
  for (int L : {2, 3}) {
    for (const auto& row : table_b1) {
      const auto rep = classify(preset(row.preset, L));
      const bool fl = std::any_of(rep.feature_learning.begin(), rep.feature_learning.end(), [](bool b) { return b; });
      bool ok = rep.r == row.r && rep.stable == row.stable;
      if (row.check_flags) ok = ok && rep.nontrivial == row.nontrivial && fl == row.feature_learning;
      res.pass = res.pass && ok;
      res.details.push_back(mark(ok) + std::string(row.preset) + " L=" + std::to_string(L) + ": r=" +
                            to_string(rep.r) + " stable=" + std::to_string(rep.stable) + " nontrivial=" +
                            std::to_string(rep.nontrivial) + " feature_learning=" + std::to_string(fl));
    }
    // Perturbation scalings on top of μP.
    const auto naive = classify(preset("mup-naive", L));
    const bool naive_ok =
        !naive.stable && std::find(naive.violations.begin(), naive.violations.end(), "d+d_{L+1} ≥ 1 violated") !=
                             naive.violations.end();
    const auto global = classify(preset("mup-global", L));
    bool global_ok = global.stable && global.perturbation_status.back() == PerturbStatus::effective;
    for (int l = 0; l < L; ++l) global_ok = global_ok && global.perturbation_status[l] != PerturbStatus::effective;
    const auto eff = classify(preset("mupp", L));
    bool eff_ok = eff.stable;
    for (auto s : eff.perturbation_status) eff_ok = eff_ok && s == PerturbStatus::effective;
    res.pass = res.pass && naive_ok && global_ok && eff_ok;
    res.details.push_back(mark(naive_ok) + "mup-naive L=" + std::to_string(L) + ": unstable, d+d_{L+1} ≥ 1 violated");
    res.details.push_back(mark(global_ok) + "mup-global L=" + std::to_string(L) + ": stable, last layer effective only");
    res.details.push_back(mark(eff_ok) + "mupp L=" + std::to_string(L) + ": stable, all layers effective");
  }
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool fast = sec < 1.0;
  res.pass = res.pass && fast;
  res.details.push_back(mark(fast) + "runtime " + num(sec, 4) + " s (limit 1 s)");
  return res;
}

CriterionResult Runner::c2() {
  CriterionResult res = criterion(2, "perturbation scaling uniqueness (brute force)", false);
  const auto t0 = std::chrono::steady_clock::now();
  const int L = 3;
  Parameterization p = preset("mup", L);
  p.rule.tag = RuleTag::sam_joint_lp;
  std::vector<Rational> d_grid, dl_grid;
  for (int k = -6; k <= 6; ++k) d_grid.emplace_back(k, 4);
  for (int k = -4; k <= 8; ++k) dl_grid.emplace_back(k, 4);

  std::set<std::string> classes;
  long passing = 0, total = 0;
  const std::size_t m = dl_grid.size();
  std::vector<std::size_t> idx(L + 1, 0);
  for (const auto& d : d_grid) {
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      p.d_global = d;
      for (int l = 0; l <= L; ++l) p.d_layers[l] = dl_grid[idx[l]];
      ++total;
      const auto rep = classify(p);
      bool all = rep.stable;
      for (auto s : rep.perturbation_status) all = all && s == PerturbStatus::effective;
      if (all) {
        ++passing;
        const auto q = canonicalize(p);
        std::string key = to_string(q.d_global);
        for (const auto& x : q.d_layers) key += "," + to_string(x);
        classes.insert(key);
      }
      int pos = 0;
      while (pos <= L && ++idx[pos] == m) idx[pos++] = 0;
      if (pos > L) break;
    }
  }
  // d = -1/2, d_1 = 1/2 - c∇, hidden d_l = 3/2 - c∇, d_{L+1} = 3/2 with c∇ = 1.
  const std::string expected = "-1/2,-1/2,1/2,1/2,3/2";
  const auto derived = derive_mpp(preset("mup", L).b, preset("mup", L).c);
  std::string derived_key = derived ? to_string(derived->d_global) : "none";
  if (derived)
    for (const auto& x : derived->d_layers) derived_key += "," + to_string(x);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.pass = classes.size() == 1 && *classes.begin() == expected && derived_key == expected && sec < 10.0;
  res.details.push_back("grid points " + std::to_string(total) + ", passing " + std::to_string(passing) +
                        ", canonical classes " + std::to_string(classes.size()));
  for (const auto& c : classes) res.details.push_back("class (d; d_l) = " + c);
  res.details.push_back("closed form " + expected + ", derive_mpp " + derived_key);
  res.details.push_back("runtime " + num(sec, 2) + " s (limit 10 s)");
  return res;
}

CriterionResult Runner::c3() {
  CriterionResult res = criterion(3, "gradient correctness (finite differences)", true);
  const Activation acts[] = {{ActivationKind::tanh, 0.05}, {ActivationKind::sigma_gelu, 0.05},
                             {ActivationKind::relu, 0.05}};
  const char* modes[] = {"mup", "a-mupp"};
  int checks = 0, failures = 0;
  double worst = 0;
  for (const char* mode : modes) {
    const Parameterization p = preset(mode, 2);
    for (const auto& act : acts) {
      for (LossKind loss : {LossKind::cross_entropy, LossKind::mse}) {
        for (int width : {8, 64}) {
          for (bool perturbed : {false, true}) {
            const std::uint64_t seed = 17;
            const NetworkState net = init_network(p, NetShape{2, 5, width, 3}, act, seed);
            const CounterRng rng(seed, stream_id(StreamDomain::probe, 0));
            std::uint64_t k = 0;
            Eigen::MatrixXd x(5, 3);
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal(k++);
            const std::vector<int> y{0, 2, 1};
            Weights eps;
            if (perturbed)
              for (const auto& W : net.layers) {
                Eigen::MatrixXd e(W.rows(), W.cols());
                for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = 0.01 * W.cwiseAbs().maxCoeff() * rng.normal(k++);
                eps.push_back(e);
              }
            const Weights* ep = perturbed ? &eps : nullptr;
            const PassCache c = forward(net, x, ep);
            const GradientSet g = backward(net, c, evaluate_loss(loss, c.f, y).chi);
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
              Eigen::MatrixXd U(net.layers[l].rows(), net.layers[l].cols());
              for (Eigen::Index i = 0; i < U.size(); ++i) U.data()[i] = rng.normal(k++);
              U /= U.norm();
              const double h = 1e-5 * std::max(1.0, net.layers[l].norm());
              auto loss_at = [&](double t) {
                NetworkState moved = net;
                moved.layers[l] += t * U;
                return evaluate_loss(loss, forward(moved, x, ep).f, y).value;
              };
              const double fd = (loss_at(h) - loss_at(-h)) / (2 * h);
              const double an = (g.grads[l].array() * U.array()).sum();
              const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-12});
              ++checks;
              worst = std::max(worst, err);
              if (err > kGradRelTol) {
                ++failures;
                res.details.push_back("BAD " + std::string(mode) + " " + to_string(act) + " " + to_string(loss) +
                                      " width " + std::to_string(width) + (perturbed ? " perturbed" : "") +
                                      " layer " + std::to_string(l + 1) + ": rel err " + sci(err));
              }
            }
          }
        }
      }
    }
  }
  res.pass = failures == 0;
  res.details.push_back(std::to_string(checks) + " directional checks, " + std::to_string(failures) +
                        " failures, worst rel err " + sci(worst) + " (limit " + sci(kGradRelTol) + ")");
  return res;
}

CriterionResult Runner::c4() {
  CriterionResult res = criterion(4, "output blowup under naive perturbation scaling", false);
  SweepConfig c = sweep(model_from_preset("mup-naive", 2));
  c.step_range = "1";
  c.steps = 1;
  c.seeds = 8;
  c.statistics = {"df_perturb"};
  double r2 = 0;
  const double s = slope_of(fits("blowup_mup_naive", c), "df_perturb", &r2);
  const Rational predicted = predict_exponent(c.model.analysis_param(), "df_perturb");
  res.pass = s >= kBlowupMinSlope;
  res.details.push_back("|δ̃f| slope " + num(s) + " (r² " + num(r2) + "), required ≥ " + num(kBlowupMinSlope, 1) +
                        "; exponent analysis predicts " + to_string(predicted));
  return res;
}

CriterionResult Runner::c5() {
  CriterionResult res = criterion(5, "vanishing vs effective perturbations", true);
  const int L = 2;
  const auto& global = fits("trained_mup_global", trained_sweep("mup-global"));
  const auto& mupp = fits("trained_mupp", trained_sweep("mupp"));
  auto check = [&](bool ok, const std::string& what) {
    res.pass = res.pass && ok;
    res.details.push_back(mark(ok) + what);
  };
  for (int l = 2; l <= L; ++l) {
    const std::string ratio = "eps_spec_ratio/" + std::to_string(l);
    const double g = slope_of(global, ratio), m = slope_of(mupp, ratio);
    check(g <= kVanishRatioMax, "mup-global ‖ε‖/‖W‖ layer " + std::to_string(l) + " slope " + num(g) + " ≤ " +
                                    num(kVanishRatioMax, 1));
    check(std::abs(m) <= kFlatTol, "mupp ‖ε‖/‖W‖ layer " + std::to_string(l) + " slope " + num(m) + " within ±" +
                                       num(kFlatTol, 2));
  }
  for (int l = 1; l <= L; ++l) {
    const std::string dx = "dx_perturb/" + std::to_string(l);
    const double g = slope_of(global, dx), m = slope_of(mupp, dx);
    check(g <= kVanishDxMax, "mup-global δ̃x^" + std::to_string(l) + " slope " + num(g) + " ≤ " + num(kVanishDxMax, 1));
    check(std::abs(m) <= kFlatTol, "mupp δ̃x^" + std::to_string(l) + " slope " + num(m) + " within ±" + num(kFlatTol, 2));
  }
  const std::string last = "eps_fro/" + std::to_string(L + 1);
  const double e = slope_of(global, last);
  check(std::abs(e - kLastLayerEpsSlope) <= kLastLayerEpsTol,
        "mup-global last-layer ‖ε‖_F slope " + num(e) + " within " + num(kLastLayerEpsSlope, 1) + " ± " +
            num(kLastLayerEpsTol, 2));
  return res;
}

CriterionResult Runner::c6() {
  CriterionResult res = criterion(6, "coupling collapse (SAM vs last-layer SAM)", true);
  CouplingConfig c;
  c.model = model_from_preset("mup-global", 2);
  c.widths = {128, 512, 2048};
  c.seeds = 4;
  c.steps = 50;
  c.eta = 0.5;
  c.rho = 0.5;
  c.jobs = o_.jobs;
  const auto rows = coupling_experiment(c);
  artifact("coupling.csv", coupling_csv(rows));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    res.details.push_back("width " + std::to_string(r.width) + ": D(n) " + num(r.d_last_layer, 4) + ", SAM vs SGD " +
                          num(r.d_sgd, 4) + ", diverged seeds " + std::to_string(r.diverged));
    res.pass = res.pass && r.seeds > 0;
    if (i > 0) res.pass = res.pass && r.d_last_layer < rows[i - 1].d_last_layer;
  }
  res.pass = res.pass && rows.back().d_sgd >= rows.back().d_last_layer;
  return res;
}

CriterionResult Runner::c7() {
  CriterionResult res = criterion(7, "gradient-norm dominance", true);
  const std::pair<const char*, const char*> cases[] = {{"trained_mup_global", "mup-global"}, {"trained_mupp", "mupp"}};
  for (const auto& [label, name] : cases) {
    const SweepConfig cfg = trained_sweep(name);
    const std::string stat = dominant_gap_statistic(cfg.model.analysis_param());
    double r2 = 0;
    const double s = slope_of(fits(label, cfg), stat, &r2);
    const bool ok = std::abs(s - kGapSlope) <= kGapTol && r2 >= kGapMinR2;
    res.pass = res.pass && ok;
    res.details.push_back(mark(ok) + name + " " + stat + " slope " + num(s) + " (r² " + num(r2) + "), want " +
                          num(kGapSlope, 1) + " ± " + num(kGapTol, 1) + " with r² ≥ " + num(kGapMinR2, 2));
  }
  return res;
}

CriterionResult Runner::c8() {
  CriterionResult res = criterion(8, "equivalence classes", true);
  EquivalenceConfig cfg;
  cfg.width = 256;
  cfg.steps = 10;
  cfg.eta = 0.5;
  cfg.rho = 0.5;
  const Parameterization mupp = preset("mupp", 2);
  Parameterization ln = variant_mupp(RuleTag::sam_layerwise_norm, 2);
  const Parameterization a_mupp = preset("a-mupp", 2);
  const std::vector<Rational> theta_l{half(), Rational(1, 4), -half()};
  const std::pair<std::string, double> checks[] = {
      {"mupp, θ = 1/2 joint", equivalence_check(mupp, half(), Rational(0), cfg)},
      {"layerwise-norm rule, θ_l = (1/2, 1/4, -1/2)",
       equivalence_deviation(ln, equivalence_transform_layerwise(ln, theta_l), cfg)},
      {"a-mupp vs its decoupled a = 0 form", equivalence_deviation(a_mupp, normalize_multipliers(a_mupp), cfg)},
  };
  for (const auto& [what, dev] : checks) {
    const bool ok = dev <= kEquivMaxDeviation;
    res.pass = res.pass && ok;
    res.details.push_back(mark(ok) + what + ": max deviation " + sci(dev) + " (limit " + sci(kEquivMaxDeviation) + ")");
  }
  return res;
}

CriterionResult Runner::c9() {
  CriterionResult res = criterion(9, "variant scalings", true);
  const std::pair<RuleTag, const char*> variants[] = {{RuleTag::asam_elementwise, "asam_elementwise"},
                                                      {RuleTag::asam_layerwise, "asam_layerwise"},
                                                      {RuleTag::sam_on, "sam_on"}};
  for (const auto& [tag, name] : variants) {
    const bool caveat = tag == RuleTag::asam_layerwise;
    for (bool naive : {false, true}) {
      ModelSpec m;
      m.param = naive ? variant_naive(tag, 2) : variant_mupp(tag, 2);
      m.preset = std::string(naive ? "naive-" : "mupp-") + name;
      SweepConfig c = sweep(m);
      c.steps = 100;
      c.seeds = 4;
      c.record_every = 20;
      // Unstable scalings are measured at the first step, before the blowup feeds back.
      const bool stable = classify(m.param).stable;
      if (!stable) c.step_range = "1";
      const auto preds = predict_exponents(m.param);
      std::vector<std::string> stats;
      for (int l = 1; l <= 3; ++l)
        if (preds.count("eps_spec_ratio/" + std::to_string(l))) stats.push_back("eps_spec_ratio/" + std::to_string(l));
      c.statistics = stats;
      const auto& f = fits("variant_" + m.preset, c);
      for (const auto& stat : stats) {
        const double s = slope_of(f, stat);
        const double want = naive ? to_double(preds.at(stat)) : 0.0;
        const double tol = naive ? kVariantNaiveTol : kVariantFlatTol;
        const bool ok = std::abs(s - want) <= tol;
        res.pass = res.pass && ok;
        res.details.push_back(mark(ok) + m.preset + " " + stat + " slope " + num(s) + ", want " + num(want, 2) +
                              " ± " + num(tol, 2) + (stable ? "" : " [step 1]") +
                              (caveat ? " [caveat: layerwise ASAM Frobenius norms drift in training]" : ""));
      }
    }
  }
  return res;
}

CriterionResult Runner::c10() {
  CriterionResult res = criterion(10, "hyperparameter grid (soft)", true);
  res.gating = o_.strict;
  HpGridConfig g;
  g.widths = {128, 512, 2048};
  g.etas = {0.05, 0.2, 0.8, 3.2};
  g.rhos = {0.0, 0.1, 0.4, 1.6};
  g.steps = 40;
  g.batch = 8;
  g.data.separation = 2.0;
  g.jobs = o_.jobs;

  g.model = model_from_preset("mupp", 2);
  g.model.loss = LossKind::mse;
  g.seeds = 3;
  const auto mupp = hp_grid(g);
  artifact("hp_grid_mupp.csv", hp_grid_csv(mupp));
  const int big = g.widths.back(), prev = g.widths[g.widths.size() - 2];
  int stable_seeds = 0;
  for (int s = 0; s < g.seeds; ++s) {
    const HpOptimum* a = nullptr;
    const HpOptimum* b = nullptr;
    for (const auto& o : mupp.optima) {
      if (o.seed != static_cast<std::uint64_t>(s)) continue;
      if (o.width == prev) a = &o;
      if (o.width == big) b = &o;
    }
    const bool ok = a && b && a->eta_index >= 0 && b->eta_index >= 0 &&
                    std::max(std::abs(a->eta_index - b->eta_index), std::abs(a->rho_index - b->rho_index)) <= 1;
    stable_seeds += ok;
    if (!a || !b) {
      res.details.push_back(mark(false) + "mupp seed " + std::to_string(s) + ": no optimum");
      continue;
    }
    res.details.push_back(mark(ok) + "mupp seed " + std::to_string(s) + ": optimum (η, ρ) index (" +
                          std::to_string(a->eta_index) + ", " + std::to_string(a->rho_index) + ") at width " +
                          std::to_string(prev) + ", (" + std::to_string(b->eta_index) + ", " +
                          std::to_string(b->rho_index) + ") at width " + std::to_string(big));
  }
  const double frac = static_cast<double>(stable_seeds) / g.seeds;
  const bool transfer = frac >= kTransferFraction;

  g.model = model_from_preset("mup-naive", 2);
  g.model.loss = LossKind::mse;
  g.seeds = 1;
  const auto naive = hp_grid(g);
  artifact("hp_grid_mup_naive.csv", hp_grid_csv(naive));
  std::map<std::pair<int, int>, bool> small_ok, large_bad;
  for (const auto& c : naive.cells) {
    const auto key = std::make_pair(c.eta_index, c.rho_index);
    if (c.width == g.widths.front()) small_ok[key] = !c.unstable;
    if (c.width == big) large_bad[key] = c.unstable;
  }
  int flipped = 0;
  for (const auto& [key, ok] : small_ok)
    if (ok && large_bad[key] && key.second > 0) ++flipped;
  const bool breaks = flipped > 0;
  res.pass = transfer && breaks;
  res.details.push_back(mark(transfer) + "mupp optimum moved ≤ 1 cell in " + std::to_string(stable_seeds) + "/" +
                        std::to_string(mupp.optima.size() / g.widths.size()) + " seeds (need ≥ " +
                        num(100 * kTransferFraction, 0) + "%)");
  res.details.push_back(mark(breaks) + "mup-naive: " + std::to_string(flipped) +
                        " ρ > 0 cells stable at width " + std::to_string(g.widths.front()) +
                        " become unstable at width " + std::to_string(big));
  if (!res.gating) res.details.push_back("reported only; gates in strict mode");
  return res;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts, std::ostream& log) {
  Runner run(opts);
  const std::vector<std::function<CriterionResult()>> all = {
      [&] { return run.c1(); }, [&] { return run.c2(); }, [&] { return run.c3(); }, [&] { return run.c4(); },
      [&] { return run.c5(); }, [&] { return run.c6(); }, [&] { return run.c7(); }, [&] { return run.c8(); },
      [&] { return run.c9(); }, [&] { return run.c10(); }};
  std::vector<CriterionResult> results;
  for (int id = 1; id <= static_cast<int>(all.size()); ++id) {
    if (!opts.only.empty() && !opts.only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    try {
      r = all[id - 1]();
    } catch (const std::exception& e) {
      r = criterion(id, "criterion " + std::to_string(id), false);
      r.details.push_back(std::string("error: ") + e.what());
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* verdict = r.pass ? "PASS" : (r.gating ? "FAIL" : "FAIL (non-gating)");
    log << verdict << "  [" << r.id << "] " << r.title << " (" << num(r.seconds, 1) << " s)\n";
    for (const auto& d : r.details) log << "        " << d << "\n";
    log.flush();
    results.push_back(std::move(r));
  }
  return results;
}

int acceptance_exit_code(const std::vector<CriterionResult>& results) {
  for (const auto& r : results)
    if (r.gating && !r.pass) return 3;
  return 0;
}

}  // namespace mupp
