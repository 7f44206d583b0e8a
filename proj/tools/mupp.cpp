// mupp: classify, derive and measure width scalings of SAM perturbations.

#include "mupp/acceptance.hpp"
#include "mupp/netcore.hpp"
#include "mupp/parallel.hpp"
#include "mupp/param_algebra.hpp"
#include "mupp/param_json.hpp"
#include "mupp/run_config.hpp"
#include "mupp/scaling_lab.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

using json = nlohmann::json;
using namespace mupp;

namespace {

enum Exit { kOk = 0, kConfig = 2, kFailed = 3, kDiverged = 4 };

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::vector<Rational> parse_list(const std::string& csv) {
  std::vector<Rational> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_rational(item));
  return out;
}

std::vector<int> parse_ints(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size()) throw ConfigError("not an integer: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

json rationals(const std::vector<Rational>& v) {
  json j = json::array();
  for (const auto& r : v) j.push_back(to_string(r));
  return j;
}

std::string power_of_n(const std::optional<Rational>& e) {
  if (!e) return "0";
  if (*e == 0) return "1";
  return "n^" + (e->denominator() == 1 ? to_string(*e) : "(" + to_string(*e) + ")");
}

std::string default_out_dir() {
  const char* env = std::getenv("MUPP_OUT_DIR");
  return env && *env ? env : "mupp_out";
}

/// Output directory plus config echo, shared by the file-writing commands.
struct Output {
  std::string dir;

  void write(const std::string& name, const std::string& text) const {
    write_text_file((std::filesystem::path(dir) / name).string(), text);
  }
};

/// Inline exponent flags shared by classify and derive.
struct InlineExponents {
  std::string preset;
  int depth = 2;
  std::string a, b, c, d_layers, d_global, rule;

  bool given() const { return !b.empty() || !c.empty(); }

  Parameterization build() const {
    Parameterization p;
    if (!preset.empty()) {
      p = mupp::preset(preset, depth);
    } else {
      if (b.empty() || c.empty()) throw ConfigError("give --preset, --config or both --b and --c");
      p.b = parse_list(b);
      p.c = parse_list(c);
      p.L = static_cast<int>(p.b.size()) - 1;
      p.a.assign(p.L + 1, Rational(0));
      p.d_layers.assign(p.L + 1, Rational(0));
      p.rule.tag = RuleTag::none;
    }
    if (!a.empty()) p.a = parse_list(a);
    if (!d_layers.empty()) {
      p.d_layers = parse_list(d_layers);
      if (rule.empty() && p.rule.tag == RuleTag::none) p.rule.tag = RuleTag::sam_joint_lp;
    }
    if (!d_global.empty()) p.d_global = parse_rational(d_global);
    if (!rule.empty()) p.rule.tag = parse_rule_tag(rule);
    p.validate();
    return p;
  }

  void add_to(CLI::App* cmd, bool with_rule) {
    cmd->add_option("--preset", preset, "Named parameterization");
    cmd->add_option("--depth", depth, "Hidden layers L")->check(CLI::PositiveNumber);
    cmd->add_option("--a", a, "Multiplier exponents, comma separated");
    cmd->add_option("--b", b, "Initialization exponents");
    cmd->add_option("--c", c, "Learning-rate exponents");
    cmd->add_option("--dl", d_layers, "Layerwise perturbation exponents");
    cmd->add_option("--d", d_global, "Global perturbation exponent");
    if (with_rule) cmd->add_option("--rule", rule, "Perturbation rule: " + join(rule_tag_names(), ", "));
  }
};

int cmd_classify(const InlineExponents& in, const std::string& config, bool as_json, const std::string& out) {
  const Parameterization p = config.empty() ? in.build() : parameterization_from_json(read_text_file(config));
  const PhaseReport rep = classify(p);
  if (as_json)
    std::cout << phase_report_to_json(rep) << "\n";
  else
    std::cout << phase_report_table(p, rep);
  if (!out.empty()) {
    const Output o{out};
    o.write("config.json", parameterization_to_json(p) + "\n");
    o.write("phase_report.json", phase_report_to_json(rep) + "\n");
  }
  return kOk;
}

json scaling_json(const PerturbationScaling& s, int L, const std::vector<Rational>& b, const std::vector<Rational>& c) {
  json j;
  j["d_global"] = to_string(s.d_global);
  j["d_layers"] = rationals(s.d_layers);
  j["reduces_to_sgd"] = s.reduces_to_sgd;
  Parameterization p;
  p.L = L;
  p.a.assign(L + 1, Rational(0));
  p.b = b;
  p.c = c;
  p.d_layers = s.d_layers;
  p.d_global = s.d_global;
  p.rule.tag = RuleTag::sam_joint_lp;
  const auto rep = classify(p);
  json sat = json::array();
  for (int l = 0; l <= L; ++l)
    if (rep.norm_constraint_saturated[l]) sat.push_back(l + 1);
  j["saturated_norm_constraints"] = sat;
  json status = json::array();
  for (auto st : rep.perturbation_status) status.push_back(to_string(st));
  j["perturbation_status"] = status;
  return j;
}

int cmd_derive(const InlineExponents& in, const std::string& layers, const std::string& multipliers) {
  json out;
  if (!in.rule.empty()) {
    const RuleTag tag = parse_rule_tag(in.rule);
    const int L = in.depth;
    std::vector<std::string> factors;
    json rows = json::array();
    std::optional<Rational> global;
    for (int l = 1; l <= L + 1; ++l) {
      const auto v = variant_scaling(tag, role_of(l, L));
      global = v.global;
      rows.push_back({{"layer", l},
                      {"role", to_string(role_of(l, L))},
                      {"layer_exponent", v.layer ? json(to_string(*v.layer)) : json(nullptr)},
                      {"factor", power_of_n(v.layer)}});
      factors.push_back(power_of_n(v.layer));
    }
    out["rule"] = to_string(tag);
    out["global_exponent"] = global ? json(to_string(*global)) : json(nullptr);
    out["layers"] = rows;
    out["rho_factors"] = "(" + power_of_n(global) + "; " + join(factors, ", ") + ")";
    out["parameterization"] = json::parse(parameterization_to_json(variant_mupp(tag, L)));
    std::cout << out.dump(2) << "\n";
    return kOk;
  }
  if (!multipliers.empty()) {
    std::vector<Rational> a;
    if (multipliers == "mup-package")
      a = mup_package_multipliers(in.depth);
    else if (multipliers == "a-mupp")
      a = a_mupp(in.depth);
    else
      a = parse_list(multipliers);
    const auto s = mupp_for_multipliers(a);
    out["a"] = rationals(a);
    out["d_global"] = to_string(s.d_global);
    out["d_layers"] = rationals(s.d_layers);
    std::cout << out.dump(2) << "\n";
    return kOk;
  }
  const Parameterization p = in.build();
  if (!layers.empty()) {
    std::set<int> targets;
    for (int t : parse_ints(layers)) targets.insert(t);
    const Rational cg = c_nabla(p);
    bool hidden = false;
    for (int t : targets) hidden = hidden || (t > 1 && t <= p.L);
    if (hidden && p.b.back() < 1)
      throw ConfigError("hidden layers cannot be effectively perturbed while b_{L+1} < 1: the output layer's "
                        "gradient then dominates and any radius that moves hidden features blows up the output");
    out = scaling_json(select_perturbation_scaling(targets, cg, p.L), p.L, p.b, p.c);
  } else {
    const auto s = derive_mpp(p.b, p.c);
    if (!s)
      throw ConfigError("no perturbation scaling perturbs every layer effectively while b_{L+1} < 1; "
                        "pass --layers to target a subset");
    out = scaling_json(*s, p.L, p.b, p.c);
  }
  std::cout << out.dump(2) << "\n";
  return kOk;
}

struct SweepFlags {
  std::string config, preset, rule, widths, out;
  int seeds = 0, jobs = 0;
  double tolerance = 0;
};

int cmd_sweep(const SweepFlags& f) {
  SweepJob job = parse_sweep_job(f.config.empty() ? "{}" : read_text_file(f.config));
  auto override_model = [&](ModelSpec& m) {
    if (!f.preset.empty()) m = [&] {
      ModelSpec n = model_from_preset(f.preset, m.param.L);
      n.d_in = m.d_in;
      n.d_out = m.d_out;
      n.activation = m.activation;
      n.loss = m.loss;
      return n;
    }();
    if (!f.rule.empty()) (m.spectral ? m.spectral_rule : m.param.rule).tag = parse_rule_tag(f.rule);
  };
  override_model(job.sweep.model);
  override_model(job.coupling.model);
  override_model(job.grid.model);
  if (!f.widths.empty()) job.sweep.widths = job.coupling.widths = job.grid.widths = parse_ints(f.widths);
  if (f.seeds > 0) job.sweep.seeds = job.coupling.seeds = job.grid.seeds = f.seeds;
  if (f.jobs > 0) job.sweep.jobs = job.coupling.jobs = job.grid.jobs = f.jobs;
  if (f.tolerance > 0) job.tolerance = f.tolerance;
  if (!f.out.empty()) job.out = f.out;
  if (job.out.empty()) job.out = default_out_dir();
  if (job.experiment == Experiment::width || job.experiment == Experiment::gradnorm) job.sweep.validate();

  const Output o{job.out};
  o.write("config.json", to_json(job));

  switch (job.experiment) {
    case Experiment::width:
    case Experiment::gradnorm: {
      SweepConfig cfg = job.sweep;
      if (job.experiment == Experiment::gradnorm) cfg.statistics = {dominant_gap_statistic(cfg.model.analysis_param())};
      const auto records = run_width_sweep(cfg);
      o.write("records.csv", sweep_csv(records));
      const auto fits = fit_sweep(records);
      const auto rows = verdict_report(fits, predict_exponents(cfg.model.analysis_param()), job.tolerance);
      o.write("verdict.json", verdict_json(rows));
      int diverged = 0;
      for (const auto& fit : fits) diverged += fit.diverged;
      for (const auto& r : rows) {
        std::cout << (r.unpredicted ? "  --  " : r.pass ? "  ok  " : "  BAD ") << r.statistic << " slope " << r.slope;
        if (r.predicted) std::cout << " predicted " << to_string(*r.predicted);
        if (!r.error.empty()) std::cout << " (" << r.error << ")";
        std::cout << "\n";
      }
      std::cout << "wrote " << o.dir << "/records.csv and verdict.json\n";
      if (!verdict_pass(rows)) return kFailed;
      return diverged > 0 ? kDiverged : kOk;
    }
    case Experiment::coupling: {
      const auto rows = coupling_experiment(job.coupling);
      o.write("coupling.csv", coupling_csv(rows));
      std::cout << coupling_csv(rows);
      for (const auto& r : rows)
        if (r.diverged > 0) return kDiverged;
      return kOk;
    }
    case Experiment::hp_grid: {
      const auto res = hp_grid(job.grid);
      o.write("hp_grid.csv", hp_grid_csv(res));
      for (const auto& opt : res.optima)
        std::cout << "width " << opt.width << " seed " << opt.seed << ": best eta index " << opt.eta_index
                  << ", rho index " << opt.rho_index << ", test accuracy " << opt.test_acc << "\n";
      std::cout << "wrote " << o.dir << "/hp_grid.csv\n";
      return kOk;
    }
  }
  return kOk;
}

int cmd_train(const std::string& config, const std::string& preset_name, std::string out) {
  TrainJob job = parse_train_job(config.empty() ? "{}" : read_text_file(config));
  if (!preset_name.empty()) {
    ModelSpec m = model_from_preset(preset_name, job.model.param.L);
    m.d_in = job.model.d_in;
    m.d_out = job.model.d_out;
    m.activation = job.model.activation;
    m.loss = job.model.loss;
    job.model = m;
  }
  if (!out.empty()) job.out = out;
  if (job.out.empty()) job.out = default_out_dir();
  const Output o{job.out};
  o.write("config.json", to_json(job));

  SyntheticSpec spec = job.data;
  spec.classes = job.model.d_out;
  spec.d_in = job.model.d_in;
  const Dataset train = synthetic_gaussians(spec, Split::train);
  const Dataset test = synthetic_gaussians(spec, Split::test);
  NetworkState net = job.model.init(job.width, job.seed);
  const OptimizerConfig opt = job.model.optimizer(job.width, job.eta, job.rho);
  OptimizerState state;

  std::vector<int> eval_rows(std::min(job.test_points, test.count()));
  for (std::size_t i = 0; i < eval_rows.size(); ++i) eval_rows[i] = static_cast<int>(i);
  const Eigen::MatrixXd test_x = test.batch_inputs(eval_rows);
  const auto test_y = test.batch_labels(eval_rows);

  std::ostringstream log;
  log << "step,loss\n";
  bool diverged = false;
  for (int t = 1; t <= job.steps; ++t) {
    std::vector<int> rows(job.batch);
    for (int j = 0; j < job.batch; ++j) rows[j] = ((t - 1) * job.batch + j) % train.count();
    const Batch b{train.batch_inputs(rows), train.batch_labels(rows)};
    const StepResult r = sam_step(net, state, opt, b, b);
    log << t << ',' << r.loss << '\n';
    if (r.diverged) {
      diverged = true;
      break;
    }
  }
  o.write("train_log.csv", log.str());
  if (diverged) {
    std::cout << "training diverged; see " << o.dir << "/train_log.csv\n";
    return kDiverged;
  }
  save_checkpoint(net, (std::filesystem::path(o.dir) / "checkpoint.bin").string());
  const Eigen::MatrixXd f = forward(net, test_x).f;
  int hit = 0;
  for (Eigen::Index j = 0; j < f.cols(); ++j) {
    Eigen::Index arg;
    f.col(j).maxCoeff(&arg);
    hit += static_cast<int>(arg) == test_y[j];
  }
  std::cout << "test accuracy " << static_cast<double>(hit) / f.cols() << " over " << f.cols() << " points\n"
            << "wrote " << o.dir << "/train_log.csv and checkpoint.bin\n";
  return kOk;
}

int cmd_phase(const std::string& b_last, const std::string& step, std::string out) {
  if (out.empty()) out = default_out_dir();
  const Output o{out};
  const auto grid = phase_grid(parse_rational(b_last), parse_rational(step));
  o.write("config.json", json{{"b_last", b_last}, {"step", step}}.dump(2) + "\n");
  o.write("phase.csv", phase_grid_csv(grid));
  std::map<std::string, int> counts;
  for (const auto& p : grid) ++counts[to_string(p.phase)];
  for (const auto& [name, n] : counts) std::cout << name << ": " << n << " points\n";
  std::cout << "wrote " << o.dir << "/phase.csv\n";
  return kOk;
}

int cmd_equiv(const std::string& config, const std::string& preset_name, const std::string& theta,
              const std::string& C, std::string out) {
  EquivJob job = parse_equiv_job(config.empty() ? "{}" : read_text_file(config));
  if (!preset_name.empty()) {
    job.preset = preset_name;
    job.param = preset(preset_name, job.param.L);
  }
  if (!theta.empty()) job.theta = parse_rational(theta);
  if (!C.empty()) job.C = parse_rational(C);
  if (!out.empty()) job.out = out;
  if (job.out.empty()) job.out = default_out_dir();
  const Output o{job.out};
  o.write("config.json", to_json(job));
  const double dev = equivalence_deviation(job.param, job.transformed(), job.cfg);
  o.write("equivalence.json", json{{"max_relative_deviation", dev}, {"threshold", 1e-6}, {"pass", dev <= 1e-6}}.dump(2) + "\n");
  std::cout << "max relative deviation " << dev << (dev <= 1e-6 ? " (equivalent)\n" : " (NOT equivalent)\n");
  return dev <= 1e-6 ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Width-scaling analysis and experiments for sharpness-aware minimization."};
  app.footer("Presets: " + join(preset_names(), ", ") + "\nRules: " + join(rule_tag_names(), ", ") +
             "\nOutput directory defaults to $MUPP_OUT_DIR, else ./mupp_out.\n"
             "Exit codes: 0 ok, 2 config error, 3 check failed, 4 divergence only.");
  app.require_subcommand(1);

  InlineExponents cls_in;
  std::string cls_config, cls_out;
  bool cls_json = false;
  auto* cls = app.add_subcommand("classify", "Stability, feature learning and perturbation regime of a parameterization");
  cls_in.add_to(cls, true);
  cls->add_option("--config", cls_config, "Parameterization JSON");
  cls->add_flag("--json", cls_json, "Print JSON instead of the table");
  cls->add_option("--out", cls_out, "Also write the report here");

  InlineExponents der_in;
  std::string der_layers, der_mult;
  auto* der = app.add_subcommand("derive", "Perturbation exponents that make the chosen layers effective");
  der_in.add_to(der, true);
  der->add_option("--layers", der_layers, "Target layers (1-based, comma separated)");
  der->add_option("--multipliers", der_mult, "mup-package, a-mupp or comma-separated a_l");

  SweepFlags sw;
  auto* swc = app.add_subcommand("sweep", "Width sweep, gradient-norm, coupling or hyperparameter-grid experiment");
  swc->add_option("--config", sw.config, "Sweep config JSON");
  swc->add_option("--preset", sw.preset, "Preset, overrides the config");
  swc->add_option("--rule", sw.rule, "Perturbation rule, overrides the config");
  swc->add_option("--widths", sw.widths, "Comma-separated widths");
  swc->add_option("--seeds", sw.seeds, "Seed count")->check(CLI::PositiveNumber);
  swc->add_option("--jobs", sw.jobs, "Worker threads")->check(CLI::PositiveNumber);
  swc->add_option("--tolerance", sw.tolerance, "Slope tolerance for verdicts")->check(CLI::PositiveNumber);
  swc->add_option("--out", sw.out, "Output directory");

  std::string tr_config, tr_preset, tr_out;
  auto* trc = app.add_subcommand("train", "Train one network and write its loss log and checkpoint");
  trc->add_option("--config", tr_config, "Train config JSON");
  trc->add_option("--preset", tr_preset, "Preset, overrides the config");
  trc->add_option("--out", tr_out, "Output directory");

  std::string ph_b = "1", ph_step = "1/4", ph_out;
  auto* phc = app.add_subcommand("phase-diagram", "Regime of each (r̃, d+d_{L+1}) grid point");
  phc->add_option("--b-last", ph_b, "Output-layer initialization exponent")->capture_default_str();
  phc->add_option("--step", ph_step, "Grid spacing")->capture_default_str();
  phc->add_option("--out", ph_out, "Output directory");

  std::string eq_config, eq_preset, eq_theta, eq_C, eq_out;
  auto* eqc = app.add_subcommand("equiv", "Train a parameterization and its transform side by side");
  eqc->add_option("--config", eq_config, "Equivalence config JSON");
  eqc->add_option("--preset", eq_preset, "Preset, overrides the config");
  eqc->add_option("--theta", eq_theta, "Joint shift θ");
  eqc->add_option("--C", eq_C, "Perturbation shift C");
  eqc->add_option("--out", eq_out, "Output directory");

  AcceptanceOptions ver;
  std::string ver_only;
  auto* vc = app.add_subcommand("verify", "Run the acceptance suite");
  vc->add_flag("--strict", ver.strict, "Let the soft hyperparameter-grid criterion gate");
  vc->add_option("--only", ver_only, "Comma-separated criterion numbers");
  vc->add_option("--jobs", ver.jobs, "Worker threads")->check(CLI::PositiveNumber);
  vc->add_option("--out", ver.out_dir, "Write sweep artifacts here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (cls->parsed()) return cmd_classify(cls_in, cls_config, cls_json, cls_out);
    if (der->parsed()) return cmd_derive(der_in, der_layers, der_mult);
    if (swc->parsed()) return cmd_sweep(sw);
    if (trc->parsed()) return cmd_train(tr_config, tr_preset, tr_out);
    if (phc->parsed()) return cmd_phase(ph_b, ph_step, ph_out);
    if (eqc->parsed()) return cmd_equiv(eq_config, eq_preset, eq_theta, eq_C, eq_out);
    if (vc->parsed()) {
      for (int id : parse_ints(ver_only)) ver.only.insert(id);
      const auto results = run_acceptance(ver, std::cout);
      return acceptance_exit_code(results);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
