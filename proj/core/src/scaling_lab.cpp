#include "mupp/scaling_lab.hpp"

#include "json_internal.hpp"
#include "mupp/parallel.hpp"
#include "mupp/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace mupp {

namespace {

constexpr double kDivergenceBound = 1e9;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string layer_key(const char* name, int l) { return std::string(name) + "/" + std::to_string(l); }

std::vector<int> dims_for(const ModelSpec& m, int width) {
  std::vector<int> dims{m.d_in};
  for (int l = 0; l < m.depth(); ++l) dims.push_back(width);
  dims.push_back(m.d_out);
  return dims;
}

SyntheticSpec data_for(const ModelSpec& m, SyntheticSpec s) {
  s.classes = m.d_out;
  s.d_in = m.d_in;
  return s;
}

std::vector<int> batch_rows(std::uint64_t seed, int step, int size, int count) {
  const CounterRng rng(seed, stream_id(StreamDomain::batch_order, 0));
  std::vector<int> rows(size);
  for (int j = 0; j < size; ++j)
    rows[j] = static_cast<int>(rng.bits(static_cast<std::uint64_t>(step) * size + j) % count);
  return rows;
}

Batch make_batch(const Dataset& d, const std::vector<int>& rows) {
  return Batch{d.batch_inputs(rows), d.batch_labels(rows)};
}

std::vector<int> first_rows(const Dataset& d, int k) {
  std::vector<int> rows(std::min(k, d.count()));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

bool sum_normalizer(const PerturbationRule& r) {
  return r.tag == RuleTag::asam_elementwise || r.tag == RuleTag::asam_layerwise;
}

/// Relative size of everything in ‖v‖ except layer `keep`.
double residual(const StepTelemetry& t, std::size_t keep, bool sum_form) {
  if (t.v_norm <= 0) return 0;
  const double c = t.v_contrib[keep];
  if (sum_form) return std::max(0.0, t.v_norm - c) / t.v_norm;
  return std::sqrt(std::max(0.0, t.v_norm * t.v_norm - c * c)) / t.v_norm;
}

std::map<std::string, double> step_statistics(const StepTelemetry& t, const StepResult& r, bool joint,
                                              bool sum_form) {
  std::map<std::string, double> s;
  const int layers = static_cast<int>(t.eps_fro.size());
  for (std::size_t l = 0; l < t.dx_perturb.size(); ++l) s[layer_key("dx_perturb", l + 1)] = t.dx_perturb[l];
  for (std::size_t l = 0; l < t.dx_update.size(); ++l) s[layer_key("dx_update", l + 1)] = t.dx_update[l];
  for (int l = 0; l < layers; ++l) s[layer_key("eps_fro", l + 1)] = t.eps_fro[l];
  for (std::size_t l = 0; l < t.eps_spec.size(); ++l) {
    s[layer_key("eps_spec", l + 1)] = t.eps_spec[l];
    s[layer_key("w_spec", l + 1)] = t.w_spec[l];
    s[layer_key("eps_spec_ratio", l + 1)] = t.w_spec[l] > 0 ? t.eps_spec[l] / t.w_spec[l] : 0.0;
  }
  for (std::size_t l = 0; l < t.dw_spec.size(); ++l) s[layer_key("dw_spec", l + 1)] = t.dw_spec[l];
  s["df_perturb"] = t.df_perturb;
  s["f_abs"] = t.f;
  s["chi"] = t.chi;
  s["loss"] = r.loss;
  if (joint && t.v_norm > 0) {
    s["vnorm"] = t.v_norm;
    for (int l = 0; l < layers; ++l) s[layer_key("vnorm_contrib", l + 1)] = t.v_contrib[l];
    s["gap_residual_last"] = residual(t, layers - 1, sum_form);
    s["gap_residual_first"] = residual(t, 0, sum_form);
    s["gap_lastlayer_abs"] = t.gap_lastlayer_abs;
    s["gap_diff_last"] = std::abs(t.v_norm - t.v_contrib.back()) / t.v_norm;
    s["gap_diff_first"] = std::abs(t.v_norm - t.v_contrib.front()) / t.v_norm;
  }
  return s;
}

bool out_of_bounds(double v) { return !std::isfinite(v) || std::abs(v) > kDivergenceBound; }

std::vector<SweepRecord> run_cell(const SweepConfig& cfg, int width, std::uint64_t seed, const Dataset& train,
                                  const Dataset& test, const std::map<std::string, Rational>& preds) {
  const ModelSpec& m = cfg.model;
  const std::set<std::string> wanted(cfg.statistics.begin(), cfg.statistics.end());
  auto keep = [&](const std::string& name) {
    if (!preds.count(name) && !is_unpredicted_telemetry(name)) return false;
    return wanted.empty() || wanted.count(name) > 0;
  };
  const PerturbationRule rule = m.analysis_param().rule;
  const bool joint = preds.count("vnorm") > 0;

  std::vector<SweepRecord> out;
  auto emit = [&](const std::string& range, const std::string& name, double value, bool diverged) {
    SweepRecord r;
    r.run_id = "w" + std::to_string(width) + "-s" + std::to_string(seed);
    r.width = width;
    r.seed = seed;
    r.step_range = range;
    r.statistic = name;
    r.value = value;
    r.rule = m.rule_name();
    r.preset = m.preset;
    r.eta = cfg.eta;
    r.rho = cfg.rho;
    r.diverged = diverged;
    out.push_back(std::move(r));
  };

  NetworkState net = m.init(width, seed);
  const Eigen::MatrixXd probe = test.batch_inputs(first_rows(test, cfg.probe_size));
  const PassCache probe_init = forward(net, probe);
  for (int l = 1; l <= m.depth(); ++l) {
    const std::string name = layer_key("h_init", l);
    if (keep(name)) emit("0", name, coordinate_scale(probe_init.h[l - 1]), false);
  }
  if (cfg.steps == 0) return out;

  const bool first_only = cfg.step_range == "1";
  const int steps = first_only ? 1 : cfg.steps;
  const OptimizerConfig opt = m.optimizer(width, cfg.eta, cfg.rho);
  OptimizerState state;
  std::map<std::string, std::vector<double>> series;
  bool diverged = false;
  double last_loss = 0;

  for (int t = 1; t <= steps && !diverged; ++t) {
    const bool record = first_only || (t >= 2 && (t % cfg.record_every == 0 || t == steps));
    const auto rows = batch_rows(seed, t, cfg.descent_batch, train.count());
    const Batch descent = make_batch(train, rows);
    const bool shared = cfg.ascent_batch == cfg.descent_batch;
    const Batch ascent =
        shared ? Batch{} : make_batch(train, std::vector<int>(rows.begin(), rows.begin() + cfg.ascent_batch));
    TelemetryRequest req;
    if (record) {
      req.level = cfg.full_telemetry ? TelemetryLevel::full : TelemetryLevel::basic;
      req.probe = &probe;
      req.probe_init = &probe_init;
    }
    const StepResult res = sam_step(net, state, opt, shared ? descent : ascent, descent, req);
    last_loss = res.loss;
    if (res.diverged) {
      diverged = true;
      break;
    }
    if (!record) continue;
    for (const auto& [name, v] : step_statistics(res.telemetry, res, joint, sum_normalizer(rule))) {
      if (!keep(name)) continue;
      // Telemetry precedes the update, so step 1 has not moved the features yet.
      if (first_only && name.rfind("dx_update", 0) == 0) continue;
      if (out_of_bounds(v)) diverged = true;
      series[name].push_back(v);
    }
  }

  const std::string range = first_only ? "1" : "2.." + std::to_string(steps);
  for (const auto& [name, values] : series) emit(range, name, median(values), diverged);
  if (diverged && series.empty()) emit(range, "loss", last_loss, true);
  return out;
}

}  // namespace

std::string ModelSpec::rule_name() const { return to_string(spectral ? spectral_rule.tag : param.rule.tag); }

Parameterization ModelSpec::analysis_param() const {
  if (!spectral) return param;
  Parameterization p = mupp::preset("mup", param.L);
  const int L = param.L;
  p.rule = spectral_rule;
  p.d_global = 0;
  p.d_layers.assign(L + 1, Rational(0));
  p.d_layers.front() = Rational(-1);
  p.d_layers.back() = Rational(1);
  if (spectral_rule.tag == RuleTag::sam_layerwise_norm) {
    p.d_layers.front() = -half();
    p.d_layers.back() = half();
  } else {
    p.rule.d_tilde.assign(L + 1, Rational(0));
    p.rule.d_tilde.front() = -half();
    p.rule.d_tilde.back() = half();
    if (spectral_rule.tag == RuleTag::sam_joint_lp) p.rule.tag = RuleTag::sam_decoupled;
  }
  return p;
}

NetworkState ModelSpec::init(int width, std::uint64_t seed) const {
  const NetShape shape{param.L, d_in, width, d_out};
  InitOptions opts;
  opts.zero_output = zero_output;
  return spectral ? init_network_spectral(shape, activation, seed, opts)
                  : init_network(param, shape, activation, seed, opts);
}

OptimizerConfig ModelSpec::optimizer(int width, double eta, double rho) const {
  return spectral ? optimizer_spectral(spectral_rule, dims_for(*this, width), eta, rho, loss)
                  : optimizer_bcd(param, width, eta, rho, loss);
}

ModelSpec model_from_preset(const std::string& name, int L) {
  ModelSpec m;
  m.preset = name;
  m.param = preset(name, L);
  return m;
}

void SweepConfig::validate() const {
  if (widths.size() < 3) throw std::invalid_argument("a sweep needs at least 3 widths");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw std::invalid_argument("widths must be positive");
    if (i > 0 && widths[i] <= widths[i - 1]) throw std::invalid_argument("widths must be increasing");
  }
  if (seeds < 1) throw std::invalid_argument("seeds must be at least 1");
  if (steps < 0) throw std::invalid_argument("steps must be non-negative");
  if (ascent_batch < 1 || descent_batch < 1 || ascent_batch > descent_batch)
    throw std::invalid_argument("need 1 <= ascent_batch <= descent_batch");
  if (probe_size < 1) throw std::invalid_argument("probe_size must be at least 1");
  if (record_every < 1) throw std::invalid_argument("record_every must be at least 1");
  if (step_range != "1" && step_range != "2..T") throw std::invalid_argument("step_range must be \"1\" or \"2..T\"");
  if (eta < 0 || rho < 0) throw std::invalid_argument("eta and rho must be non-negative");
  model.param.validate();
}

bool is_unpredicted_telemetry(const std::string& statistic) {
  static const std::set<std::string> names{"f_abs", "chi", "loss", "gap_lastlayer_abs", "gap_diff_last",
                                           "gap_diff_first"};
  return names.count(statistic) > 0 || statistic.rfind("dw_spec/", 0) == 0;
}

std::vector<SweepRecord> run_width_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const auto preds = predict_exponents(cfg.model.analysis_param());
  const SyntheticSpec spec = data_for(cfg.model, cfg.data);
  const Dataset train = synthetic_gaussians(spec, Split::train);
  const Dataset test = synthetic_gaussians(spec, Split::test);

  const int cells = static_cast<int>(cfg.widths.size()) * cfg.seeds;
  std::vector<std::vector<SweepRecord>> results(cells);
  parallel_for(cells, cfg.jobs, [&](int i) {
    const int w = cfg.widths[i / cfg.seeds];
    const std::uint64_t seed = cfg.seed_base + static_cast<std::uint64_t>(i % cfg.seeds);
    results[i] = run_cell(cfg, w, seed, train, test, preds);
  });

  std::vector<SweepRecord> all;
  for (auto& r : results) all.insert(all.end(), r.begin(), r.end());
  std::stable_sort(all.begin(), all.end(), [](const SweepRecord& x, const SweepRecord& y) {
    return std::tie(x.width, x.seed, x.statistic) < std::tie(y.width, y.seed, y.statistic);
  });
  return all;
}

std::string sweep_csv(const std::vector<SweepRecord>& records) {
  std::ostringstream os;
  os << "run_id,width,seed,step_range,statistic,value,rule,preset,eta,rho,diverged\n";
  for (const auto& r : records)
    os << r.run_id << ',' << r.width << ',' << r.seed << ',' << r.step_range << ',' << r.statistic << ','
       << fmt(r.value) << ',' << r.rule << ',' << r.preset << ',' << fmt(r.eta) << ',' << fmt(r.rho) << ','
       << (r.diverged ? 1 : 0) << '\n';
  return os.str();
}

ExponentFit fit_exponent(const std::vector<std::pair<double, double>>& points, const std::string& statistic) {
  ExponentFit fit;
  fit.statistic = statistic;
  std::vector<double> xs, ys;
  std::set<double> distinct;
  for (const auto& [n, v] : points) {
    if (!(n > 0) || !std::isfinite(v) || v <= 0) {
      ++fit.excluded;
      continue;
    }
    xs.push_back(std::log2(n));
    ys.push_back(std::log2(v));
    distinct.insert(n);
  }
  if (distinct.size() < 3)
    throw std::invalid_argument("fit of '" + statistic + "' needs positive values at 3 or more widths");
  const double k = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / k;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / k;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double ss_res = std::max(0.0, syy - fit.slope * sxy);
  fit.r_squared = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  fit.points = static_cast<int>(xs.size());
  return fit;
}

std::vector<ExponentFit> fit_sweep(const std::vector<SweepRecord>& records) {
  struct Acc {
    std::map<int, std::pair<double, int>> by_width;  // sum, count
    int diverged = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : records) {
    auto& a = acc[r.statistic];
    if (r.diverged) {
      ++a.diverged;
      continue;
    }
    auto& [sum, count] = a.by_width[r.width];
    sum += r.value;
    ++count;
  }
  std::vector<ExponentFit> fits;
  for (const auto& [name, a] : acc) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& [w, sc] : a.by_width) pts.emplace_back(w, sc.first / sc.second);
    ExponentFit f;
    try {
      f = fit_exponent(pts, name);
    } catch (const std::invalid_argument&) {
      f.statistic = name;
      f.slope = f.intercept = f.r_squared = std::numeric_limits<double>::quiet_NaN();
      f.points = 0;
      f.excluded = static_cast<int>(pts.size());
    }
    f.diverged = a.diverged;
    fits.push_back(f);
  }
  return fits;
}

std::optional<ExponentFit> find_fit(const std::vector<ExponentFit>& fits, const std::string& statistic) {
  for (const auto& f : fits)
    if (f.statistic == statistic) return f;
  return std::nullopt;
}

std::vector<VerdictRow> verdict_report(const std::vector<ExponentFit>& fits,
                                       const std::map<std::string, Rational>& predictions, double tolerance) {
  std::vector<VerdictRow> rows;
  for (const auto& f : fits) {
    VerdictRow row;
    row.statistic = f.statistic;
    row.slope = f.slope;
    row.r2 = f.r_squared;
    row.tolerance = tolerance;
    const auto it = predictions.find(f.statistic);
    if (it == predictions.end()) {
      if (is_unpredicted_telemetry(f.statistic))
        row.unpredicted = true;
      else
        row.error = "no prediction for statistic '" + f.statistic + "'";
    } else {
      row.predicted = it->second;
      if (f.points < 3) {
        row.error = "fewer than 3 widths with positive values";
      } else if (it->second == 0) {
        row.pass = std::abs(f.slope) <= 0.15;
      } else {
        row.pass = std::abs(f.slope - to_double(it->second)) <= tolerance && f.r_squared >= 0.9;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

std::string verdict_json(const std::vector<VerdictRow>& rows) {
  using detail::json;
  json out = json::array();
  for (const auto& r : rows) {
    json j{{"statistic", r.statistic}, {"tolerance", r.tolerance}};
    j["slope"] = std::isfinite(r.slope) ? json(r.slope) : json(nullptr);
    j["r2"] = std::isfinite(r.r2) ? json(r.r2) : json(nullptr);
    j["predicted"] = r.predicted ? json(to_string(*r.predicted)) : json(nullptr);
    if (r.unpredicted) {
      j["pass"] = nullptr;
      j["label"] = "unpredicted telemetry";
    } else {
      j["pass"] = r.pass;
    }
    if (!r.error.empty()) j["error"] = r.error;
    out.push_back(j);
  }
  return out.dump(2) + "\n";
}

bool verdict_pass(const std::vector<VerdictRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const VerdictRow& r) { return r.unpredicted || r.pass; });
}

std::string dominant_gap_statistic(const Parameterization& p) {
  const auto preds = predict_exponents(p);
  const auto v = preds.find("vnorm");
  if (v == preds.end()) throw std::invalid_argument("rule has no joint gradient norm");
  const auto last = preds.find(layer_key("vnorm_contrib", p.L + 1));
  return last != preds.end() && last->second == v->second ? "gap_residual_last" : "gap_residual_first";
}

ExponentFit gradnorm_dominance(const SweepConfig& cfg) {
  SweepConfig c = cfg;
  const std::string stat = dominant_gap_statistic(cfg.model.analysis_param());
  c.statistics = {stat};
  const auto fit = find_fit(fit_sweep(run_width_sweep(c)), stat);
  if (!fit) throw std::runtime_error("sweep produced no '" + stat + "' values");
  return *fit;
}

std::vector<CouplingRow> coupling_experiment(const CouplingConfig& cfg) {
  const SyntheticSpec spec = data_for(cfg.model, cfg.data);
  const Dataset train = synthetic_gaussians(spec, Split::train);
  const Dataset test = synthetic_gaussians(spec, Split::test);
  const Eigen::MatrixXd held_out = test.batch_inputs(first_rows(test, cfg.test_points));

  ModelSpec twin = cfg.model;
  (twin.spectral ? twin.spectral_rule : twin.param.rule).tag = RuleTag::last_layer_only;

  struct Cell {
    double d_ll = 0, d_sgd = 0;
    bool diverged = false;
  };
  const int cells = static_cast<int>(cfg.widths.size()) * cfg.seeds;
  std::vector<Cell> results(cells);
  parallel_for(cells, cfg.jobs, [&](int i) {
    const int w = cfg.widths[i / cfg.seeds];
    const std::uint64_t seed = cfg.seed_base + static_cast<std::uint64_t>(i % cfg.seeds);
    NetworkState sam = cfg.model.init(w, seed), ll = sam, sgd = sam;
    const OptimizerConfig o_sam = cfg.model.optimizer(w, cfg.eta, cfg.rho);
    const OptimizerConfig o_ll = twin.optimizer(w, cfg.eta, cfg.rho);
    const OptimizerConfig o_sgd = cfg.model.optimizer(w, cfg.eta, 0.0);
    OptimizerState s1, s2, s3;
    Cell& cell = results[i];
    for (int t = 1; t <= cfg.steps && !cell.diverged; ++t) {
      const Batch b = make_batch(train, batch_rows(seed, t, cfg.batch, train.count()));
      cell.diverged = sam_step(sam, s1, o_sam, b, b).diverged || sam_step(ll, s2, o_ll, b, b).diverged ||
                      sgd_step(sgd, s3, o_sgd, b).diverged;
    }
    if (cell.diverged) return;
    const Eigen::MatrixXd f = forward(sam, held_out).f;
    const Eigen::MatrixXd f_ll = forward(ll, held_out).f;
    const Eigen::MatrixXd f_sgd = forward(sgd, held_out).f;
    cell.d_ll = (f - f_ll).colwise().norm().mean();
    cell.d_sgd = (f - f_sgd).colwise().norm().mean();
    cell.diverged = out_of_bounds(cell.d_ll) || out_of_bounds(cell.d_sgd);
  });

  std::vector<CouplingRow> rows;
  for (std::size_t wi = 0; wi < cfg.widths.size(); ++wi) {
    CouplingRow row;
    row.width = cfg.widths[wi];
    for (int s = 0; s < cfg.seeds; ++s) {
      const Cell& c = results[wi * cfg.seeds + s];
      if (c.diverged) {
        ++row.diverged;
        continue;
      }
      row.d_last_layer += c.d_ll;
      row.d_sgd += c.d_sgd;
      ++row.seeds;
    }
    if (row.seeds > 0) {
      row.d_last_layer /= row.seeds;
      row.d_sgd /= row.seeds;
    } else {
      row.d_last_layer = row.d_sgd = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(row);
  }
  return rows;
}

std::string coupling_csv(const std::vector<CouplingRow>& rows) {
  std::ostringstream os;
  os << "width,d_sam_vs_last_layer,d_sam_vs_sgd,seeds,diverged\n";
  for (const auto& r : rows)
    os << r.width << ',' << fmt(r.d_last_layer) << ',' << fmt(r.d_sgd) << ',' << r.seeds << ',' << r.diverged
       << '\n';
  return os.str();
}

double equivalence_deviation(const Parameterization& p, const Parameterization& q, const EquivalenceConfig& cfg) {
  if (p.L != q.L) throw std::invalid_argument("parameterizations differ in depth");
  SyntheticSpec spec = cfg.data;
  spec.classes = cfg.d_out;
  spec.d_in = cfg.d_in;
  const Dataset train = synthetic_gaussians(spec, Split::train);
  const Dataset test = synthetic_gaussians(spec, Split::test);
  const Eigen::MatrixXd probe = test.batch_inputs(first_rows(test, cfg.test_points));

  const NetShape shape{p.L, cfg.d_in, cfg.width, cfg.d_out};
  NetworkState a = init_network(p, shape, cfg.activation, cfg.seed);
  NetworkState b = init_network(q, shape, cfg.activation, cfg.seed);
  const OptimizerConfig oa = optimizer_bcd(p, cfg.width, cfg.eta, cfg.rho, cfg.loss);
  const OptimizerConfig ob = optimizer_bcd(q, cfg.width, cfg.eta, cfg.rho, cfg.loss);
  OptimizerState sa, sb;

  auto deviation = [&] {
    const Eigen::MatrixXd fa = forward(a, probe).f;
    const Eigen::MatrixXd fb = forward(b, probe).f;
    double worst = 0;
    for (Eigen::Index j = 0; j < fa.cols(); ++j) {
      const double d = (fa.col(j) - fb.col(j)).norm() / (fa.col(j).norm() + 1e-12);
      worst = std::max(worst, std::isfinite(d) ? d : std::numeric_limits<double>::infinity());
    }
    return worst;
  };

  double worst = deviation();
  for (int t = 1; t <= cfg.steps; ++t) {
    const Batch batch = make_batch(train, batch_rows(cfg.seed, t, cfg.batch, train.count()));
    const bool da = sam_step(a, sa, oa, batch, batch).diverged;
    const bool db = sam_step(b, sb, ob, batch, batch).diverged;
    if (da || db) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, deviation());
  }
  return worst;
}

double equivalence_check(const Parameterization& p, const Rational& theta, const Rational& C,
                         const EquivalenceConfig& cfg) {
  return equivalence_deviation(p, equivalence_transform(p, theta, C), cfg);
}

HpGridResult hp_grid(const HpGridConfig& cfg) {
  if (cfg.etas.empty() || cfg.rhos.empty() || cfg.etas.size() > 8 || cfg.rhos.size() > 8)
    throw std::invalid_argument("eta and rho grids need 1 to 8 points");
  const SyntheticSpec spec = data_for(cfg.model, cfg.data);
  const Dataset train = synthetic_gaussians(spec, Split::train);
  const Dataset test = synthetic_gaussians(spec, Split::test);
  const auto eval_rows = first_rows(test, cfg.test_points);
  const Eigen::MatrixXd test_x = test.batch_inputs(eval_rows);
  const auto test_y = test.batch_labels(eval_rows);
  const auto train_rows = first_rows(train, cfg.test_points);
  const Eigen::MatrixXd train_x = train.batch_inputs(train_rows);
  const auto train_y = train.batch_labels(train_rows);

  const int ne = static_cast<int>(cfg.etas.size()), nr = static_cast<int>(cfg.rhos.size());
  const int per_width = cfg.seeds * ne * nr;
  const int cells = static_cast<int>(cfg.widths.size()) * per_width;
  HpGridResult res;
  res.cells.resize(cells);

  auto accuracy = [](const Eigen::MatrixXd& f, const std::vector<int>& y) {
    int hit = 0;
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
      Eigen::Index arg;
      f.col(j).maxCoeff(&arg);
      hit += static_cast<int>(arg) == y[j];
    }
    return static_cast<double>(hit) / static_cast<double>(f.cols());
  };

  parallel_for(cells, cfg.jobs, [&](int i) {
    HpCell& c = res.cells[i];
    c.width = cfg.widths[i / per_width];
    const int rem = i % per_width;
    c.seed = cfg.seed_base + static_cast<std::uint64_t>(rem / (ne * nr));
    c.eta_index = (rem / nr) % ne;
    c.rho_index = rem % nr;
    c.eta = cfg.etas[c.eta_index];
    c.rho = cfg.rhos[c.rho_index];
    NetworkState net = cfg.model.init(c.width, c.seed);
    const OptimizerConfig opt = cfg.model.optimizer(c.width, c.eta, c.rho);
    OptimizerState state;
    for (int t = 1; t <= cfg.steps; ++t) {
      const Batch b = make_batch(train, batch_rows(c.seed, t, cfg.batch, train.count()));
      const StepResult r = sam_step(net, state, opt, b, b);
      c.final_loss = r.loss;
      if (r.diverged || out_of_bounds(r.loss)) {
        c.diverged = c.unstable = true;
        return;
      }
    }
    const Eigen::MatrixXd ft = forward(net, test_x).f;
    const Eigen::MatrixXd fr = forward(net, train_x).f;
    if (!ft.allFinite() || ft.cwiseAbs().maxCoeff() > kDivergenceBound) {
      c.diverged = c.unstable = true;
      return;
    }
    c.test_acc = accuracy(ft, test_y);
    c.train_acc = accuracy(fr, train_y);
    c.unstable = c.test_acc < cfg.unstable_accuracy;
  });

  for (std::size_t wi = 0; wi < cfg.widths.size(); ++wi) {
    for (int s = 0; s < cfg.seeds; ++s) {
      HpOptimum best;
      best.width = cfg.widths[wi];
      best.seed = cfg.seed_base + static_cast<std::uint64_t>(s);
      best.test_acc = -1;
      for (int k = 0; k < ne * nr; ++k) {
        const HpCell& c = res.cells[wi * per_width + s * ne * nr + k];
        if (c.diverged || c.test_acc <= best.test_acc) continue;
        best.eta_index = c.eta_index;
        best.rho_index = c.rho_index;
        best.test_acc = c.test_acc;
      }
      if (best.eta_index < 0) best.test_acc = 0;
      res.optima.push_back(best);
    }
  }
  return res;
}

std::string hp_grid_csv(const HpGridResult& res) {
  std::ostringstream os;
  os << "width,seed,eta,rho,train_acc,test_acc,final_loss,diverged,unstable\n";
  for (const auto& c : res.cells)
    os << c.width << ',' << c.seed << ',' << fmt(c.eta) << ',' << fmt(c.rho) << ',' << fmt(c.train_acc) << ','
       << fmt(c.test_acc) << ',' << fmt(c.final_loss) << ',' << (c.diverged ? 1 : 0) << ','
       << (c.unstable ? 1 : 0) << '\n';
  return os.str();
}

std::string phase_grid_csv(const std::vector<PhasePoint>& points) {
  std::ostringstream os;
  os << "r_tilde,last_exp,phase\n";
  for (const auto& p : points) os << to_string(p.r_tilde) << ',' << to_string(p.last_exp) << ',' << to_string(p.phase) << '\n';
  return os.str();
}

}  // namespace mupp
