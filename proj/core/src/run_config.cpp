#include "mupp/run_config.hpp"

#include "json_internal.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace mupp {

namespace {

using detail::json;

const char* const kModelKeys[] = {"preset", "parameterization", "mode", "rule", "depth", "d_in",
                                  "d_out", "activation", "loss", "zero_output"};

template <class T>
T get(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("'") + key + "' has the wrong type");
  }
}

bool is_model_key(const std::string& k) {
  for (const char* m : kModelKeys)
    if (k == m) return true;
  return false;
}

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where,
                bool model_keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (model_keys && is_model_key(it.key())) continue;
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

template <class F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
}

ModelSpec model_from(const json& j) {
  const int L = get<int>(j, "depth", 2);
  ModelSpec m;
  if (j.contains("parameterization")) {
    if (j.contains("preset")) throw ConfigError("give either 'preset' or 'parameterization', not both");
    m.param = detail::parameterization_from(j.at("parameterization"));
    if (j.contains("depth") && m.param.L != L) throw ConfigError("'depth' disagrees with parameterization.L");
  } else {
    m = model_from_preset(get<std::string>(j, "preset", "mupp"), L);
  }
  const std::string mode = get<std::string>(j, "mode", "bcd");
  if (mode == "spectral") {
    m.spectral = true;
    m.spectral_rule.tag = RuleTag::sam_decoupled;
  } else if (mode != "bcd") {
    throw ConfigError("mode must be \"bcd\" or \"spectral\"");
  }
  if (j.contains("rule")) {
    const PerturbationRule r = detail::rule_from(j.at("rule"));
    // Replacing the rule keeps the exponents.
    (m.spectral ? m.spectral_rule : m.param.rule) = r;
  }
  m.d_in = get<int>(j, "d_in", 16);
  m.d_out = get<int>(j, "d_out", 4);
  if (m.d_in < 1 || m.d_out < 2) throw ConfigError("need d_in >= 1 and d_out >= 2");
  m.activation = parse_activation(get<std::string>(j, "activation", "tanh"));
  m.loss = parse_loss(get<std::string>(j, "loss", "cross_entropy"));
  m.zero_output = get<bool>(j, "zero_output", false);
  m.param.validate();
  return m;
}

json model_json(const ModelSpec& m) {
  json j;
  const json pj = detail::parameterization_json(m.param);
  if (!m.preset.empty() && pj == detail::parameterization_json(preset(m.preset, m.param.L)))
    j["preset"] = m.preset;
  else
    j["parameterization"] = pj;
  j["mode"] = m.spectral ? "spectral" : "bcd";
  if (m.spectral) j["rule"] = detail::rule_json(m.spectral_rule);
  j["depth"] = m.param.L;
  j["d_in"] = m.d_in;
  j["d_out"] = m.d_out;
  j["activation"] = to_string(m.activation);
  j["loss"] = to_string(m.loss);
  j["zero_output"] = m.zero_output;
  return j;
}

SyntheticSpec data_from(const json& j, SyntheticSpec s) {
  if (j.is_null()) return s;
  check_keys(j, {"n_per_class", "separation", "seed"}, "data", false);
  s.n_per_class = get<int>(j, "n_per_class", s.n_per_class);
  s.separation = get<double>(j, "separation", s.separation);
  s.seed = get<std::uint64_t>(j, "seed", s.seed);
  if (s.n_per_class < 1) throw ConfigError("data.n_per_class must be positive");
  return s;
}

json data_json(const SyntheticSpec& s) {
  return json{{"n_per_class", s.n_per_class}, {"separation", s.separation}, {"seed", s.seed}};
}

json sub(const json& j, const char* key) { return j.contains(key) ? j.at(key) : json(); }

std::vector<Rational> rationals(const json& j, const char* key) {
  return detail::rationals_from_json(j.at(key), key);
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::width: return "width";
    case Experiment::gradnorm: return "gradnorm";
    case Experiment::coupling: return "coupling";
    case Experiment::hp_grid: return "hp_grid";
  }
  return "?";
}

SweepJob parse_sweep_job(const std::string& text) {
  return guarded([&] {
    const json j = parse(text);
    check_keys(j,
               {"experiment", "widths", "seeds", "seed_base", "steps", "eta", "rho", "etas", "rhos", "data",
                "ascent_batch", "descent_batch", "batch", "probe_size", "record_every", "full_telemetry",
                "step_range", "statistics", "test_points", "unstable_accuracy", "jobs", "tolerance", "out"},
               "sweep config", true);
    SweepJob job;
    const std::string exp = get<std::string>(j, "experiment", "width");
    if (exp == "width") job.experiment = Experiment::width;
    else if (exp == "gradnorm") job.experiment = Experiment::gradnorm;
    else if (exp == "coupling") job.experiment = Experiment::coupling;
    else if (exp == "hp_grid") job.experiment = Experiment::hp_grid;
    else throw ConfigError("experiment must be width, gradnorm, coupling or hp_grid");

    const ModelSpec model = model_from(j);
    const SyntheticSpec data = data_from(sub(j, "data"), SyntheticSpec{});
    job.tolerance = get<double>(j, "tolerance", 0.2);
    job.out = get<std::string>(j, "out", "");

    auto& s = job.sweep;
    s.model = model;
    s.data = data;
    s.widths = get<std::vector<int>>(j, "widths", s.widths);
    s.seeds = get<int>(j, "seeds", s.seeds);
    s.seed_base = get<std::uint64_t>(j, "seed_base", s.seed_base);
    s.steps = get<int>(j, "steps", s.steps);
    s.eta = get<double>(j, "eta", s.eta);
    s.rho = get<double>(j, "rho", s.rho);
    s.ascent_batch = get<int>(j, "ascent_batch", s.ascent_batch);
    s.descent_batch = get<int>(j, "descent_batch", s.descent_batch);
    s.probe_size = get<int>(j, "probe_size", s.probe_size);
    s.record_every = get<int>(j, "record_every", s.record_every);
    s.full_telemetry = get<bool>(j, "full_telemetry", s.full_telemetry);
    s.step_range = get<std::string>(j, "step_range", s.step_range);
    s.statistics = get<std::vector<std::string>>(j, "statistics", s.statistics);
    s.jobs = get<int>(j, "jobs", s.jobs);

    auto& c = job.coupling;
    c.model = model;
    c.data = data;
    c.widths = get<std::vector<int>>(j, "widths", c.widths);
    c.seeds = get<int>(j, "seeds", c.seeds);
    c.seed_base = s.seed_base;
    c.steps = get<int>(j, "steps", c.steps);
    c.eta = get<double>(j, "eta", c.eta);
    c.rho = get<double>(j, "rho", c.rho);
    c.batch = get<int>(j, "batch", c.batch);
    c.test_points = get<int>(j, "test_points", c.test_points);
    c.jobs = s.jobs;

    auto& g = job.grid;
    g.model = model;
    g.data = data;
    g.widths = get<std::vector<int>>(j, "widths", g.widths);
    g.etas = get<std::vector<double>>(j, "etas", g.etas);
    g.rhos = get<std::vector<double>>(j, "rhos", g.rhos);
    g.seeds = get<int>(j, "seeds", g.seeds);
    g.seed_base = s.seed_base;
    g.steps = get<int>(j, "steps", g.steps);
    g.batch = get<int>(j, "batch", g.batch);
    g.test_points = get<int>(j, "test_points", g.test_points);
    g.unstable_accuracy = get<double>(j, "unstable_accuracy", g.unstable_accuracy);
    g.jobs = s.jobs;

    if (job.experiment == Experiment::width || job.experiment == Experiment::gradnorm) s.validate();
    if (job.tolerance <= 0) throw ConfigError("tolerance must be positive");
    if (s.jobs < 1) throw ConfigError("jobs must be at least 1");
    return job;
  });
}

std::string to_json(const SweepJob& job) {
  json j = model_json(job.sweep.model);
  j["experiment"] = to_string(job.experiment);
  j["data"] = data_json(job.sweep.data);
  j["tolerance"] = job.tolerance;
  j["jobs"] = job.sweep.jobs;
  j["seed_base"] = job.sweep.seed_base;
  if (!job.out.empty()) j["out"] = job.out;
  switch (job.experiment) {
    case Experiment::width:
    case Experiment::gradnorm: {
      const auto& s = job.sweep;
      j["widths"] = s.widths;
      j["seeds"] = s.seeds;
      j["steps"] = s.steps;
      j["eta"] = s.eta;
      j["rho"] = s.rho;
      j["ascent_batch"] = s.ascent_batch;
      j["descent_batch"] = s.descent_batch;
      j["probe_size"] = s.probe_size;
      j["record_every"] = s.record_every;
      j["full_telemetry"] = s.full_telemetry;
      j["step_range"] = s.step_range;
      j["statistics"] = s.statistics;
      break;
    }
    case Experiment::coupling: {
      const auto& c = job.coupling;
      j["widths"] = c.widths;
      j["seeds"] = c.seeds;
      j["steps"] = c.steps;
      j["eta"] = c.eta;
      j["rho"] = c.rho;
      j["batch"] = c.batch;
      j["test_points"] = c.test_points;
      break;
    }
    case Experiment::hp_grid: {
      const auto& g = job.grid;
      j["widths"] = g.widths;
      j["etas"] = g.etas;
      j["rhos"] = g.rhos;
      j["seeds"] = g.seeds;
      j["steps"] = g.steps;
      j["batch"] = g.batch;
      j["test_points"] = g.test_points;
      j["unstable_accuracy"] = g.unstable_accuracy;
      break;
    }
  }
  return j.dump(2) + "\n";
}

TrainJob parse_train_job(const std::string& text) {
  return guarded([&] {
    const json j = parse(text);
    check_keys(j, {"width", "seed", "steps", "eta", "rho", "batch", "test_points", "data", "out"}, "train config",
               true);
    TrainJob t;
    t.model = model_from(j);
    t.width = get<int>(j, "width", t.width);
    t.seed = get<std::uint64_t>(j, "seed", t.seed);
    t.steps = get<int>(j, "steps", t.steps);
    t.eta = get<double>(j, "eta", t.eta);
    t.rho = get<double>(j, "rho", t.rho);
    t.batch = get<int>(j, "batch", t.batch);
    t.test_points = get<int>(j, "test_points", t.test_points);
    t.data = data_from(sub(j, "data"), t.data);
    t.out = get<std::string>(j, "out", "");
    if (t.width < 1 || t.steps < 0 || t.batch < 1 || t.test_points < 1)
      throw ConfigError("need width >= 1, steps >= 0, batch >= 1 and test_points >= 1");
    return t;
  });
}

std::string to_json(const TrainJob& t) {
  json j = model_json(t.model);
  j["width"] = t.width;
  j["seed"] = t.seed;
  j["steps"] = t.steps;
  j["eta"] = t.eta;
  j["rho"] = t.rho;
  j["batch"] = t.batch;
  j["test_points"] = t.test_points;
  j["data"] = data_json(t.data);
  if (!t.out.empty()) j["out"] = t.out;
  return j.dump(2) + "\n";
}

Parameterization EquivJob::transformed() const {
  if (compare) return *compare;
  if (!theta_layers.empty()) return equivalence_transform_layerwise(param, theta_layers);
  return equivalence_transform(param, theta, C);
}

EquivJob parse_equiv_job(const std::string& text) {
  return guarded([&] {
    const json j = parse(text);
    check_keys(j,
               {"preset", "parameterization", "rule", "depth", "theta", "C", "theta_layers", "compare", "width",
                "steps", "seed", "d_in", "d_out", "activation", "loss", "eta", "rho", "batch", "test_points",
                "data", "out"},
               "equiv config", false);
    EquivJob e;
    const int L = get<int>(j, "depth", 2);
    if (j.contains("parameterization")) {
      e.param = detail::parameterization_from(j.at("parameterization"));
    } else {
      e.preset = get<std::string>(j, "preset", "mupp");
      e.param = preset(e.preset, L);
    }
    if (j.contains("rule")) e.param.rule = detail::rule_from(j.at("rule"));
    if (j.contains("theta")) e.theta = detail::rational_from_json(j.at("theta"), "theta");
    if (j.contains("C")) e.C = detail::rational_from_json(j.at("C"), "C");
    if (j.contains("theta_layers")) e.theta_layers = rationals(j, "theta_layers");
    if (j.contains("compare")) e.compare = detail::parameterization_from(j.at("compare"));
    auto& c = e.cfg;
    c.width = get<int>(j, "width", c.width);
    c.steps = get<int>(j, "steps", c.steps);
    c.seed = get<std::uint64_t>(j, "seed", c.seed);
    c.d_in = get<int>(j, "d_in", c.d_in);
    c.d_out = get<int>(j, "d_out", c.d_out);
    c.activation = parse_activation(get<std::string>(j, "activation", to_string(c.activation)));
    c.loss = parse_loss(get<std::string>(j, "loss", to_string(c.loss)));
    c.eta = get<double>(j, "eta", c.eta);
    c.rho = get<double>(j, "rho", c.rho);
    c.batch = get<int>(j, "batch", c.batch);
    c.test_points = get<int>(j, "test_points", c.test_points);
    c.data = data_from(sub(j, "data"), c.data);
    e.out = get<std::string>(j, "out", "");
    e.transformed().validate();
    return e;
  });
}

std::string to_json(const EquivJob& e) {
  json j;
  if (!e.preset.empty()) j["preset"] = e.preset;
  j["parameterization"] = detail::parameterization_json(e.param);
  j["theta"] = detail::rational_json(e.theta);
  j["C"] = detail::rational_json(e.C);
  if (!e.theta_layers.empty()) j["theta_layers"] = detail::rationals_json(e.theta_layers);
  if (e.compare) j["compare"] = detail::parameterization_json(*e.compare);
  const auto& c = e.cfg;
  j["width"] = c.width;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["d_in"] = c.d_in;
  j["d_out"] = c.d_out;
  j["activation"] = to_string(c.activation);
  j["loss"] = to_string(c.loss);
  j["eta"] = c.eta;
  j["rho"] = c.rho;
  j["batch"] = c.batch;
  j["test_points"] = c.test_points;
  j["data"] = data_json(c.data);
  if (!e.out.empty()) j["out"] = e.out;
  return j.dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace mupp
