#pragma once

#include "mupp/scaling_lab.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mupp {

/// Schema violation in a run config; the CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Which scaling-lab experiment a sweep config drives.
enum class Experiment { width, gradnorm, coupling, hp_grid };
std::string to_string(Experiment e);

struct SweepJob {
  Experiment experiment = Experiment::width;
  SweepConfig sweep;
  CouplingConfig coupling;
  HpGridConfig grid;
  double tolerance = 0.2;
  std::string out;
};

struct TrainJob {
  ModelSpec model;
  int width = 256;
  std::uint64_t seed = 0;
  int steps = 100;
  double eta = 0.1;
  double rho = 0.1;
  int batch = 8;
  int test_points = 256;
  SyntheticSpec data;
  std::string out;
};

struct EquivJob {
  Parameterization param;
  std::string preset;
  /// Joint transform (θ, C), or per-layer θ_l when `theta_layers` is set,
  /// or an explicit second parameterization when `compare` is set.
  Rational theta{0};
  Rational C{0};
  std::vector<Rational> theta_layers;
  std::optional<Parameterization> compare;
  EquivalenceConfig cfg;
  std::string out;

  Parameterization transformed() const;
};

/// Parse and validate; unknown keys raise ConfigError.
SweepJob parse_sweep_job(const std::string& json_text);
TrainJob parse_train_job(const std::string& json_text);
EquivJob parse_equiv_job(const std::string& json_text);

/// Effective configuration with every default filled in.
std::string to_json(const SweepJob& job);
std::string to_json(const TrainJob& job);
std::string to_json(const EquivJob& job);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace mupp
