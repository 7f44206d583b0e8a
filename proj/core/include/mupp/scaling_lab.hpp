#pragma once

#include "mupp/datagen.hpp"
#include "mupp/netcore.hpp"
#include "mupp/param_algebra.hpp"
#include "mupp/perturb_opt.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mupp {

/// Network, parameterization and loss shared by every lab experiment.
struct ModelSpec {
  std::string preset;         // label only; empty for explicit exponents
  Parameterization param;     // used unless `spectral`
  bool spectral = false;      // fan-ratio init, learning rates and rule factors
  PerturbationRule spectral_rule;
  int d_in = 16;
  int d_out = 4;
  Activation activation;
  LossKind loss = LossKind::cross_entropy;
  bool zero_output = false;

  int depth() const { return param.L; }
  std::string rule_name() const;
  /// Exponents the predictions are computed from. Spectral mode maps to the
  /// equivalent μP-based bcd form.
  Parameterization analysis_param() const;
  NetworkState init(int width, std::uint64_t seed) const;
  OptimizerConfig optimizer(int width, double eta, double rho) const;
};

ModelSpec model_from_preset(const std::string& name, int L);

struct SweepConfig {
  std::vector<int> widths{64, 128, 256, 512, 1024};
  int seeds = 8;
  std::uint64_t seed_base = 0;
  int steps = 20;
  ModelSpec model;
  SyntheticSpec data;           // classes and d_in follow the model
  double eta = 0.1;
  double rho = 0.1;
  int ascent_batch = 1;
  int descent_batch = 1;
  int probe_size = 8;
  int record_every = 1;
  bool full_telemetry = true;   // spectral norms and Δx on the probe
  /// "2..T" (trained regime) or "1" (first step only).
  std::string step_range = "2..T";
  std::vector<std::string> statistics;  // empty: all
  int jobs = 1;

  /// Throws std::invalid_argument.
  void validate() const;
};

struct SweepRecord {
  std::string run_id;
  int width = 0;
  std::uint64_t seed = 0;
  std::string step_range;
  std::string statistic;
  double value = 0;
  std::string rule;
  std::string preset;
  double eta = 0;
  double rho = 0;
  bool diverged = false;
};

/// Statistic names that are measured but have no width-exponent prediction.
bool is_unpredicted_telemetry(const std::string& statistic);

/// Sorted by (width, seed, statistic); independent of `jobs`.
std::vector<SweepRecord> run_width_sweep(const SweepConfig& cfg);
std::string sweep_csv(const std::vector<SweepRecord>& records);

struct ExponentFit {
  std::string statistic;
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
  int points = 0;
  int excluded = 0;   // non-positive or non-finite values dropped
  int diverged = 0;   // seeds dropped for divergence
};

/// OLS of log₂ value on log₂ width. Non-positive values are excluded and
/// counted. Throws std::invalid_argument with fewer than 3 distinct widths.
ExponentFit fit_exponent(const std::vector<std::pair<double, double>>& points,
                         const std::string& statistic = "");
/// Mean over non-diverged seeds per width, then fit, for every statistic.
std::vector<ExponentFit> fit_sweep(const std::vector<SweepRecord>& records);
std::optional<ExponentFit> find_fit(const std::vector<ExponentFit>& fits, const std::string& statistic);

struct VerdictRow {
  std::string statistic;
  double slope = 0;
  std::optional<Rational> predicted;
  double tolerance = 0.2;
  double r2 = 0;
  bool pass = false;
  bool unpredicted = false;
  std::string error;
};

/// |slope − predicted| ≤ tolerance and r² ≥ 0.9 for non-flat predictions;
/// |slope| ≤ 0.15 for flat ones. Unpredicted telemetry is reported without a
/// verdict; any other statistic lacking a prediction becomes an error row.
std::vector<VerdictRow> verdict_report(const std::vector<ExponentFit>& fits,
                                       const std::map<std::string, Rational>& predictions,
                                       double tolerance = 0.2);
std::string verdict_json(const std::vector<VerdictRow>& rows);
bool verdict_pass(const std::vector<VerdictRow>& rows);

/// Relative residual of the dominant gradient-norm term, fitted across widths.
/// Uses the last-layer term when it dominates ‖v‖, the first-layer term otherwise.
ExponentFit gradnorm_dominance(const SweepConfig& cfg);
std::string dominant_gap_statistic(const Parameterization& p);

struct CouplingConfig {
  std::vector<int> widths{128, 512, 2048};
  int seeds = 4;
  std::uint64_t seed_base = 0;
  int steps = 50;
  double eta = 0.5;
  double rho = 0.5;
  ModelSpec model;  // SAM-global side; the twin masks all but the last layer
  SyntheticSpec data;
  int batch = 1;
  int test_points = 64;
  int jobs = 1;
};

struct CouplingRow {
  int width = 0;
  double d_last_layer = 0;  // D(n): SAM vs last-layer-only SAM
  double d_sgd = 0;         // SAM vs SGD
  int seeds = 0;
  int diverged = 0;
};

std::vector<CouplingRow> coupling_experiment(const CouplingConfig& cfg);
std::string coupling_csv(const std::vector<CouplingRow>& rows);

struct EquivalenceConfig {
  int width = 256;
  int steps = 10;
  std::uint64_t seed = 0;
  int d_in = 16;
  int d_out = 4;
  Activation activation;
  LossKind loss = LossKind::cross_entropy;
  double eta = 0.1;
  double rho = 0.1;
  int batch = 4;
  int test_points = 32;
  SyntheticSpec data;
};

/// Trains both parameterizations from shared raw normals; returns the max
/// over steps and test points of ‖f − f'‖/(‖f‖ + 1e-12).
double equivalence_deviation(const Parameterization& p, const Parameterization& q,
                             const EquivalenceConfig& cfg);
double equivalence_check(const Parameterization& p, const Rational& theta, const Rational& C,
                         const EquivalenceConfig& cfg);

struct HpGridConfig {
  std::vector<int> widths{128, 512, 2048};
  std::vector<double> etas{0.05, 0.1, 0.2, 0.4};
  std::vector<double> rhos{0.0, 0.05, 0.2, 0.8};
  int seeds = 3;
  std::uint64_t seed_base = 0;
  int steps = 100;
  ModelSpec model;
  SyntheticSpec data;
  int batch = 8;
  int test_points = 256;
  /// Cells below this test accuracy count as unstable, like the grey
  /// regions of an accuracy heat map.
  double unstable_accuracy = 0.3;
  int jobs = 1;
};

struct HpCell {
  int width = 0;
  int eta_index = 0;
  int rho_index = 0;
  std::uint64_t seed = 0;
  double eta = 0;
  double rho = 0;
  double train_acc = 0;
  double test_acc = 0;
  double final_loss = 0;
  bool diverged = false;  // non-finite or beyond 1e9
  bool unstable = false;  // diverged or below unstable_accuracy
};

struct HpOptimum {
  int width = 0;
  std::uint64_t seed = 0;
  int eta_index = -1;
  int rho_index = -1;
  double test_acc = 0;
};

struct HpGridResult {
  std::vector<HpCell> cells;       // sorted by (width, seed, eta, rho)
  std::vector<HpOptimum> optima;   // per (width, seed); -1 if all diverged
};

HpGridResult hp_grid(const HpGridConfig& cfg);
std::string hp_grid_csv(const HpGridResult& res);

/// CSV with columns r_tilde, last_exp, phase.
std::string phase_grid_csv(const std::vector<PhasePoint>& points);

}  // namespace mupp
