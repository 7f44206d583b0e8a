#pragma once

#include "mupp/netcore.hpp"
#include "mupp/param_algebra.hpp"

#include <optional>
#include <vector>

namespace mupp {

/// Numeric per-layer factors of a perturbation rule at one width.
struct RuleScaling {
  PerturbationRule rule;
  double global = 1.0;               // n^{-d}
  std::vector<double> numerator;     // n^{-d_l}
  std::vector<double> denominator;   // n^{-d̃_l}; equals numerator for LP
  std::vector<bool> mask;            // layers the rule perturbs
};

RuleScaling rule_scaling_bcd(const Parameterization& p, int width);
/// Fan-ratio factors: LN uses √(fan_out/fan_in); all other rules use the
/// decoupled form with numerator fan_out/fan_in and denominator √(fan_out/fan_in).
RuleScaling rule_scaling_spectral(const PerturbationRule& rule, const std::vector<int>& dims);

struct PerturbStep {
  Weights epsilon;
  double v_norm = 0;                       // normalizer actually used
  std::vector<double> per_layer_contrib;   // its per-layer terms
  double chi = 0;                          // ‖χ‖_F over the ascent batch
  bool degenerate = false;                 // zero normalizer with ρ > 0
};

PerturbStep compute_perturbation(const RuleScaling& s, const NetworkState& net, const GradientSet& grads,
                                 double rho);

/// Everything a training step needs besides the network and the data.
struct OptimizerConfig {
  RuleScaling scaling;
  std::vector<double> lr_factors;  // η_l = eta · lr_factors[l]
  double eta = 0.1;
  double rho = 0.0;
  LossKind loss = LossKind::cross_entropy;
  double loss_scale = 1.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

OptimizerConfig optimizer_bcd(const Parameterization& p, int width, double eta, double rho, LossKind loss);
OptimizerConfig optimizer_spectral(const PerturbationRule& rule, const std::vector<int>& dims, double eta,
                                   double rho, LossKind loss);

struct OptimizerState {
  Weights velocity;
};

struct Batch {
  Eigen::MatrixXd inputs;  // d_in × B
  std::vector<int> labels;
};

enum class TelemetryLevel { none, basic, full };

struct TelemetryRequest {
  TelemetryLevel level = TelemetryLevel::none;
  /// Probe inputs and their cache at initialization, for Δx^l.
  const Eigen::MatrixXd* probe = nullptr;
  const PassCache* probe_init = nullptr;
};

struct StepTelemetry {
  std::vector<double> eps_fro, eps_spec, w_spec, dw_spec;
  std::vector<double> dx_perturb;  // coordinate scale of x̃^l − x^l, l = 1..L
  std::vector<double> dx_update;   // coordinate scale of x^l_t − x^l_0 on the probe
  double df_perturb = 0;           // coordinate scale of f̃ − f
  double f = 0;                    // coordinate scale of f
  double v_norm = 0;
  std::vector<double> v_contrib;
  double chi = 0;
  double gap_lastlayer_abs = 0;    // |‖v‖ − n^{-d_{L+1}}‖χ‖‖x^L‖|
  double loss = 0;
};

struct StepResult {
  bool diverged = false;
  bool degenerate = false;
  double loss = 0;
  StepTelemetry telemetry;
};

/// Clean pass on the ascent batch, ε, perturbed pass on the descent batch,
/// descent on the stored weights. Aborts without mutation on a non-finite loss.
StepResult sam_step(NetworkState& net, OptimizerState& state, const OptimizerConfig& cfg,
                    const Batch& ascent, const Batch& descent, const TelemetryRequest& req = {});
StepResult sgd_step(NetworkState& net, OptimizerState& state, const OptimizerConfig& cfg, const Batch& batch);

}  // namespace mupp
