#pragma once

#include "mupp/rational.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mupp {

enum class RuleTag {
  sam_joint_lp,
  sam_unnormalized,
  sam_layerwise_norm,
  sam_decoupled,
  asam_elementwise,
  asam_layerwise,
  sam_on,
  last_layer_only,
  first_layer_only,
  none,
};

enum class NormKind { frobenius, spectral };

struct PerturbationRule {
  RuleTag tag = RuleTag::sam_joint_lp;
  /// Denominator exponents d̃_l. Required for sam_decoupled; when set on the
  /// joint or masked rules they replace d_l inside the gradient norm.
  std::vector<Rational> d_tilde;
  NormKind norm = NormKind::frobenius;
  /// SAM-ON only: also apply the global scaling to normalization parameters.
  bool sam_on_global_on_all = false;
};

std::string to_string(RuleTag tag);
RuleTag parse_rule_tag(const std::string& name);
const std::vector<std::string>& rule_tag_names();

/// Rules that divide by a joint norm of scaled gradients (possibly masked).
bool is_joint_normalized(RuleTag tag);

/// Width exponents of an abcd-parameterization. Vectors are indexed by
/// layer-1, so index 0 is the input layer and index L is the output layer.
struct Parameterization {
  int L = 1;
  std::vector<Rational> a, b, c, d_layers;
  Rational d_global{0};
  PerturbationRule rule;

  int layer_count() const { return L + 1; }
  bool has_multipliers() const;
  /// Throws std::invalid_argument on length mismatch or L < 1.
  void validate() const;
};

enum class LayerRole { input_like, hidden_like, output_like };
LayerRole role_of(int layer, int L);
std::string to_string(LayerRole role);

enum class PerturbStatus { vanishing, nontrivial_only, effective };
std::string to_string(PerturbStatus s);

struct StabilityFlags {
  bool init = false;
  bool feature = false;
  bool output = false;
  bool perturbation_feature = false;
  bool perturbation_output = false;
};

struct PhaseReport {
  Rational c_nabla;
  Rational r;
  ExtRational r_tilde;
  std::vector<Rational> r_l;           // L entries
  std::vector<ExtRational> r_tilde_l;  // L entries
  bool stable = false;
  StabilityFlags stability;
  bool nontrivial = false;
  std::vector<bool> feature_learning;               // L entries
  std::vector<PerturbStatus> perturbation_status;   // L+1 entries
  bool output_perturbation_nontrivial = false;
  std::vector<bool> norm_constraint_saturated;      // L+1 entries
  /// LP family: the given d_l satisfy every gradient-norm constraint with at
  /// least one equality (no C-shift needed).
  bool norm_constraints_valid = true;
  /// D_l: the perturbation of layer l has entries n^{-D_l} times gradient
  /// entries after normalization. For canonical LP, D_l = d + d_l.
  std::vector<ExtRational> perturbation_exponent;
  /// Every violated inequality, named.
  std::vector<std::string> violations;
};

Rational c_nabla(const Parameterization& p);
Rational compute_r(const Parameterization& p);
/// r̃_{l0} with the minimum over l ≤ up_to_layer; nullopt means no
/// perturbation reaches those layers. Throws std::out_of_range.
ExtRational compute_r_tilde(const Parameterization& p, int up_to_layer);
ExtRational compute_r_tilde(const Parameterization& p);
PhaseReport classify(const Parameterization& p);

/// Rewrites nonzero multipliers into a=0 form with identical trajectories.
/// Joint LP becomes decoupled (numerator d_l+2a_l, denominator d_l+a_l).
Parameterization normalize_multipliers(const Parameterization& p);
/// Shifts d_l (and d̃_l) of joint rules so the tightest norm constraint holds
/// with equality. Other rules are returned unchanged.
Parameterization canonicalize(const Parameterization& p);

struct PerturbationScaling {
  Rational d_global;
  std::vector<Rational> d_layers;
  bool reduces_to_sgd = false;
};

/// nullopt when b_{L+1} < 1. Throws std::invalid_argument for unstable (b, c).
std::optional<PerturbationScaling> derive_mpp(const std::vector<Rational>& b,
                                              const std::vector<Rational>& c);

/// targets are 1-based layer indices. Throws std::invalid_argument if
/// c_nabla < 1/2 or an index is out of range.
PerturbationScaling select_perturbation_scaling(const std::set<int>& targets,
                                                const Rational& c_nabla, int L);

/// Width exponents of measurable statistics. Keys: "h_init/l",
/// "dx_update/l", "dx_perturb/l", "eps_fro/l", "eps_spec/l", "w_spec/l",
/// "eps_spec_ratio/l", "df_perturb", "vnorm", "vnorm_contrib/l",
/// "gap_residual_last", "gap_residual_first".
std::map<std::string, Rational> predict_exponents(const Parameterization& p);
std::map<std::string, Rational> predict_exponents(Parameterization p, const PerturbationRule& rule);
/// Throws std::out_of_range for an unknown key.
Rational predict_exponent(const Parameterization& p, const std::string& key);

/// Powers of n multiplying ρ (so exponent = -d or -d_l). nullopt marks a
/// layer the rule does not perturb.
struct VariantExponents {
  std::optional<Rational> global;
  std::optional<Rational> layer;
};
VariantExponents variant_scaling(RuleTag rule, LayerRole role);
/// μP base with the variant's effective-perturbation exponents.
Parameterization variant_mupp(RuleTag rule, int L);
/// μP base with the variant and d = d_l = 0.
Parameterization variant_naive(RuleTag rule, int L);

struct SpectralFactors {
  double init_std = 0;
  double lr_factor = 0;
  double perturb_factor_ln = 0;
  double perturb_factor_dp = 0;
  double gradnorm_factor = 0;
};
SpectralFactors spectral_scaling(long fan_in, long fan_out);

/// Joint transform (a+θ, b-θ, c-2θ, d_l-θ+C, d-θ).
Parameterization equivalence_transform(const Parameterization& p, const Rational& theta,
                                       const Rational& C);
/// Layerwise transform. LN: (a+θ_l, b-θ_l, c-2θ_l, d_l-θ_l). Joint rules
/// become decoupled: numerator d_l-2θ_l, denominator d̃_l-θ_l.
Parameterization equivalence_transform_layerwise(const Parameterization& p,
                                                 const std::vector<Rational>& theta);

std::vector<Rational> a_mupp(int L);
std::vector<Rational> mup_package_multipliers(int L);
/// Global multipliers that make d_l = 0 with global exponent d effective.
std::vector<Rational> global_multipliers(const Rational& d, int L);
/// Effective-everywhere (d, d_l) for μP under arbitrary multipliers a.
PerturbationScaling mupp_for_multipliers(const std::vector<Rational>& a);

enum class PhaseLabel { unstable, effective_sgd, nontrivial_some, effective_all };
std::string to_string(PhaseLabel label);

struct PhasePoint {
  ExtRational r_tilde;
  ExtRational last_exp;
  PhaseLabel phase = PhaseLabel::unstable;
};

PhaseLabel phase_label(const Rational& r_tilde, const Rational& last_exp, const Rational& b_last);
PhasePoint phase_point(const Parameterization& p);
std::vector<PhasePoint> phase_grid(const Rational& b_last, const Rational& step,
                                   const Rational& r_lo = Rational(-1, 2),
                                   const Rational& r_hi = Rational(2),
                                   const Rational& last_lo = Rational(0),
                                   const Rational& last_hi = Rational(2));

const std::vector<std::string>& preset_names();
/// Throws std::invalid_argument for an unknown name.
Parameterization preset(const std::string& name, int L);

}  // namespace mupp
