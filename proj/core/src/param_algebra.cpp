#include "mupp/param_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mupp {

namespace {

const Rational kZero{0};
const Rational kOne{1};
const Rational kHalf{1, 2};

const std::vector<std::pair<RuleTag, std::string>>& rule_table() {
  static const std::vector<std::pair<RuleTag, std::string>> t = {
      {RuleTag::sam_joint_lp, "sam_joint_lp"},
      {RuleTag::sam_unnormalized, "sam_unnormalized"},
      {RuleTag::sam_layerwise_norm, "sam_layerwise_norm"},
      {RuleTag::sam_decoupled, "sam_decoupled"},
      {RuleTag::asam_elementwise, "asam_elementwise"},
      {RuleTag::asam_layerwise, "asam_layerwise"},
      {RuleTag::sam_on, "sam_on"},
      {RuleTag::last_layer_only, "last_layer_only"},
      {RuleTag::first_layer_only, "first_layer_only"},
      {RuleTag::none, "none"},
  };
  return t;
}

std::vector<Rational> filled(int n, Rational v) { return std::vector<Rational>(n, v); }

/// Exponent bookkeeping shared by classify and predict_exponents.
struct Analysis {
  int L = 1;
  std::vector<Rational> b, c;
  Rational cg;
  std::vector<Rational> grad_entry;  // g_l: gradient entries ∝ n^{-g_l}
  std::vector<Rational> size;        // Frobenius = entry + size for rank one
  std::vector<Rational> N;           // ‖∇_{W^l}‖_F exponent
  std::vector<Rational> w;           // weight entry exponent (trained)
  std::vector<Rational> F;           // ‖W^l‖_F exponent
  std::vector<std::optional<Rational>> T;  // denominator term exponents
  std::optional<Rational> V;               // joint denominator exponent
  std::vector<ExtRational> D;              // perturbation exponent
  bool joint = false;
  bool layerwise = false;
};

std::vector<bool> kept_layers(const PerturbationRule& rule, int L) {
  std::vector<bool> keep(L + 1, true);
  switch (rule.tag) {
    case RuleTag::sam_on:
    case RuleTag::first_layer_only:
      std::fill(keep.begin(), keep.end(), false);
      keep[0] = true;
      break;
    case RuleTag::last_layer_only:
      std::fill(keep.begin(), keep.end(), false);
      keep[L] = true;
      break;
    case RuleTag::none:
      std::fill(keep.begin(), keep.end(), false);
      break;
    default:
      break;
  }
  return keep;
}

Analysis analyze(const Parameterization& given) {
  given.validate();
  const Parameterization p = normalize_multipliers(given);
  Analysis an;
  const int L = p.L;
  an.L = L;
  an.b = p.b;
  an.c = p.c;
  an.cg = std::min(p.b[L], p.c[L]);
  for (int i = 0; i <= L; ++i) {
    const bool last = i == L;
    const bool first = i == 0;
    Rational g = last ? kZero : an.cg;
    Rational sz = (first || last) ? kHalf : kOne;
    an.grad_entry.push_back(g);
    an.size.push_back(sz);
    an.N.push_back(-g + sz);
    Rational w = std::max(-p.b[i], -p.c[i] - g);
    an.w.push_back(w);
    an.F.push_back(w + sz);
  }

  const auto keep = kept_layers(p.rule, L);
  an.T.assign(L + 1, std::nullopt);
  an.D.assign(L + 1, std::nullopt);
  const Rational d = p.d_global;
  switch (p.rule.tag) {
    case RuleTag::none:
      break;
    case RuleTag::sam_unnormalized:
      for (int i = 0; i <= L; ++i) an.D[i] = d + p.d_layers[i];
      break;
    case RuleTag::sam_layerwise_norm:
      an.layerwise = true;
      for (int i = 0; i <= L; ++i) an.D[i] = d + p.d_layers[i] + an.N[i];
      break;
    case RuleTag::asam_elementwise:
    case RuleTag::asam_layerwise: {
      an.joint = true;
      const bool elem = p.rule.tag == RuleTag::asam_elementwise;
      for (int i = 0; i <= L; ++i) {
        Rational factor = elem ? an.w[i] : an.F[i];
        an.T[i] = -p.d_layers[i] + factor + an.N[i];
        an.V = an.V ? std::max(*an.V, *an.T[i]) : *an.T[i];
      }
      for (int i = 0; i <= L; ++i) {
        Rational factor = elem ? an.w[i] : an.F[i];
        an.D[i] = d + p.d_layers[i] - 2 * factor + *an.V;
      }
      break;
    }
    default: {
      an.joint = true;
      const auto& den = p.rule.d_tilde.empty() ? p.d_layers : p.rule.d_tilde;
      for (int i = 0; i <= L; ++i) {
        if (!keep[i]) continue;
        an.T[i] = -den[i] + an.N[i];
        an.V = an.V ? std::max(*an.V, *an.T[i]) : *an.T[i];
      }
      for (int i = 0; i <= L; ++i)
        if (keep[i]) an.D[i] = d + p.d_layers[i] + *an.V;
      break;
    }
  }
  return an;
}

/// c∇ + D_l − [l≠1] for l ≤ L; zero means effective.
ExtRational layer_gap(const Analysis& an, int i) {
  if (!an.D[i]) return std::nullopt;
  return an.cg + *an.D[i] - (i == 0 ? kZero : kOne);
}

ExtRational r_tilde_upto(const Analysis& an, int l) {
  ExtRational m;
  for (int i = 0; i < l; ++i) m = ext_min(m, layer_gap(an, i));
  return m;
}

Rational r_upto(const Analysis& an, int l) {
  const int L = an.L;
  Rational head = std::min(an.b[L], an.c[L]);
  if (an.D[L]) head = std::min(head, *an.D[L]);
  Rational m = an.c[0];
  for (int i = 1; i < l; ++i) m = std::min(m, an.c[i] - kOne);
  return head + m;
}

bool ext_ge(const ExtRational& x, const Rational& v) { return !x || *x >= v; }

}  // namespace

std::string to_string(RuleTag tag) {
  for (const auto& [t, n] : rule_table())
    if (t == tag) return n;
  return "unknown";
}

RuleTag parse_rule_tag(const std::string& name) {
  for (const auto& [t, n] : rule_table())
    if (n == name) return t;
  throw std::invalid_argument("unknown perturbation rule: '" + name + "'");
}

const std::vector<std::string>& rule_tag_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [t, n] : rule_table()) v.push_back(n);
    return v;
  }();
  return names;
}

bool is_joint_normalized(RuleTag tag) {
  switch (tag) {
    case RuleTag::sam_joint_lp:
    case RuleTag::sam_decoupled:
    case RuleTag::sam_on:
    case RuleTag::last_layer_only:
    case RuleTag::first_layer_only:
      return true;
    default:
      return false;
  }
}

bool Parameterization::has_multipliers() const {
  return std::any_of(a.begin(), a.end(), [](const Rational& x) { return x != 0; });
}

void Parameterization::validate() const {
  if (L < 1) throw std::invalid_argument("L must be at least 1");
  const std::size_t n = static_cast<std::size_t>(L) + 1;
  auto check = [n](const std::vector<Rational>& v, const char* name) {
    if (v.size() != n)
      throw std::invalid_argument(std::string(name) + " must have L+1 = " + std::to_string(n) +
                                  " entries, got " + std::to_string(v.size()));
  };
  check(a, "a");
  check(b, "b");
  check(c, "c");
  check(d_layers, "d_layers");
  if (rule.tag == RuleTag::sam_decoupled && rule.d_tilde.empty())
    throw std::invalid_argument("sam_decoupled requires d_tilde");
  if (!rule.d_tilde.empty()) check(rule.d_tilde, "d_tilde");
}

LayerRole role_of(int layer, int L) {
  if (layer < 1 || layer > L + 1) throw std::out_of_range("layer index out of range");
  if (layer == 1) return LayerRole::input_like;
  if (layer == L + 1) return LayerRole::output_like;
  return LayerRole::hidden_like;
}

std::string to_string(LayerRole role) {
  switch (role) {
    case LayerRole::input_like: return "input_like";
    case LayerRole::hidden_like: return "hidden_like";
    case LayerRole::output_like: return "output_like";
  }
  return "unknown";
}

std::string to_string(PerturbStatus s) {
  switch (s) {
    case PerturbStatus::vanishing: return "vanishing";
    case PerturbStatus::nontrivial_only: return "nontrivial-only";
    case PerturbStatus::effective: return "effective";
  }
  return "unknown";
}

Parameterization normalize_multipliers(const Parameterization& p) {
  p.validate();
  if (!p.has_multipliers()) return p;
  Parameterization q = p;
  const int n = p.L + 1;
  for (int i = 0; i < n; ++i) {
    q.a[i] = 0;
    q.b[i] = p.b[i] + p.a[i];
    q.c[i] = p.c[i] + 2 * p.a[i];
  }
  switch (p.rule.tag) {
    case RuleTag::sam_layerwise_norm:
      for (int i = 0; i < n; ++i) q.d_layers[i] = p.d_layers[i] + p.a[i];
      break;
    case RuleTag::sam_unnormalized:
      for (int i = 0; i < n; ++i) q.d_layers[i] = p.d_layers[i] + 2 * p.a[i];
      break;
    case RuleTag::asam_elementwise:
    case RuleTag::asam_layerwise:
    case RuleTag::none:
      break;
    default: {
      const auto den = p.rule.d_tilde.empty() ? p.d_layers : p.rule.d_tilde;
      q.rule.d_tilde.assign(n, 0);
      for (int i = 0; i < n; ++i) {
        q.d_layers[i] = p.d_layers[i] + 2 * p.a[i];
        q.rule.d_tilde[i] = den[i] + p.a[i];
      }
      if (q.rule.tag == RuleTag::sam_joint_lp) q.rule.tag = RuleTag::sam_decoupled;
      break;
    }
  }
  return q;
}

Parameterization canonicalize(const Parameterization& p) {
  Analysis an = analyze(p);
  Parameterization q = p;
  if (!is_joint_normalized(q.rule.tag) || !an.V || *an.V == 0) return q;
  const Rational shift = *an.V;
  for (auto& x : q.d_layers) x += shift;
  for (auto& x : q.rule.d_tilde) x += shift;
  return q;
}

Rational c_nabla(const Parameterization& p) { return analyze(p).cg; }

Rational compute_r(const Parameterization& p) {
  Analysis an = analyze(p);
  return r_upto(an, an.L);
}

ExtRational compute_r_tilde(const Parameterization& p, int up_to_layer) {
  if (up_to_layer < 1 || up_to_layer > p.L)
    throw std::out_of_range("r_tilde layer index out of range: " + std::to_string(up_to_layer));
  return r_tilde_upto(analyze(p), up_to_layer);
}

ExtRational compute_r_tilde(const Parameterization& p) { return compute_r_tilde(p, p.L); }

PhaseReport classify(const Parameterization& p) {
  const Analysis an = analyze(p);
  const int L = an.L;
  PhaseReport rep;
  rep.c_nabla = an.cg;
  for (int l = 1; l <= L; ++l) {
    rep.r_l.push_back(r_upto(an, l));
    rep.r_tilde_l.push_back(r_tilde_upto(an, l));
  }
  rep.r = rep.r_l.back();
  rep.r_tilde = rep.r_tilde_l.back();
  rep.perturbation_exponent = an.D;

  const Rational bL = an.b[L], cL = an.c[L];
  auto& st = rep.stability;
  auto& why = rep.violations;

  st.init = true;
  if (an.b[0] != 0) st.init = false, why.push_back("b_1 = 0 violated");
  for (int i = 1; i < L; ++i)
    if (an.b[i] != kHalf) {
      st.init = false;
      why.push_back("b_" + std::to_string(i + 1) + " = 1/2 violated");
    }
  if (bL < kHalf) st.init = false, why.push_back("b_{L+1} ≥ 1/2 violated");

  st.feature = rep.r >= 0;
  if (!st.feature) why.push_back("r ≥ 0 violated");

  st.output = true;
  if (cL < 1) st.output = false, why.push_back("c_{L+1} ≥ 1 violated");
  if (bL + rep.r < 1) st.output = false, why.push_back("b_{L+1}+r ≥ 1 violated");

  st.perturbation_feature = ext_ge(rep.r_tilde, kZero);
  if (!st.perturbation_feature) why.push_back("r̃ ≥ 0 violated");

  st.perturbation_output = true;
  if (!ext_ge(an.D[L], kOne)) st.perturbation_output = false, why.push_back("d+d_{L+1} ≥ 1 violated");
  if (rep.r_tilde && bL + *rep.r_tilde < 1)
    st.perturbation_output = false, why.push_back("b_{L+1}+r̃ ≥ 1 violated");

  rep.stable = st.init && st.feature && st.output && st.perturbation_feature && st.perturbation_output;
  rep.nontrivial = cL == 1 || an.cg + rep.r == 1;
  for (const auto& rl : rep.r_l) rep.feature_learning.push_back(rl == 0);

  const bool last_effective = an.D[L] && *an.D[L] == 1;
  rep.output_perturbation_nontrivial = last_effective || (rep.r_tilde && an.cg + *rep.r_tilde == 1);

  for (int i = 0; i < L; ++i) {
    auto gap = layer_gap(an, i);
    const auto& rt = rep.r_tilde_l[i];
    if (gap && *gap == 0)
      rep.perturbation_status.push_back(PerturbStatus::effective);
    else if (rt && *rt <= 0)
      rep.perturbation_status.push_back(PerturbStatus::nontrivial_only);
    else
      rep.perturbation_status.push_back(PerturbStatus::vanishing);
  }
  if (last_effective)
    rep.perturbation_status.push_back(PerturbStatus::effective);
  else if (rep.output_perturbation_nontrivial || (an.D[L] && *an.D[L] < 1))
    rep.perturbation_status.push_back(PerturbStatus::nontrivial_only);
  else
    rep.perturbation_status.push_back(PerturbStatus::vanishing);

  rep.norm_constraint_saturated.assign(L + 1, an.layerwise);
  if (an.V) {
    for (int i = 0; i <= L; ++i) rep.norm_constraint_saturated[i] = an.T[i] && *an.T[i] == *an.V;
    const bool lp = is_joint_normalized(p.rule.tag) && p.rule.tag != RuleTag::sam_decoupled &&
                    p.rule.d_tilde.empty();
    if (lp && *an.V != 0) {
      rep.norm_constraints_valid = false;
      if (*an.V > 0) {
        for (int i = 0; i <= L; ++i)
          if (an.T[i] && *an.T[i] > 0)
            why.push_back("gradient-norm constraint of layer " + std::to_string(i + 1) +
                          " violated (C-shift applied)");
      } else {
        why.push_back("no gradient-norm constraint saturated (C-shift applied)");
      }
    }
  }
  return rep;
}

std::optional<PerturbationScaling> derive_mpp(const std::vector<Rational>& b,
                                              const std::vector<Rational>& c) {
  if (b.size() < 2 || b.size() != c.size())
    throw std::invalid_argument("b and c must have equal length L+1 ≥ 2");
  Parameterization p;
  p.L = static_cast<int>(b.size()) - 1;
  p.a = filled(p.L + 1, 0);
  p.b = b;
  p.c = c;
  p.d_layers = filled(p.L + 1, 0);
  p.rule.tag = RuleTag::none;
  const auto rep = classify(p);
  if (!(rep.stability.init && rep.stability.feature && rep.stability.output))
    throw std::invalid_argument("derive_mpp requires a stable (b, c); violated: " +
                                (rep.violations.empty() ? std::string("?") : rep.violations.front()));
  if (b.back() < 1) return std::nullopt;
  std::set<int> all;
  for (int l = 1; l <= p.L + 1; ++l) all.insert(l);
  return select_perturbation_scaling(all, rep.c_nabla, p.L);
}

PerturbationScaling select_perturbation_scaling(const std::set<int>& targets,
                                                const Rational& cg, int L) {
  if (L < 1) throw std::invalid_argument("L must be at least 1");
  if (cg < kHalf) throw std::invalid_argument("c_nabla must be at least 1/2 for stability");
  for (int t : targets)
    if (t < 1 || t > L + 1) throw std::invalid_argument("target layer out of range: " + std::to_string(t));

  std::vector<Rational> bound(L + 1);
  for (int i = 0; i <= L; ++i)
    bound[i] = i == 0 ? kHalf - cg : (i == L ? kHalf : kOne - cg);

  PerturbationScaling out;
  if (targets.empty()) {
    out.d_global = 1;
    out.d_layers = bound;
    out.reduces_to_sgd = true;
    return out;
  }
  const bool any_input = targets.count(1) > 0;
  bool any_hidden = false;
  for (int t : targets) any_hidden = any_hidden || (t > 1 && t <= L);
  Rational d = any_input ? -kHalf : (any_hidden ? kZero : kHalf);
  out.d_global = d;
  out.d_layers.resize(L + 1);
  for (int i = 0; i <= L; ++i) {
    // Value that makes layer i+1 effective given d.
    Rational eff = i == 0 ? -cg - d : (i == L ? kOne - d : kOne - cg - d);
    Rational v = targets.count(i + 1) ? eff : std::max(eff + 1, bound[i]);
    out.d_layers[i] = v;
  }
  return out;
}

std::map<std::string, Rational> predict_exponents(const Parameterization& p) {
  const Analysis an = analyze(p);
  const auto rep = classify(p);
  const int L = an.L;
  std::map<std::string, Rational> out;
  auto key = [](const char* name, int l) { return std::string(name) + "/" + std::to_string(l); };

  Rational prev;
  for (int i = 0; i < L; ++i) {
    Rational h = i == 0 ? -an.b[0] : kHalf - an.b[i] + std::min(prev, kZero);
    out[key("h_init", i + 1)] = h;
    prev = h;
    out[key("dx_update", i + 1)] = -rep.r_l[i];
    if (rep.r_tilde_l[i]) out[key("dx_perturb", i + 1)] = -*rep.r_tilde_l[i];
  }

  for (int i = 0; i <= L; ++i) {
    Rational wspec = i == L ? std::max(kHalf - an.b[i], kHalf - an.c[i])
                            : std::max(kHalf - an.b[i], an.size[i] - an.c[i] - an.cg);
    out[key("w_spec", i + 1)] = wspec;
    if (!an.D[i]) continue;
    Rational e = -*an.D[i] - an.grad_entry[i] + an.size[i];
    out[key("eps_fro", i + 1)] = e;
    out[key("eps_spec", i + 1)] = e;
    out[key("eps_spec_ratio", i + 1)] = e - wspec;
  }

  ExtRational df;
  auto ext_max = [](const ExtRational& x, const Rational& v) -> ExtRational {
    return x ? std::max(*x, v) : v;
  };
  if (an.D[L]) df = ext_max(df, kOne - *an.D[L]);
  if (rep.r_tilde) df = ext_max(df, kOne - an.cg - *rep.r_tilde);
  if (df) out["df_perturb"] = *df;

  if (an.V) {
    out["vnorm"] = *an.V;
    ExtRational rest_last, rest_first;
    for (int i = 0; i <= L; ++i) {
      if (!an.T[i]) continue;
      out[key("vnorm_contrib", i + 1)] = *an.T[i];
      if (i != L) rest_last = rest_last ? std::max(*rest_last, *an.T[i]) : *an.T[i];
      if (i != 0) rest_first = rest_first ? std::max(*rest_first, *an.T[i]) : *an.T[i];
    }
    if (rest_last) out["gap_residual_last"] = *rest_last - *an.V;
    if (rest_first) out["gap_residual_first"] = *rest_first - *an.V;
  }
  return out;
}

std::map<std::string, Rational> predict_exponents(Parameterization p, const PerturbationRule& rule) {
  p.rule = rule;
  return predict_exponents(p);
}

Rational predict_exponent(const Parameterization& p, const std::string& key) {
  const auto all = predict_exponents(p);
  auto it = all.find(key);
  if (it == all.end()) throw std::out_of_range("no prediction for statistic '" + key + "'");
  return it->second;
}

VariantExponents variant_scaling(RuleTag rule, LayerRole role) {
  using R = Rational;
  switch (rule) {
    case RuleTag::sam_joint_lp:
    case RuleTag::sam_decoupled:
      switch (role) {
        case LayerRole::input_like: return {kHalf, kHalf};
        case LayerRole::hidden_like: return {kHalf, -kHalf};
        case LayerRole::output_like: return {kHalf, R(-3, 2)};
      }
      break;
    case RuleTag::asam_layerwise:
      return {kZero, role == LayerRole::hidden_like ? R(-1) : kZero};
    case RuleTag::asam_elementwise:
      return {kHalf, kZero};
    case RuleTag::sam_on:
      if (role == LayerRole::input_like) return {kHalf, kZero};
      return {kHalf, std::nullopt};
    case RuleTag::sam_unnormalized:
      // d_l = c_l under μP, d_{L+1} = 1.
      switch (role) {
        case LayerRole::input_like: return {kZero, R(1)};
        case LayerRole::hidden_like: return {kZero, kZero};
        case LayerRole::output_like: return {kZero, R(-1)};
      }
      break;
    case RuleTag::sam_layerwise_norm:
      // Per-layer radius: ρ_l ∝ √(fan_out/fan_in).
      switch (role) {
        case LayerRole::input_like: return {kZero, kHalf};
        case LayerRole::hidden_like: return {kZero, kZero};
        case LayerRole::output_like: return {kZero, -kHalf};
      }
      break;
    case RuleTag::last_layer_only:
      if (role == LayerRole::output_like) return {-kHalf, kZero};
      return {-kHalf, std::nullopt};
    case RuleTag::first_layer_only:
      if (role == LayerRole::input_like) return {kHalf, kZero};
      return {kHalf, std::nullopt};
    case RuleTag::none:
      return {std::nullopt, std::nullopt};
  }
  return {std::nullopt, std::nullopt};
}

namespace {

Parameterization mup_base(int L) {
  Parameterization p;
  p.L = L;
  p.a = filled(L + 1, 0);
  p.b = filled(L + 1, kHalf);
  p.b[0] = 0;
  p.b[L] = 1;
  p.c = filled(L + 1, 0);
  p.c[0] = -1;
  p.c[L] = 1;
  p.d_layers = filled(L + 1, 0);
  p.rule.tag = RuleTag::none;
  return p;
}

}  // namespace

Parameterization variant_mupp(RuleTag rule, int L) {
  Parameterization p = mup_base(L);
  p.rule.tag = rule;
  if (rule == RuleTag::sam_decoupled) p.rule.tag = RuleTag::sam_joint_lp;
  for (int l = 1; l <= L + 1; ++l) {
    auto v = variant_scaling(rule, role_of(l, L));
    if (v.global) p.d_global = -*v.global;
    p.d_layers[l - 1] = v.layer ? -*v.layer : kZero;
  }
  return p;
}

Parameterization variant_naive(RuleTag rule, int L) {
  Parameterization p = mup_base(L);
  p.rule.tag = rule;
  return p;
}

SpectralFactors spectral_scaling(long fan_in, long fan_out) {
  if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("fan dimensions must be positive");
  const double ratio = static_cast<double>(fan_out) / static_cast<double>(fan_in);
  SpectralFactors f;
  f.init_std = (1.0 / std::sqrt(static_cast<double>(fan_in))) * std::min(1.0, std::sqrt(ratio));
  f.lr_factor = ratio;
  f.perturb_factor_ln = std::sqrt(ratio);
  f.perturb_factor_dp = ratio;
  f.gradnorm_factor = std::sqrt(ratio);
  return f;
}

Parameterization equivalence_transform(const Parameterization& p, const Rational& theta,
                                       const Rational& C) {
  p.validate();
  Parameterization q = p;
  for (int i = 0; i <= p.L; ++i) {
    q.a[i] += theta;
    q.b[i] -= theta;
    q.c[i] -= 2 * theta;
    q.d_layers[i] += -theta + C;
  }
  for (auto& x : q.rule.d_tilde) x += -theta + C;
  q.d_global -= theta;
  return q;
}

Parameterization equivalence_transform_layerwise(const Parameterization& p,
                                                 const std::vector<Rational>& theta) {
  p.validate();
  if (static_cast<int>(theta.size()) != p.L + 1)
    throw std::invalid_argument("theta must have L+1 entries");
  Parameterization q = p;
  const bool joint = is_joint_normalized(p.rule.tag);
  if (joint && q.rule.d_tilde.empty()) {
    q.rule.d_tilde = p.d_layers;
    if (q.rule.tag == RuleTag::sam_joint_lp) q.rule.tag = RuleTag::sam_decoupled;
  }
  for (int i = 0; i <= p.L; ++i) {
    const Rational& t = theta[i];
    q.a[i] += t;
    q.b[i] -= t;
    q.c[i] -= 2 * t;
    switch (p.rule.tag) {
      case RuleTag::sam_layerwise_norm: q.d_layers[i] -= t; break;
      case RuleTag::sam_unnormalized: q.d_layers[i] -= 2 * t; break;
      case RuleTag::asam_elementwise:
      case RuleTag::asam_layerwise:
      case RuleTag::none: break;
      default:
        q.d_layers[i] -= 2 * t;
        q.rule.d_tilde[i] -= t;
        break;
    }
  }
  return q;
}

std::vector<Rational> a_mupp(int L) {
  if (L < 1) throw std::invalid_argument("L must be at least 1");
  auto a = filled(L + 1, 0);
  a[0] = -kHalf;
  a[L] = kHalf;
  return a;
}

std::vector<Rational> mup_package_multipliers(int L) {
  if (L < 1) throw std::invalid_argument("L must be at least 1");
  auto a = filled(L + 1, 0);
  a[L] = 1;
  return a;
}

std::vector<Rational> global_multipliers(const Rational& d, int L) {
  auto a = filled(L + 1, -d);
  a[0] = -d - kHalf;
  a[L] = -d + kHalf;
  return a;
}

PerturbationScaling mupp_for_multipliers(const std::vector<Rational>& a) {
  if (a.size() < 2) throw std::invalid_argument("multipliers need L+1 ≥ 2 entries");
  const int L = static_cast<int>(a.size()) - 1;
  Rational d = -a[0] - kHalf;
  for (int i = 1; i < L; ++i) d = std::min(d, -a[i]);
  d = std::min(d, -a[L] + kHalf);
  PerturbationScaling s;
  s.d_global = d;
  s.d_layers.resize(L + 1);
  s.d_layers[0] = -1 - d - 2 * a[0];
  for (int i = 1; i < L; ++i) s.d_layers[i] = -d - 2 * a[i];
  s.d_layers[L] = 1 - d - 2 * a[L];
  return s;
}

std::string to_string(PhaseLabel label) {
  switch (label) {
    case PhaseLabel::unstable: return "unstable";
    case PhaseLabel::effective_sgd: return "effective-SGD";
    case PhaseLabel::nontrivial_some: return "nontrivial-some";
    case PhaseLabel::effective_all: return "effective-all";
  }
  return "unknown";
}

PhaseLabel phase_label(const Rational& rt, const Rational& last, const Rational& b_last) {
  if (rt < 0 || last < 1 || b_last + rt < 1) return PhaseLabel::unstable;
  if (rt == 0 && last == 1) return PhaseLabel::effective_all;
  if (last > 1 && rt > std::max(kZero, kOne - b_last)) return PhaseLabel::effective_sgd;
  return PhaseLabel::nontrivial_some;
}

PhasePoint phase_point(const Parameterization& p) {
  const auto rep = classify(p);
  PhasePoint pt;
  pt.r_tilde = rep.r_tilde;
  pt.last_exp = rep.perturbation_exponent.back();
  const auto& s = rep.perturbation_status;
  const bool all_eff = std::all_of(s.begin(), s.end(), [](auto x) { return x == PerturbStatus::effective; });
  const bool all_van = std::all_of(s.begin(), s.end(), [](auto x) { return x == PerturbStatus::vanishing; });
  if (!rep.stable)
    pt.phase = PhaseLabel::unstable;
  else if (all_eff)
    pt.phase = PhaseLabel::effective_all;
  else if (all_van)
    pt.phase = PhaseLabel::effective_sgd;
  else
    pt.phase = PhaseLabel::nontrivial_some;
  return pt;
}

std::vector<PhasePoint> phase_grid(const Rational& b_last, const Rational& step, const Rational& r_lo,
                                   const Rational& r_hi, const Rational& last_lo,
                                   const Rational& last_hi) {
  if (step <= 0) throw std::invalid_argument("grid step must be positive");
  std::vector<PhasePoint> out;
  for (Rational rt = r_lo; rt <= r_hi; rt += step)
    for (Rational le = last_lo; le <= last_hi; le += step)
      out.push_back({rt, le, phase_label(rt, le, b_last)});
  return out;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"sp",        "sp-stable", "ntp",
                                                 "mup",       "mup-naive", "mup-global",
                                                 "mupp",      "a-mupp",    "mup-package"};
  return names;
}

Parameterization preset(const std::string& name, int L) {
  if (L < 1) throw std::invalid_argument("L must be at least 1");
  Parameterization p = mup_base(L);
  if (name == "sp" || name == "sp-stable" || name == "ntp") {
    p.b = filled(L + 1, kHalf);
    p.b[0] = 0;
    p.c = filled(L + 1, name == "sp" ? kZero : kOne);
    if (name == "ntp") p.c[0] = 0;
    return p;
  }
  if (name == "mup") return p;
  p.rule.tag = RuleTag::sam_joint_lp;
  if (name == "mup-naive" || name == "mup-global") {
    p.d_global = name == "mup-naive" ? kZero : kHalf;
    p.d_layers = filled(L + 1, kHalf);
    return p;
  }
  if (name == "mupp") {
    auto s = *derive_mpp(p.b, p.c);
    p.d_global = s.d_global;
    p.d_layers = s.d_layers;
    return p;
  }
  if (name == "a-mupp") {
    p.a = a_mupp(L);
    p.b = filled(L + 1, kHalf);
    p.c = filled(L + 1, kZero);
    return p;
  }
  if (name == "mup-package") {
    p.a = mup_package_multipliers(L);
    p.b[L] = 0;
    p.c[L] = -1;
    auto s = mupp_for_multipliers(p.a);
    p.d_global = s.d_global;
    p.d_layers = s.d_layers;
    return p;
  }
  throw std::invalid_argument("unknown preset: '" + name + "'");
}

}  // namespace mupp
