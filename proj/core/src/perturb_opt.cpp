#include "mupp/perturb_opt.hpp"

#include <cmath>
#include <stdexcept>

namespace mupp {

namespace {

double npow(int n, const Rational& e) { return std::pow(static_cast<double>(n), -to_double(e)); }

std::vector<bool> rule_mask(RuleTag tag, int layers) {
  std::vector<bool> m(layers, true);
  switch (tag) {
    case RuleTag::none:
      m.assign(layers, false);
      break;
    case RuleTag::sam_on:
    case RuleTag::first_layer_only:
      m.assign(layers, false);
      m.front() = true;
      break;
    case RuleTag::last_layer_only:
      m.assign(layers, false);
      m.back() = true;
      break;
    default:
      break;
  }
  return m;
}

bool finite_all(const Weights& ws) {
  for (const auto& w : ws)
    if (!w.allFinite()) return false;
  return true;
}

}  // namespace

RuleScaling rule_scaling_bcd(const Parameterization& p, int width) {
  p.validate();
  RuleScaling s;
  s.rule = p.rule;
  s.global = npow(width, p.d_global);
  const auto& den = p.rule.d_tilde.empty() ? p.d_layers : p.rule.d_tilde;
  for (int l = 0; l <= p.L; ++l) {
    s.numerator.push_back(npow(width, p.d_layers[l]));
    s.denominator.push_back(npow(width, den[l]));
  }
  s.mask = rule_mask(p.rule.tag, p.L + 1);
  return s;
}

RuleScaling rule_scaling_spectral(const PerturbationRule& rule, const std::vector<int>& dims) {
  RuleScaling s;
  s.rule = rule;
  const int layers = static_cast<int>(dims.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const auto f = spectral_scaling(dims[l], dims[l + 1]);
    if (rule.tag == RuleTag::sam_layerwise_norm) {
      s.numerator.push_back(f.perturb_factor_ln);
      s.denominator.push_back(1.0);
    } else {
      s.numerator.push_back(f.perturb_factor_dp);
      s.denominator.push_back(f.gradnorm_factor);
    }
  }
  s.mask = rule_mask(rule.tag, layers);
  return s;
}

namespace {

void fill_perturbation(const RuleScaling& s, const NetworkState& net, const GradientSet& grads, double rho,
                       PerturbStep& out) {
  const int n = static_cast<int>(grads.grads.size());

  auto norm_of = [&](const Eigen::MatrixXd& m) {
    return s.rule.norm == NormKind::spectral ? spectral_norm(m) : m.norm();
  };
  const double scale = rho * s.global;

  switch (s.rule.tag) {
    case RuleTag::none:
      return;

    case RuleTag::sam_unnormalized: {
      double sq = 0;
      for (int l = 0; l < n; ++l) {
        out.per_layer_contrib[l] = s.numerator[l] * grads.fro[l];
        sq += out.per_layer_contrib[l] * out.per_layer_contrib[l];
        out.epsilon[l] = (scale * s.numerator[l]) * grads.grads[l];
      }
      out.v_norm = std::sqrt(sq);
      return;
    }

    case RuleTag::sam_layerwise_norm: {
      for (int l = 0; l < n; ++l) {
        const double g = norm_of(grads.grads[l]);
        out.per_layer_contrib[l] = g;
        if (g == 0) {
          out.degenerate = out.degenerate || rho > 0;
          continue;
        }
        out.epsilon[l] = (scale * s.numerator[l] / g) * grads.grads[l];
      }
      return;
    }

    case RuleTag::asam_elementwise:
    case RuleTag::asam_layerwise: {
      const bool elem = s.rule.tag == RuleTag::asam_elementwise;
      double total = 0;
      for (int l = 0; l < n; ++l) {
        const auto& W = net.layers[l];
        const double t = elem ? (W.cwiseAbs().cwiseProduct(grads.grads[l])).norm()
                              : W.norm() * grads.fro[l];
        out.per_layer_contrib[l] = s.denominator[l] * t;
        total += out.per_layer_contrib[l];
      }
      out.v_norm = total;
      if (total == 0) {
        out.degenerate = rho > 0;
        return;
      }
      for (int l = 0; l < n; ++l) {
        const auto& W = net.layers[l];
        const double k = scale * s.numerator[l] / total;
        if (elem)
          out.epsilon[l] = k * W.cwiseAbs2().cwiseProduct(grads.grads[l]);
        else
          out.epsilon[l] = (k * W.squaredNorm()) * grads.grads[l];
      }
      return;
    }

    default: {
      double sq = 0;
      for (int l = 0; l < n; ++l) {
        if (!s.mask[l]) continue;
        out.per_layer_contrib[l] = s.denominator[l] * norm_of(grads.grads[l]);
        sq += out.per_layer_contrib[l] * out.per_layer_contrib[l];
      }
      out.v_norm = std::sqrt(sq);
      if (out.v_norm == 0) {
        out.degenerate = rho > 0;
        return;
      }
      for (int l = 0; l < n; ++l)
        if (s.mask[l]) out.epsilon[l] = (scale * s.numerator[l] / out.v_norm) * grads.grads[l];
      return;
    }
  }
}

}  // namespace

PerturbStep compute_perturbation(const RuleScaling& s, const NetworkState& net, const GradientSet& grads,
                                 double rho) {
  if (rho < 0) throw std::invalid_argument("rho must be non-negative");
  const int n = static_cast<int>(grads.grads.size());
  if (n != static_cast<int>(net.layers.size()) || static_cast<int>(s.numerator.size()) != n)
    throw std::invalid_argument("gradient set does not match the network");
  PerturbStep out;
  out.chi = grads.chi.norm();
  out.per_layer_contrib.assign(n, 0.0);
  out.epsilon.resize(n);
  fill_perturbation(s, net, grads, rho, out);
  // Layers the rule left untouched get explicit zeros.
  for (int l = 0; l < n; ++l)
    if (out.epsilon[l].size() == 0) out.epsilon[l].setZero(grads.grads[l].rows(), grads.grads[l].cols());
  return out;
}

OptimizerConfig optimizer_bcd(const Parameterization& p, int width, double eta, double rho, LossKind loss) {
  OptimizerConfig cfg;
  cfg.scaling = rule_scaling_bcd(p, width);
  for (int l = 0; l <= p.L; ++l) cfg.lr_factors.push_back(npow(width, p.c[l]));
  cfg.eta = eta;
  cfg.rho = rho;
  cfg.loss = loss;
  return cfg;
}

OptimizerConfig optimizer_spectral(const PerturbationRule& rule, const std::vector<int>& dims, double eta,
                                   double rho, LossKind loss) {
  OptimizerConfig cfg;
  cfg.scaling = rule_scaling_spectral(rule, dims);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    cfg.lr_factors.push_back(spectral_scaling(dims[l], dims[l + 1]).lr_factor);
  cfg.eta = eta;
  cfg.rho = rho;
  cfg.loss = loss;
  return cfg;
}

namespace {

void descend(NetworkState& net, OptimizerState& state, const OptimizerConfig& cfg, const GradientSet& g,
             StepTelemetry* tel) {
  const int n = static_cast<int>(net.layers.size());
  if (cfg.momentum != 0 && state.velocity.size() != net.layers.size()) {
    state.velocity.clear();
    for (const auto& W : net.layers) state.velocity.push_back(Eigen::MatrixXd::Zero(W.rows(), W.cols()));
  }
  for (int l = 0; l < n; ++l) {
    const double lr = cfg.eta * cfg.lr_factors[l];
    if (cfg.weight_decay == 0 && cfg.momentum == 0) {
      if (tel) tel->dw_spec.push_back(lr * spectral_norm(g.grads[l]));
      net.layers[l].noalias() -= lr * g.grads[l];
      continue;
    }
    Eigen::MatrixXd step = g.grads[l];
    if (cfg.weight_decay != 0) step += cfg.weight_decay * net.layers[l];
    if (cfg.momentum != 0) {
      state.velocity[l] = cfg.momentum * state.velocity[l] + step;
      step = state.velocity[l];
    }
    if (tel) tel->dw_spec.push_back(lr * spectral_norm(step));
    net.layers[l] -= lr * step;
  }
  net.touch();
}

}  // namespace

StepResult sam_step(NetworkState& net, OptimizerState& state, const OptimizerConfig& cfg, const Batch& ascent,
                    const Batch& descent, const TelemetryRequest& req) {
  StepResult res;
  const PassCache clean = forward(net, ascent.inputs);
  const LossValue lv = evaluate_loss(cfg.loss, clean.f, ascent.labels, cfg.loss_scale);
  res.loss = lv.value;
  if (!std::isfinite(lv.value)) {
    res.diverged = true;
    return res;
  }
  const GradientSet g = backward(net, clean, lv.chi);
  const PerturbStep ps = compute_perturbation(cfg.scaling, net, g, cfg.rho);
  res.degenerate = ps.degenerate;

  const PassCache pert = forward(net, descent.inputs, &ps.epsilon);
  const LossValue lp = evaluate_loss(cfg.loss, pert.f, descent.labels, cfg.loss_scale);
  if (!std::isfinite(lp.value) || !finite_all(ps.epsilon)) {
    res.diverged = true;
    return res;
  }
  const GradientSet gp = backward(net, pert, lp.chi);

  StepTelemetry* tel = nullptr;
  if (req.level != TelemetryLevel::none) {
    tel = &res.telemetry;
    const int L = net.depth();
    const PassCache asc_pert = &ascent == &descent ? PassCache{} : forward(net, ascent.inputs, &ps.epsilon);
    const PassCache& ap = &ascent == &descent ? pert : asc_pert;
    for (int l = 1; l <= L; ++l) tel->dx_perturb.push_back(coordinate_scale(ap.x[l] - clean.x[l]));
    tel->df_perturb = coordinate_scale(ap.f - clean.f);
    tel->f = coordinate_scale(clean.f);
    tel->loss = lv.value;
    tel->v_norm = ps.v_norm;
    tel->v_contrib = ps.per_layer_contrib;
    tel->chi = ps.chi;
    tel->gap_lastlayer_abs = std::abs(ps.v_norm - ps.per_layer_contrib.back());
    for (const auto& e : ps.epsilon) tel->eps_fro.push_back(e.norm());
    if (req.level == TelemetryLevel::full) {
      for (const auto& e : ps.epsilon) tel->eps_spec.push_back(spectral_norm(e));
      for (const auto& W : net.layers) tel->w_spec.push_back(spectral_norm(W));
      if (req.probe && req.probe_init) {
        const PassCache now = forward(net, *req.probe);
        for (int l = 1; l <= L; ++l) tel->dx_update.push_back(coordinate_scale(now.x[l] - req.probe_init->x[l]));
      }
    }
  }

  descend(net, state, cfg, gp, req.level == TelemetryLevel::full ? tel : nullptr);
  if (!finite_all(net.layers)) res.diverged = true;
  return res;
}

StepResult sgd_step(NetworkState& net, OptimizerState& state, const OptimizerConfig& cfg, const Batch& batch) {
  StepResult res;
  const PassCache c = forward(net, batch.inputs);
  const LossValue lv = evaluate_loss(cfg.loss, c.f, batch.labels, cfg.loss_scale);
  res.loss = lv.value;
  if (!std::isfinite(lv.value)) {
    res.diverged = true;
    return res;
  }
  const GradientSet g = backward(net, c, lv.chi);
  descend(net, state, cfg, g, nullptr);
  if (!finite_all(net.layers)) res.diverged = true;
  return res;
}

}  // namespace mupp
