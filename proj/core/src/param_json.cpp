#include "mupp/param_json.hpp"

#include "json_internal.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace mupp {

namespace detail {

json rational_json(const Rational& r) { return to_string(r); }

Rational rational_from_json(const json& j, const std::string& where) {
  try {
    if (j.is_string()) return parse_rational(j.get<std::string>());
    if (j.is_number_integer()) return Rational(j.get<std::int64_t>());
    if (j.is_number_float()) {
      std::ostringstream os;
      os << std::setprecision(15) << j.get<double>();
      return parse_rational(os.str());
    }
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(where + ": " + e.what());
  }
  throw std::invalid_argument(where + ": expected a rational string such as \"1/2\"");
}

json rationals_json(const std::vector<Rational>& v) {
  json a = json::array();
  for (const auto& r : v) a.push_back(rational_json(r));
  return a;
}

std::vector<Rational> rationals_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw std::invalid_argument(where + ": expected an array");
  std::vector<Rational> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(rational_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* k) { return it.key() == k; });
    if (!ok) throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
  }
}

json rule_json(const PerturbationRule& r) {
  if (r.d_tilde.empty() && r.norm == NormKind::frobenius && !r.sam_on_global_on_all)
    return to_string(r.tag);
  json j;
  j["tag"] = to_string(r.tag);
  if (!r.d_tilde.empty()) j["d_tilde"] = rationals_json(r.d_tilde);
  j["norm"] = r.norm == NormKind::frobenius ? "frobenius" : "spectral";
  if (r.sam_on_global_on_all) j["sam_on_global_on_all"] = true;
  return j;
}

PerturbationRule rule_from(const json& j) {
  PerturbationRule r;
  if (j.is_string()) {
    r.tag = parse_rule_tag(j.get<std::string>());
    return r;
  }
  reject_unknown_keys(j, {"tag", "d_tilde", "norm", "sam_on_global_on_all"}, "rule");
  if (!j.contains("tag")) throw std::invalid_argument("rule: missing 'tag'");
  r.tag = parse_rule_tag(j.at("tag").get<std::string>());
  if (j.contains("d_tilde")) r.d_tilde = rationals_from_json(j.at("d_tilde"), "rule.d_tilde");
  if (j.contains("norm")) {
    auto n = j.at("norm").get<std::string>();
    if (n == "frobenius") r.norm = NormKind::frobenius;
    else if (n == "spectral") r.norm = NormKind::spectral;
    else throw std::invalid_argument("rule.norm: expected frobenius or spectral");
  }
  if (j.contains("sam_on_global_on_all")) r.sam_on_global_on_all = j.at("sam_on_global_on_all").get<bool>();
  return r;
}

json parameterization_json(const Parameterization& p) {
  json j;
  j["L"] = p.L;
  j["a"] = rationals_json(p.a);
  j["b"] = rationals_json(p.b);
  j["c"] = rationals_json(p.c);
  j["d_layers"] = rationals_json(p.d_layers);
  j["d_global"] = rational_json(p.d_global);
  j["rule"] = rule_json(p.rule);
  return j;
}

Parameterization parameterization_from(const json& j) {
  reject_unknown_keys(j, {"L", "a", "b", "c", "d_layers", "d_global", "rule"}, "parameterization");
  for (const char* k : {"L", "b", "c"})
    if (!j.contains(k)) throw std::invalid_argument(std::string("parameterization: missing '") + k + "'");
  Parameterization p;
  if (!j.at("L").is_number_integer()) throw std::invalid_argument("parameterization.L: expected integer");
  p.L = j.at("L").get<int>();
  const std::size_t n = p.L >= 1 ? static_cast<std::size_t>(p.L) + 1 : 0;
  p.b = rationals_from_json(j.at("b"), "b");
  p.c = rationals_from_json(j.at("c"), "c");
  p.a = j.contains("a") ? rationals_from_json(j.at("a"), "a") : std::vector<Rational>(n, 0);
  p.d_layers = j.contains("d_layers") ? rationals_from_json(j.at("d_layers"), "d_layers")
                                      : std::vector<Rational>(n, 0);
  p.d_global = j.contains("d_global") ? rational_from_json(j.at("d_global"), "d_global") : Rational(0);
  if (j.contains("rule")) p.rule = rule_from(j.at("rule"));
  p.validate();
  return p;
}

}  // namespace detail

std::string parameterization_to_json(const Parameterization& p, int indent) {
  return detail::parameterization_json(p).dump(indent);
}

Parameterization parameterization_from_json(const std::string& text) {
  detail::json j;
  try {
    j = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
  }
  try {
    return detail::parameterization_from(j);
  } catch (const detail::json::exception& e) {
    throw std::invalid_argument(std::string("parameterization: ") + e.what());
  }
}

namespace {

detail::json ext_json(const ExtRational& r) { return to_string(r); }

}  // namespace

std::string phase_report_to_json(const PhaseReport& rep, int indent) {
  using detail::json;
  json j;
  j["c_nabla"] = to_string(rep.c_nabla);
  j["r"] = to_string(rep.r);
  j["r_tilde"] = ext_json(rep.r_tilde);
  j["r_l"] = detail::rationals_json(rep.r_l);
  json rt = json::array();
  for (const auto& x : rep.r_tilde_l) rt.push_back(ext_json(x));
  j["r_tilde_l"] = rt;
  j["stable"] = rep.stable;
  j["stability"] = {{"init", rep.stability.init},
                    {"feature", rep.stability.feature},
                    {"output", rep.stability.output},
                    {"perturbation_feature", rep.stability.perturbation_feature},
                    {"perturbation_output", rep.stability.perturbation_output}};
  j["nontrivial"] = rep.nontrivial;
  j["feature_learning"] = rep.feature_learning;
  json ps = json::array();
  for (auto s : rep.perturbation_status) ps.push_back(to_string(s));
  j["perturbation_status"] = ps;
  j["output_perturbation_nontrivial"] = rep.output_perturbation_nontrivial;
  j["norm_constraint_saturated"] = rep.norm_constraint_saturated;
  j["norm_constraints_valid"] = rep.norm_constraints_valid;
  json pe = json::array();
  for (const auto& x : rep.perturbation_exponent) pe.push_back(ext_json(x));
  j["perturbation_exponent"] = pe;
  j["violations"] = rep.violations;
  return j.dump(indent);
}

std::string phase_report_table(const Parameterization& p, const PhaseReport& rep) {
  std::ostringstream os;
  auto mark = [](bool ok) { return ok ? "pass" : "FAIL"; };
  os << "c_nabla = " << to_string(rep.c_nabla) << "   r = " << to_string(rep.r)
     << "   r_tilde = " << to_string(rep.r_tilde) << "\n";
  os << "stability\n";
  os << "  init (b_1=0, b_l=1/2, b_{L+1}>=1/2)   " << mark(rep.stability.init) << "\n";
  os << "  feature (r>=0)                        " << mark(rep.stability.feature) << "\n";
  os << "  output (c_{L+1}>=1, b_{L+1}+r>=1)     " << mark(rep.stability.output) << "\n";
  os << "  perturbation feature (r_tilde>=0)     " << mark(rep.stability.perturbation_feature) << "\n";
  os << "  perturbation output                   " << mark(rep.stability.perturbation_output) << "\n";
  os << "stable: " << (rep.stable ? "yes" : "no") << "   nontrivial: " << (rep.nontrivial ? "yes" : "no")
     << "   output perturbation nontrivial: " << (rep.output_perturbation_nontrivial ? "yes" : "no") << "\n";
  os << "layer  role         r_l      r_tilde_l  feature  perturbation     norm-saturated\n";
  for (int l = 1; l <= p.L + 1; ++l) {
    const bool hidden = l <= p.L;
    os << std::left << std::setw(7) << l << std::setw(13) << to_string(role_of(l, p.L))
       << std::setw(9) << (hidden ? to_string(rep.r_l[l - 1]) : "-") << std::setw(11)
       << (hidden ? to_string(rep.r_tilde_l[l - 1]) : "-") << std::setw(9)
       << (hidden ? (rep.feature_learning[l - 1] ? "yes" : "no") : "-") << std::setw(17)
       << to_string(rep.perturbation_status[l - 1])
       << (rep.norm_constraint_saturated[l - 1] ? "yes" : "no") << "\n";
  }
  for (const auto& v : rep.violations) os << "  ! " << v << "\n";
  return os.str();
}

}  // namespace mupp
