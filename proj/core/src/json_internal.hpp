#pragma once

#include "mupp/param_algebra.hpp"

#include <json.hpp>

#include <initializer_list>
#include <string>

namespace mupp::detail {

using json = nlohmann::json;

json rational_json(const Rational& r);
Rational rational_from_json(const json& j, const std::string& where);
json rationals_json(const std::vector<Rational>& v);
std::vector<Rational> rationals_from_json(const json& j, const std::string& where);

json parameterization_json(const Parameterization& p);
Parameterization parameterization_from(const json& j);
PerturbationRule rule_from(const json& j);
json rule_json(const PerturbationRule& r);

/// Throws std::invalid_argument naming the first key not in `allowed`.
void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where);

}  // namespace mupp::detail
