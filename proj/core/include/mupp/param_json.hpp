#pragma once

#include "mupp/param_algebra.hpp"

#include <string>

namespace mupp {

/// {L, a, b, c, d_layers, d_global, rule}; rationals as "p/q" strings.
/// rule is a tag string, or an object {tag, d_tilde, norm, sam_on_global_on_all}.
std::string parameterization_to_json(const Parameterization& p, int indent = 2);
/// Throws std::invalid_argument on schema errors or malformed rationals.
Parameterization parameterization_from_json(const std::string& text);

std::string phase_report_to_json(const PhaseReport& rep, int indent = 2);
/// Human-readable per-condition table.
std::string phase_report_table(const Parameterization& p, const PhaseReport& rep);

}  // namespace mupp
