#pragma once

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace mupp {

struct AcceptanceOptions {
  /// Criterion 10 gates only in strict mode.
  bool strict = false;
  int jobs = 1;
  /// When non-empty, CSV and JSON artifacts are written here.
  std::string out_dir;
  /// Criteria to run (1..10); empty runs all.
  std::set<int> only;
};

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  bool gating = true;
  double seconds = 0;
  std::vector<std::string> details;
};

/// Runs the selected criteria, printing one PASS/FAIL line per criterion
/// (followed by indented detail lines) to `log` as each completes.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts, std::ostream& log);
/// 0 when every gating criterion passed, 3 otherwise.
int acceptance_exit_code(const std::vector<CriterionResult>& results);

}  // namespace mupp
