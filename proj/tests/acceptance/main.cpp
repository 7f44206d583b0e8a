// Runs the acceptance criteria and prints one line per criterion.

#include "mupp/acceptance.hpp"
#include "mupp/parallel.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  mupp::tune_allocator();
  CLI::App app{"Acceptance suite"};
  mupp::AcceptanceOptions opts;
  std::vector<int> only;
  app.add_flag("--strict", opts.strict, "Let the soft hyperparameter-grid criterion gate");
  app.add_option("--only", only, "Criterion numbers to run")->check(CLI::Range(1, 10));
  app.add_option("--jobs", opts.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", opts.out_dir, "Write sweep artifacts here");
  CLI11_PARSE(app, argc, argv);
  opts.only.insert(only.begin(), only.end());
  const auto results = mupp::run_acceptance(opts, std::cout);
  return mupp::acceptance_exit_code(results);
}
