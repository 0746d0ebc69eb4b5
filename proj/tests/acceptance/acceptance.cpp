// Runs every suite at full size and prints one verdict line per criterion.
#include <cstdio>
#include <map>

#include "feller/experiments.hpp"

namespace ex = feller::experiments;

// Wall-clock budget per criterion in seconds (single core).
const std::map<int, double> kBudget = {{1, 1.0},   {2, 5.0},   {3, 60.0},  {4, 60.0},
                                       {5, 60.0},  {6, 300.0}, {7, 10.0},  {8, 10.0},
                                       {9, 30.0},  {10, 300.0}, {11, 180.0}, {12, 300.0}};

int main() {
  const ex::json cfg = ex::default_config(false);
  std::map<int, const ex::Check*> by_criterion;
  std::vector<ex::SuiteResult> results;
  results.reserve(ex::suite_names().size());
  for (const auto& name : ex::suite_names()) {
    results.push_back(ex::run_suite(name, cfg));
    std::fprintf(stderr, "suite %s: %.1f s\n", name.c_str(), results.back().seconds);
  }
  for (const auto& r : results) {
    for (const auto& c : r.checks) by_criterion[c.criterion] = &c;
  }
  int failures = 0;
  for (int k = 1; k <= 12; ++k) {
    const auto it = by_criterion.find(k);
    if (it == by_criterion.end()) {
      std::printf("criterion %2d: FAIL (not run)\n", k);
      ++failures;
      continue;
    }
    const ex::Check& c = *it->second;
    const double budget = kBudget.at(k);
    const bool in_time = c.seconds <= budget;
    const bool pass = c.pass && in_time;
    std::printf("criterion %2d: %s  %s  [%.1f s of %.0f s%s]  %s\n", k, pass ? "PASS" : "FAIL",
                c.name.c_str(), c.seconds, budget, in_time ? "" : ", over budget",
                c.measured.dump().c_str());
    failures += !pass;
  }
  return failures == 0 ? 0 : 1;
}
