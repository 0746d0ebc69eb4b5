#pragma once

#include "json.hpp"
#include <string>
#include <vector>

namespace feller::experiments {

using json = nlohmann::ordered_json;

/// One acceptance check: a numbered criterion, a verdict and the measured values.
struct Check {
  int criterion = 0;
  std::string name;
  bool pass = false;
  json measured;
  double seconds = 0.0;  // wall clock; kept out of report.json
};

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;
  std::vector<Table> tables;
  json diagnostics = json::object();
  double seconds = 0.0;  // wall clock; kept out of report.json

  bool pass() const;
};

/// Built-in configuration. Quick mode shrinks grids, path counts and horizons.
json default_config(bool quick);

/// Overlays user JSON on the defaults. Throws ConfigError on unknown keys or
/// type mismatches.
json merge_config(const json& defaults, const json& user);

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const json& cfg);

SuiteResult run_kalman(const json& cfg);       // criteria 1, 9
SuiteResult run_perturb(const json& cfg);      // criteria 2, 3, 4, 5, 7, 8
SuiteResult run_mc_validate(const json& cfg);  // criterion 6
SuiteResult run_invariant(const json& cfg);    // criterion 10
SuiteResult run_heat(const json& cfg);         // criteria 11, 12

/// Suite names in run order.
const std::vector<std::string>& suite_names();
SuiteResult run_suite(const std::string& name, const json& cfg);

/// Deterministic report: config echo, checks, diagnostics, code version.
json make_report(const json& cfg, const std::vector<SuiteResult>& results);

/// Writes one CSV per table, headed by a '#' line with the config hash.
void write_tables(const std::string& dir, const json& cfg,
                  const std::vector<SuiteResult>& results);

std::string version();

}  // namespace feller::experiments
