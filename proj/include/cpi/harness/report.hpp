#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace cpi::harness {

struct CaseRecord {
  int case_id = 0;
  bool failed = false;
  std::string error;
  int true_class = 0;
  double true_value = 0;
  int predicted_class = 0;
  std::vector<double> probabilities;
  double accuracy = 0;             // of the released (possibly defended) model
  double undefended_accuracy = 0;  // of the plainly trained target
  double split_seconds = 0;
  double target_seconds = 0;
  double pool_seconds = 0;     // defender pool build (part of defense_seconds)
  double defense_seconds = 0;  // everything the method adds after plain training
  double attack_seconds = 0;
  double total_seconds = 0;
  int iterations = 0;  // arms-race rounds (0 when not applicable)
  std::string terminated_by;
  std::vector<double> theta_changes;
};

struct Aggregates {
  int cases = 0;
  int failures = 0;
  double success_rate = 0;
  double mean_accuracy = 0;
  double mean_undefended_accuracy = 0;
  double mean_defense_seconds = 0;
  double mean_pool_seconds = 0;
  double mean_total_seconds = 0;
};

struct Report {
  std::string method;
  std::string label;  // e.g. the sweep point
  nlohmann::json config;
  std::vector<CaseRecord> cases;
  Aggregates aggregates;
};

// N_p / N_t over non-failed records.
double attack_success_rate(const std::vector<CaseRecord>& records);
Aggregates aggregate(const std::vector<CaseRecord>& records);

enum class ReportFormat { json, csv };
ReportFormat parse_report_format(const std::string& name);

nlohmann::json report_to_json(const Report& r);
Report report_from_json(const nlohmann::json& j);
// One row per case, then "#"-prefixed footer rows for the label, method,
// config and aggregates. List fields are '|'-separated.
std::string report_to_csv(const Report& r);
Report report_from_csv(const std::string& text);

void emit_report(const Report& r, const std::string& path, ReportFormat format);
Report parse_report(const std::string& path);

// Plot-ready rows: label, method, success rate, mean target accuracy.
std::string tradeoff_csv(const std::vector<Report>& reports);

}  // namespace cpi::harness
