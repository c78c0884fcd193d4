#include "cpi/harness/report.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cpi/errors.hpp"

namespace cpi::harness {

double attack_success_rate(const std::vector<CaseRecord>& records) {
  int total = 0, hits = 0;
  for (const auto& r : records) {
    if (r.failed) continue;
    ++total;
    hits += r.predicted_class == r.true_class;
  }
  if (total == 0) throw ConfigError("attack success rate of an empty record set");
  return double(hits) / double(total);
}

Aggregates aggregate(const std::vector<CaseRecord>& records) {
  Aggregates a;
  for (const auto& r : records) {
    if (r.failed) {
      ++a.failures;
      continue;
    }
    ++a.cases;
    a.mean_accuracy += r.accuracy;
    a.mean_undefended_accuracy += r.undefended_accuracy;
    a.mean_defense_seconds += r.defense_seconds;
    a.mean_pool_seconds += r.pool_seconds;
    a.mean_total_seconds += r.total_seconds;
  }
  if (a.cases == 0) return a;
  a.success_rate = attack_success_rate(records);
  const double n = a.cases;
  a.mean_accuracy /= n;
  a.mean_undefended_accuracy /= n;
  a.mean_defense_seconds /= n;
  a.mean_pool_seconds /= n;
  a.mean_total_seconds /= n;
  return a;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + name + "' (expected json or csv)");
}

namespace {

nlohmann::json aggregates_json(const Aggregates& a) {
  return {{"cases", a.cases},
          {"failures", a.failures},
          {"success_rate", a.success_rate},
          {"mean_accuracy", a.mean_accuracy},
          {"mean_undefended_accuracy", a.mean_undefended_accuracy},
          {"mean_defense_seconds", a.mean_defense_seconds},
          {"mean_pool_seconds", a.mean_pool_seconds},
          {"mean_total_seconds", a.mean_total_seconds}};
}

Aggregates aggregates_from(const nlohmann::json& j) {
  Aggregates a;
  a.cases = j.at("cases");
  a.failures = j.at("failures");
  a.success_rate = j.at("success_rate");
  a.mean_accuracy = j.at("mean_accuracy");
  a.mean_undefended_accuracy = j.at("mean_undefended_accuracy");
  a.mean_defense_seconds = j.at("mean_defense_seconds");
  a.mean_pool_seconds = j.at("mean_pool_seconds");
  a.mean_total_seconds = j.at("mean_total_seconds");
  return a;
}

const char* kColumns[] = {"case_id",         "failed",          "error",          "true_class",
                          "true_value",      "predicted_class", "probabilities",  "accuracy",
                          "undefended_accuracy", "split_seconds", "target_seconds", "pool_seconds",
                          "defense_seconds", "attack_seconds",  "total_seconds",  "iterations",
                          "terminated_by",   "theta_changes"};

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

double parse_num(const std::string& s) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw IoError("bad number '" + s + "' in report");
  return v;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "|" : "") + num(v[i]);
  return out;
}

std::vector<double> split_list(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::size_t at = 0;
  while (true) {
    const auto bar = s.find('|', at);
    out.push_back(parse_num(s.substr(at, bar - at)));
    if (bar == std::string::npos) break;
    at = bar + 1;
  }
  return out;
}

std::string escape(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    if (c == '\n') {
      out += ' ';
      continue;
    }
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

nlohmann::json report_to_json(const Report& r) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : r.cases)
    cases.push_back({{"case_id", c.case_id},
                     {"failed", c.failed},
                     {"error", c.error},
                     {"true_class", c.true_class},
                     {"true_value", c.true_value},
                     {"predicted_class", c.predicted_class},
                     {"probabilities", c.probabilities},
                     {"accuracy", c.accuracy},
                     {"undefended_accuracy", c.undefended_accuracy},
                     {"split_seconds", c.split_seconds},
                     {"target_seconds", c.target_seconds},
                     {"pool_seconds", c.pool_seconds},
                     {"defense_seconds", c.defense_seconds},
                     {"attack_seconds", c.attack_seconds},
                     {"total_seconds", c.total_seconds},
                     {"iterations", c.iterations},
                     {"terminated_by", c.terminated_by},
                     {"theta_changes", c.theta_changes}});
  return {{"method", r.method},
          {"label", r.label},
          {"config", r.config},
          {"cases", cases},
          {"aggregates", aggregates_json(r.aggregates)}};
}

Report report_from_json(const nlohmann::json& j) {
  Report r;
  try {
    r.method = j.at("method");
    r.label = j.value("label", "");
    r.config = j.value("config", nlohmann::json());
    for (const auto& c : j.at("cases")) {
      CaseRecord x;
      x.case_id = c.at("case_id");
      x.failed = c.at("failed");
      x.error = c.at("error");
      x.true_class = c.at("true_class");
      x.true_value = c.at("true_value");
      x.predicted_class = c.at("predicted_class");
      x.probabilities = c.at("probabilities").get<std::vector<double>>();
      x.accuracy = c.at("accuracy");
      x.undefended_accuracy = c.at("undefended_accuracy");
      x.split_seconds = c.at("split_seconds");
      x.target_seconds = c.at("target_seconds");
      x.pool_seconds = c.at("pool_seconds");
      x.defense_seconds = c.at("defense_seconds");
      x.attack_seconds = c.at("attack_seconds");
      x.total_seconds = c.at("total_seconds");
      x.iterations = c.at("iterations");
      x.terminated_by = c.at("terminated_by");
      x.theta_changes = c.at("theta_changes").get<std::vector<double>>();
      r.cases.push_back(std::move(x));
    }
    r.aggregates = aggregates_from(j.at("aggregates"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string report_to_csv(const Report& r) {
  std::ostringstream s;
  for (std::size_t i = 0; i < std::size(kColumns); ++i) s << (i ? "," : "") << kColumns[i];
  s << '\n';
  for (const auto& c : r.cases) {
    s << c.case_id << ',' << int(c.failed) << ',' << escape(c.error) << ',' << c.true_class << ','
      << num(c.true_value) << ',' << c.predicted_class << ',' << join(c.probabilities) << ','
      << num(c.accuracy) << ',' << num(c.undefended_accuracy) << ',' << num(c.split_seconds) << ','
      << num(c.target_seconds) << ',' << num(c.pool_seconds) << ',' << num(c.defense_seconds) << ','
      << num(c.attack_seconds) << ',' << num(c.total_seconds) << ',' << c.iterations << ','
      << escape(c.terminated_by) << ',' << join(c.theta_changes) << '\n';
  }
  s << "#method," << escape(r.method) << '\n';
  s << "#label," << escape(r.label) << '\n';
  s << "#config," << escape(r.config.dump()) << '\n';
  const auto agg = aggregates_json(r.aggregates);
  for (const auto& [k, v] : agg.items())
    s << "#aggregate," << k << ',' << (v.is_number_integer() ? std::to_string(v.get<long>()) : num(v.get<double>()))
      << '\n';
  return s.str();
}

Report report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty report");
  Report r;
  nlohmann::json agg;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_row(line);
    if (line[0] == '#') {
      if (f.size() < 2) throw IoError("bad footer row in report");
      if (f[0] == "#method") r.method = f[1];
      else if (f[0] == "#label") r.label = f[1];
      else if (f[0] == "#config") r.config = f[1].empty() ? nlohmann::json() : nlohmann::json::parse(f[1]);
      else if (f[0] == "#aggregate" && f.size() == 3) {
        if (f[1] == "cases" || f[1] == "failures") agg[f[1]] = std::stoi(f[2]);
        else agg[f[1]] = parse_num(f[2]);
      }
      continue;
    }
    if (f.size() != std::size(kColumns)) throw IoError("report row has the wrong column count");
    CaseRecord c;
    c.case_id = std::stoi(f[0]);
    c.failed = f[1] == "1";
    c.error = f[2];
    c.true_class = std::stoi(f[3]);
    c.true_value = parse_num(f[4]);
    c.predicted_class = std::stoi(f[5]);
    c.probabilities = split_list(f[6]);
    c.accuracy = parse_num(f[7]);
    c.undefended_accuracy = parse_num(f[8]);
    c.split_seconds = parse_num(f[9]);
    c.target_seconds = parse_num(f[10]);
    c.pool_seconds = parse_num(f[11]);
    c.defense_seconds = parse_num(f[12]);
    c.attack_seconds = parse_num(f[13]);
    c.total_seconds = parse_num(f[14]);
    c.iterations = std::stoi(f[15]);
    c.terminated_by = f[16];
    c.theta_changes = split_list(f[17]);
    r.cases.push_back(std::move(c));
  }
  try {
    r.aggregates = aggregates_from(agg);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("report is missing aggregate rows: ") + e.what());
  }
  return r;
}

void emit_report(const Report& r, const std::string& path, ReportFormat format) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report '" + path + "'");
  if (format == ReportFormat::json) out << std::setprecision(17) << report_to_json(r).dump(1) << '\n';
  else out << report_to_csv(r);
  if (!out) throw IoError("failed writing report '" + path + "'");
}

Report parse_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return report_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(std::string("malformed report: ") + e.what());
    }
  }
  return report_from_csv(text);
}

std::string tradeoff_csv(const std::vector<Report>& reports) {
  std::ostringstream s;
  s << "label,method,success_rate,target_accuracy\n";
  for (const auto& r : reports)
    s << escape(r.label) << ',' << escape(r.method) << ',' << num(r.aggregates.success_rate) << ','
      << num(r.aggregates.mean_accuracy) << '\n';
  return s.str();
}

}  // namespace cpi::harness
