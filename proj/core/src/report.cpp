#include "lorwave/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace lorwave {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

const char* kCsvHeader =
    "check_id,reference,measured,bound,fitted_constant,margin,pass,advisory,"
    "runtime_seconds";

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void write_report(const Report& report, const std::string& path, ReportFormat format) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open report file: " + path);
  if (format == ReportFormat::csv) {
    os << "# " << report.title << "\n";
    for (const auto& [k, v] : report.header) os << "# " << k << "=" << v << "\n";
    os << kCsvHeader << "\n";
    for (const auto& r : report.rows) {
      os << csv_escape(r.check_id) << ',' << csv_escape(r.reference) << ','
         << format_double(r.measured) << ',' << format_double(r.bound) << ','
         << format_double(r.fitted_constant) << ',' << format_double(r.margin) << ','
         << (r.pass ? 1 : 0) << ',' << (r.advisory ? 1 : 0) << ','
         << format_double(r.runtime_seconds) << "\n";
    }
  } else {
    nlohmann::ordered_json j;
    j["title"] = report.title;
    nlohmann::ordered_json h = nlohmann::ordered_json::object();
    for (const auto& [k, v] : report.header) h[k] = v;
    j["config"] = h;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
      nlohmann::ordered_json row;
      row["check_id"] = r.check_id;
      row["reference"] = r.reference;
      row["measured"] = r.measured;
      row["bound"] = r.bound;
      row["fitted_constant"] = r.fitted_constant;
      row["margin"] = r.margin;
      row["pass"] = r.pass;
      row["advisory"] = r.advisory;
      row["runtime_seconds"] = r.runtime_seconds;
      j["rows"].push_back(row);
    }
    os << j.dump(2) << "\n";
  }
  if (!os) throw std::runtime_error("report write failed: " + path);
}

Report read_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open report file: " + path);
  Report report;
  const bool csv = path.size() > 4 && path.substr(path.size() - 4) == ".csv";
  if (!csv) {
    nlohmann::json j;
    is >> j;
    report.title = j.value("title", "");
    if (j.contains("config"))
      for (auto it = j["config"].begin(); it != j["config"].end(); ++it)
        report.header.emplace_back(it.key(), it.value().get<std::string>());
    for (const auto& row : j["rows"]) {
      VerificationRow r;
      r.check_id = row.value("check_id", "");
      r.reference = row.value("reference", "");
      r.measured = row.value("measured", 0.0);
      r.bound = row.value("bound", 0.0);
      r.fitted_constant = row.value("fitted_constant", 0.0);
      r.margin = row.value("margin", 0.0);
      r.pass = row.value("pass", false);
      r.advisory = row.value("advisory", false);
      r.runtime_seconds = row.value("runtime_seconds", 0.0);
      report.rows.push_back(std::move(r));
    }
    return report;
  }
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (report.title.empty()) report.title = line.substr(2);
      continue;
    }
    if (!header_seen) {
      header_seen = true;  // column header row
      continue;
    }
    // naive split is fine: numeric fields never contain commas and ids are
    // written unquoted unless they contain one
    std::vector<std::string> fields;
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
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 9) throw std::runtime_error("malformed report row: " + line);
    VerificationRow r;
    r.check_id = fields[0];
    r.reference = fields[1];
    r.measured = std::stod(fields[2]);
    r.bound = std::stod(fields[3]);
    r.fitted_constant = std::stod(fields[4]);
    r.margin = std::stod(fields[5]);
    r.pass = fields[6] == "1";
    r.advisory = fields[7] == "1";
    r.runtime_seconds = std::stod(fields[8]);
    report.rows.push_back(std::move(r));
  }
  return report;
}

}  // namespace lorwave
