#pragma once

#include <string>
#include <vector>

#include "lorwave/types.hpp"

namespace lorwave {

// One verification row: a named check, the measured value against its bound,
// and the fitted constant when the bound carries a free universal constant.
// `reference` names the identity/estimate being checked ("plumbing" for
// artifact-internal checks). `advisory` rows never gate the exit code.
struct VerificationRow {
  std::string check_id;
  std::string reference;
  double measured = 0.0;
  double bound = 0.0;
  double fitted_constant = 0.0;  // 0 when not applicable
  double margin = 0.0;           // bound - measured (sign convention: >=0 pass)
  bool pass = false;
  bool advisory = false;
  double runtime_seconds = 0.0;
};

struct Report {
  std::string title;
  std::vector<std::pair<std::string, std::string>> header;  // effective config echo
  std::vector<VerificationRow> rows;

  bool all_pass() const {
    for (const auto& r : rows)
      if (!r.advisory && !r.pass) return false;
    return true;
  }
  void add(VerificationRow row) { rows.push_back(std::move(row)); }
};

enum class ReportFormat { json, csv };

// Stable field order, 17 significant digits. Throws on IO failure.
void write_report(const Report& report, const std::string& path, ReportFormat format);

// Round-trip reader used by tests (CSV or JSON by extension sniffing).
Report read_report(const std::string& path);

std::string format_double(double v);  // %.17g

}  // namespace lorwave
