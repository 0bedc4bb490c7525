#include "julesz/report.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "julesz/errors.hpp"

namespace julesz {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& field, const std::string& where) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end) throw FormatError(where + ": bad number '" + field + "'");
  return v;
}

}  // namespace

void write_report_csv(const TrainReport& report, std::ostream& out) {
  out << kReportHeader << '\n';
  for (const auto& r : report.records) {
    out << r.iteration << ',' << fmt(r.style) << ',' << fmt(r.content) << ',' << fmt(r.diversity)
        << ',' << fmt(r.objective) << ',' << fmt(r.wall_ms) << '\n';
  }
}

void write_report_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_report_csv(report, out);
}

std::vector<IterationRecord> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw FormatError(path.string() + ": row 1: expected header '" + std::string(kReportHeader) +
                      "'");
  }
  std::vector<IterationRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto where = path.string() + ": row " + std::to_string(row);
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6) {
      throw FormatError(where + ": expected 6 fields, got " + std::to_string(fields.size()));
    }
    IterationRecord r;
    const double it = parse_double(fields[0], where);
    if (it < 0 || it != static_cast<double>(static_cast<std::size_t>(it))) {
      throw FormatError(where + ": bad iteration '" + fields[0] + "'");
    }
    r.iteration = static_cast<std::size_t>(it);
    r.style = parse_double(fields[1], where);
    r.content = parse_double(fields[2], where);
    r.diversity = parse_double(fields[3], where);
    r.objective = parse_double(fields[4], where);
    r.wall_ms = parse_double(fields[5], where);
    if (!records.empty() && r.iteration <= records.back().iteration) {
      throw FormatError(where + ": iteration index not increasing");
    }
    records.push_back(r);
  }
  return records;
}

}  // namespace julesz
