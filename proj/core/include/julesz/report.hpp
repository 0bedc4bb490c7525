#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace julesz {

struct IterationRecord {
  std::size_t iteration = 0;
  double style = 0.0;
  double content = 0.0;
  double diversity = 0.0;
  double objective = 0.0;
  double wall_ms = 0.0;

  bool operator==(const IterationRecord&) const = default;
};

/// Per-iteration training history plus summary diagnostics.
struct TrainReport {
  std::vector<IterationRecord> records;
  double wall_ms = 0.0;
  double initial_diversity = 0.0;
  double final_diversity = 0.0;
  double initial_style = 0.0;
  double final_style = 0.0;

  bool operator==(const TrainReport&) const = default;
};

inline constexpr const char* kReportHeader = "iteration,style,content,diversity,objective,wall_ms";

/// CSV with kReportHeader and one row per record, values in round-trip
/// precision.
void write_report_csv(const TrainReport& report, std::ostream& out);
void write_report_csv(const TrainReport& report, const std::filesystem::path& path);

/// Reads the records back. Throws FormatError naming the offending row.
std::vector<IterationRecord> read_report_csv(const std::filesystem::path& path);

}  // namespace julesz
