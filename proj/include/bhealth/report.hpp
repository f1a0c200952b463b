#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

namespace bhealth {

/// Shortest "%.<digits>g" rendering; CSV reports use 10 digits.
std::string format_number(double value, int digits = 10);

/// Minimal CSV writer. Throws IoError when the file cannot be written.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& file, const std::vector<std::string>& header);
  CsvWriter& cell(const std::string& text);
  CsvWriter& cell(double value);
  CsvWriter& cell(long long value);
  CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
  void end_row();
  /// Flushes and checks the stream state.
  void close();
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::string row_;
  bool first_ = true;
};

/// Warnings go to stderr unless silenced (tests and selftest silence them).
void set_warnings_enabled(bool enabled);
int warning_count();

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

/// Content hash over every regular file below `dir`, visited in sorted
/// relative-path order; the relative path is hashed along with the bytes.
std::string dataset_fingerprint(const std::filesystem::path& dir);

std::string artifact_version();

/// Everything a run writes besides its CSVs. No timestamps, so two equal
/// runs produce equal bytes.
struct RunRecord {
  std::string command;
  nlohmann::json config;  // echo of the effective configuration
  std::filesystem::path dataset_dir;  // empty when the run reads no dataset
  std::vector<std::filesystem::path> artifacts;
};

/// Writes `manifest.json` into `out_dir` and returns the full artifact list
/// (the manifest last).
std::vector<std::filesystem::path> emit_report(const RunRecord& record, const std::filesystem::path& out_dir);

}  // namespace bhealth
