#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcmdeid/action.hpp"

namespace dcmdeid {

struct RunConfig {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;

  /// Bundled profile name ("tcia" or "ps315"), ignored when rules_path is set.
  std::string profile = "tcia";
  /// Full rule document; may itself start with "@profile ...".
  std::optional<std::filesystem::path> rules_path;
  bool custom_rules = true;
  /// Custom overrides document; the bundled overlay is used when unset.
  std::optional<std::filesystem::path> custom_rules_path;
  bool private_dict = true;
  std::optional<std::filesystem::path> private_dict_path;
  bool whitelist = true;
  std::optional<std::filesystem::path> whitelist_path;

  int date_offset_days = 120;
  std::optional<std::string> salt;

  /// "pattern", "none", "remote" (URL from the environment) or a base URL.
  std::string detector = "pattern";
  double detector_threshold = 0.5;

  /// "off", "remote" (URL from the environment), a base URL, or a detections file path.
  std::string ocr = "off";
  bool ocr_strict = false;
  double ocr_min_confidence = 0.3;
  bool fail_safe_all = false;

  bool validate = true;
  std::optional<std::filesystem::path> validation_profiles_path;
  std::optional<std::filesystem::path> ignore_list_path;
  /// dciodvfy-compatible executable; its missing-attribute errors are repaired too.
  std::optional<std::filesystem::path> external_validator;

  unsigned workers = 1;

  /// Defaults: "<output_dir>.mappings.csv" and "<output_dir>.report.jsonl".
  std::optional<std::filesystem::path> mapping_csv;
  std::optional<std::filesystem::path> report_path;

  std::filesystem::path mapping_csv_path() const;
  std::filesystem::path report_file_path() const;
};

inline constexpr const char* kDetectorUrlEnv = "DCMDEID_DETECTOR_URL";
inline constexpr const char* kOcrUrlEnv = "DCMDEID_OCR_URL";

/// Replace remote URLs from DCMDEID_DETECTOR_URL / DCMDEID_OCR_URL when the
/// corresponding mode is remote.
void apply_environment(RunConfig& config);

struct DiscoveredFiles {
  std::vector<std::string> files;
  /// (relative path, reason)
  std::vector<std::pair<std::string, std::string>> skipped;
};

/// `.dcm` files and extensionless files with the DICM magic, relative to
/// `input_dir` with '/' separators, in lexicographic order. Throws IoError.
DiscoveredFiles discover_files(const std::filesystem::path& input_dir,
                               const std::optional<std::filesystem::path>& exclude = std::nullopt);

struct FileRecord {
  std::string path;
  bool ok = false;
  std::string error;
  std::map<std::string, double> timings_ms;
  std::map<ActionKind, std::size_t> actions;
  std::size_t degraded = 0;
  std::size_t private_rows = 0;
  std::size_t detector_calls = 0;
  std::size_t pixel_boxes = 0;
  std::size_t pixel_redactions = 0;
  std::size_t repairs = 0;
  std::size_t ignored_issues = 0;
  std::vector<std::string> notes;
};

struct RunReport {
  std::vector<FileRecord> records;
  std::vector<std::pair<std::string, std::string>> skipped;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::size_t pixel_redactions = 0;
  std::size_t repairs = 0;
  std::size_t degraded = 0;
  std::map<ActionKind, std::size_t> actions;
  double wall_seconds = 0.0;

  int exit_code() const { return failed == 0 ? 0 : 1; }
  /// One JSON object per file, then one "skipped" line per skipped file and a
  /// final summary line. Timings live only under "timings" keys.
  std::string to_jsonl() const;
  std::string summary() const;
};

/// Metadata de-identification, image de-identification, validation repair
/// and export for every discovered file. Per-file failures are recorded and
/// the run continues. Throws InvalidConfig for unusable configurations.
RunReport run(const RunConfig& config);

}  // namespace dcmdeid
