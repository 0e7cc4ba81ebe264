#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dcmdeid/dataset.hpp"
#include "dcmdeid/pixel_deid.hpp"

namespace dcmdeid {

enum class PhiFamily { Name, Date, Id, Location, Contact, Age };

std::string_view to_string(PhiFamily f) noexcept;
std::optional<PhiFamily> parse_phi_family(std::string_view s) noexcept;
std::set<PhiFamily> all_phi_families();

struct CorpusSpec {
  std::size_t n_files = 10;
  std::uint64_t seed = 1;
  std::set<PhiFamily> phi_mix = all_phi_families();
  /// Fraction of files carrying burned-in text.
  double pixel_text_rate = 0.2;
  /// Offset the key's shifted dates assume.
  int date_offset_days = 120;
};

/// What the scorer expects at one element path.
struct KeyEntry {
  enum class Kind {
    Value,   ///< rendered value must equal `expected`
    Absent,  ///< element must be gone
    Uid,     ///< consistent pseudonym per source UID
    Pid,     ///< consistent pseudonym per source patient id
  };
  enum class Label { Standard, Phi, Private, Validation, Custom };

  std::string path;
  std::string name;
  Kind kind = Kind::Value;
  std::string expected;
  std::string source;
  Label label = Label::Standard;
};

struct KeyBox {
  TextBox box;
  bool phi = false;
};

struct FileKey {
  std::string path;
  std::vector<KeyEntry> entries;
  /// frame index -> burned-in text boxes
  std::map<std::size_t, std::vector<KeyBox>> frames;
};

struct AnswerKey {
  std::uint64_t seed = 0;
  int date_offset_days = 120;
  std::vector<FileKey> files;

  std::size_t entry_count() const;
  std::string to_json() const;
  static AnswerKey parse(std::string_view json_text);
  static AnswerKey load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

std::string_view to_string(KeyEntry::Kind k) noexcept;
std::string_view to_string(KeyEntry::Label l) noexcept;

struct GeneratedFile {
  std::string path;
  DataSet dataset;
};

struct Corpus {
  std::vector<GeneratedFile> files;
  AnswerKey key;
  /// Burned-in text boxes in the OCR detections format.
  DetectionsFile detections;
};

/// Deterministic for a given spec. Throws SpecError for invalid specs.
Corpus generate_corpus(const CorpusSpec& spec);

/// Writes <dir>/dicom/..., <dir>/answer_key.json and <dir>/detections.json.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// 1 - levenshtein(expected, produced) / max(len) after stripping trailing
/// spaces and NULs; 1.0 for two empty strings.
double check_score(std::string_view expected, std::string_view produced);

/// Value rendering shared by the generator and the scorer: trimmed text for
/// string VRs, lowercase hex of the raw bytes otherwise.
std::string render_value(const DataElement& e);

struct Mismatch {
  std::string file;
  std::string path;
  std::string name;
  std::string expected;
  std::string produced;
  bool produced_present = false;
  double score = 0.0;
  std::string category;
};

struct ScoreReport {
  static constexpr std::array<std::string_view, 8> kBucketNames = {
      "1.0", "0.0", "(0.0,0.25)", "[0.25,0.4)", "[0.4,0.5)", "[0.5,0.7)", "[0.7,0.8)", "[0.8,1.0)"};
  static constexpr std::array<std::string_view, 4> kCategories = {"PHI detection", "private tags", "validation",
                                                                  "custom rules"};

  std::size_t total = 0;
  std::size_t matched = 0;
  std::vector<Mismatch> mismatches;
  /// Display name -> mismatch count.
  std::map<std::string, std::size_t> per_tag;
  std::array<std::size_t, 8> histogram{};
  std::map<std::string, std::size_t> categories;

  double accuracy() const { return total == 0 ? 100.0 : 100.0 * static_cast<double>(matched) / static_cast<double>(total); }
  std::string table() const;
  std::string to_json() const;
};

/// Histogram bucket index for a mismatch score.
std::size_t score_bucket(double score);

/// Category for a mismatch label.
std::string_view category_for(KeyEntry::Label label) noexcept;

/// Compare every key entry against the files under `output_dir`. Pixel boxes
/// are scored against the originals under `source_dir`. Throws MissingOutputFile.
ScoreReport score_run(const AnswerKey& key, const std::filesystem::path& output_dir,
                      const std::filesystem::path& source_dir);

}  // namespace dcmdeid
