#pragma once

#include <filesystem>
#include <memory>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dcmdeid {

enum class EntityCategory { Name, Date, Id, Location, Contact, Age, Other };

std::string_view to_string(EntityCategory category) noexcept;

/// A detected PHI substring. Offsets are byte offsets into the document, half-open.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  EntityCategory category = EntityCategory::Other;
  double confidence = 1.0;
  std::string text;

  bool operator==(const EntitySpan&) const = default;
};

/// PHI detector interface. Implementations return raw spans in any order;
/// detect_entities() normalizes them.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<EntitySpan> find_spans(std::string_view text) const = 0;
};

/// Sort by start and merge overlapping spans (max confidence wins the
/// category). `text` fields are refreshed from the document.
std::vector<EntitySpan> merge_spans(std::vector<EntitySpan> spans, std::string_view document);

/// detector.find_spans + merge_spans. Empty text yields no spans.
std::vector<EntitySpan> detect_entities(const Detector& detector, std::string_view text);

/// Case-insensitive whole-token vocabulary of terms that are never PHI.
class Whitelist {
 public:
  Whitelist() = default;
  explicit Whitelist(std::vector<std::string> terms, std::filesystem::path source = {});

  /// One term per line, '#' comments. Throws EmptyWhitelist when no terms remain.
  static Whitelist parse(std::string_view text, std::filesystem::path source = {});
  static Whitelist load(const std::filesystem::path& path);
  /// Imaging vocabulary shipped with the library.
  static const Whitelist& bundled();

  bool contains(std::string_view token) const;
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  const std::set<std::string, std::less<>>& terms() const { return terms_; }
  const std::filesystem::path& source() const { return source_; }

 private:
  std::set<std::string, std::less<>> terms_;
  std::filesystem::path source_;
};

const char* bundled_whitelist_text() noexcept;

/// Drop spans whose text consists entirely of whitelisted tokens.
std::vector<EntitySpan> filter_whitelist(std::vector<EntitySpan> entities, const Whitelist& whitelist,
                                         std::string_view document);

/// Delete the given (sorted, disjoint) spans from `text`.
std::string remove_spans(std::string_view text, const std::vector<EntitySpan>& spans);

/// Detect, whitelist-filter and delete PHI from one value. PHI-free input is
/// returned unchanged.
std::string deidentified_element_val(const Detector& detector, const Whitelist& whitelist,
                                     std::string_view element_text);

/// Offline rule-based detector. Rule families:
///  - numeric dates (1/2/2023, 01-02-23, 2023-01-02) and DA-like YYYYMMDD runs
///  - phone numbers, e-mail addresses
///  - SSN-shaped ids, labelled ids (MRN/ID/Acc followed by a value), digit runs >= 6
///  - honorific-triggered names ("Dr. Smith": the name tokens, not the honorific)
///  - caret-structured person names (DOE^JOHN)
///  - capitalized or upper-case tokens from the bundled given-name/surname list
///  - runs of two or more upper-case words (free-text PN style, e.g. "DOE JOHN")
///  - ages ("45 year old", "45yo") and street addresses ("12 Oak Street")
class PatternDetector : public Detector {
 public:
  PatternDetector();
  std::vector<EntitySpan> find_spans(std::string_view text) const override;

  static const std::vector<std::string_view>& given_names();
  static const std::vector<std::string_view>& surnames();

 private:
  struct Rule {
    std::regex pattern;
    int group;
    EntityCategory category;
    double confidence;
  };
  std::vector<Rule> rules_;
  std::set<std::string, std::less<>> name_tokens_;
};

}  // namespace dcmdeid
