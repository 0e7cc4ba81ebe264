#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dcmdeid/dataset.hpp"

namespace dcmdeid {

struct ValidationIssue {
  enum class Kind { MissingAttribute };
  Kind kind = Kind::MissingAttribute;
  /// Absent when an external validator names a keyword the dictionary does not know.
  std::optional<Tag> tag;
  std::string keyword;

  bool operator==(const ValidationIssue&) const = default;
};

/// Required top-level attributes per SOP class.
class RequiredAttributeProfiles {
 public:
  /// Format:
  ///   [1.2.840.10008.5.1.4.1.1.2] CT Image Storage
  ///   PatientName
  ///   0010,0020
  /// Throws SchemaError(line) on unknown keywords, rules outside a section or duplicates.
  static RequiredAttributeProfiles parse(std::string_view text);
  static RequiredAttributeProfiles load(const std::filesystem::path& path);
  /// CT, MR, CR and Secondary Capture image storage subsets.
  static const RequiredAttributeProfiles& bundled();

  const std::vector<Tag>* required_for(std::string_view sop_class_uid) const;
  std::string name_of(std::string_view sop_class_uid) const;
  std::vector<std::string> sop_classes() const;

 private:
  struct Profile {
    std::string name;
    std::vector<Tag> tags;
  };
  std::map<std::string, Profile, std::less<>> profiles_;
};

const char* bundled_validation_profiles_text() noexcept;

struct ValidationResult {
  std::vector<ValidationIssue> issues;
  std::vector<std::string> warnings;
};

/// One issue per required tag absent from the top level of `ds`, in tag
/// order. An unknown SOP class yields no issues and a warning.
ValidationResult validate(const DataSet& ds, const RequiredAttributeProfiles& profiles);

/// Attribute keywords that repair leaves missing.
class IgnoreList {
 public:
  IgnoreList() = default;
  explicit IgnoreList(std::set<std::string, std::less<>> keywords) : keywords_(std::move(keywords)) {}

  /// CodeValue, Manufacturer, ClinicalTrialSubjectID.
  static IgnoreList defaults();
  /// One keyword per line, '#' comments.
  static IgnoreList parse(std::string_view text);
  static IgnoreList load(const std::filesystem::path& path);

  bool contains(std::string_view keyword) const { return keywords_.count(keyword) != 0; }
  const std::set<std::string, std::less<>>& keywords() const { return keywords_; }

 private:
  std::set<std::string, std::less<>> keywords_;
};

struct RepairReport {
  std::vector<Tag> inserted;
  std::vector<ValidationIssue> ignored;
};

/// Insert each non-ignored missing attribute with a zero-length value and its
/// dictionary VR. Existing elements are never modified.
RepairReport repair(DataSet& ds, const std::vector<ValidationIssue>& issues, const IgnoreList& ignore);

/// Issues from dciodvfy-style output: lines containing "Error - Missing attribute";
/// the attribute is the "Element=<Keyword>" field, else the first "<...>".
std::vector<ValidationIssue> parse_external_validator_output(std::string_view text);

/// Run `executable <file>` and parse its combined stdout/stderr. Throws IoError
/// if the process cannot be started.
std::vector<ValidationIssue> run_external_validator(const std::filesystem::path& executable,
                                                    const std::filesystem::path& file);

}  // namespace dcmdeid
