#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcmdeid/action.hpp"
#include "dcmdeid/dataset.hpp"
#include "dcmdeid/phi_detect.hpp"
#include "dcmdeid/private_deid.hpp"

namespace dcmdeid {

class IdentityStore;

enum class PrivatePolicy {
  /// Private elements are left to the private-tag dictionary (or untouched without one).
  Skip,
  /// Every private element is removed.
  Remove,
};

/// Base per-tag actions for one profile.
struct RuleTable {
  std::string profile_name;
  std::map<Tag, ActionKind> explicit_rules;
  /// VR-specific defaults ("@vr-default LO CleanText"); checked before class defaults.
  std::map<VR, ActionKind> vr_rules;
  /// Class defaults keyed by "text", "date" or "uid".
  std::map<std::string, ActionKind, std::less<>> class_rules;
  ActionKind default_action = ActionKind::Keep;
  PrivatePolicy private_policy = PrivatePolicy::Skip;
  /// Feed all free-text elements to the detector as one document.
  bool consolidate_free_text = false;
};

/// Overrides layered on top of a RuleTable.
struct CustomRuleSet {
  std::string version;
  std::map<Tag, ActionKind> overrides;
};

struct RuleConfig {
  RuleTable table;
  CustomRuleSet custom;
};

/// Parse a rule document:
///
///   # comment
///   @profile tcia                 include a bundled profile as the base table
///   @name my-profile
///   @default keep
///   @vr-default text CleanText    class (text|date|uid) or a VR code
///   @private skip|remove
///   @consolidate on|off
///   0010,0010 ReplaceDummy        GGGG,EEEE <ActionKind> [annotation...]
///   @custom v2                    following rule lines are overrides
///
/// Throws SchemaError(line), UnknownActionKind(name), DuplicateTagRule(tag).
RuleConfig load_rule_config(std::string_view text);
RuleConfig load_rule_config_file(const std::filesystem::path& path);

/// Bundled profiles: "ps315" and "tcia". Throws InvalidConfig for other names.
std::string_view bundled_profile_text(std::string_view name);
/// Bundled custom overlay (TCIA-style custom rules, version "v2").
std::string_view bundled_custom_rules_text();

RuleConfig bundled_rule_config(std::string_view profile, bool with_custom_rules);

/// custom override > explicit tag rule > VR default > class default > profile default.
ActionKind resolve_action(const RuleTable& table, const CustomRuleSet& custom, Tag tag, VR vr);

/// One free-text element inside a MedicalNote. [start, end) indexes the
/// escaped text in MedicalNote::document.
struct NoteSegment {
  TagPath path;
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Free-text elements concatenated into one document for a single detector pass.
struct MedicalNote {
  /// Line break plus ASCII unit separator: no detector rule matches across it.
  static constexpr std::string_view kSeparator = "\n\x1f\n";

  std::vector<NoteSegment> segments;
  std::string document;

  static MedicalNote build(std::vector<std::pair<TagPath, std::string>> parts);
};

/// Reversible escaping of 0x1B/0x1F so segment text never contains the separator.
std::string escape_note_text(std::string_view text);
std::string unescape_note_text(std::string_view text);

/// Elements resolving to CleanText, plus text-class elements resolving to
/// Empty or ReplaceDummy, in walk order.
MedicalNote consolidate_free_text(const ElementMap& ds, const RuleTable& table, const CustomRuleSet& custom);

/// Per segment, delete every character covered by an entity (clipped to the
/// segment). Segments untouched by any entity are absent from the result.
/// Throws SpanOutOfBounds.
std::map<TagPath, std::string> apply_entity_removals(const MedicalNote& note, const std::vector<EntitySpan>& entities);

struct DeidContext {
  IdentityStore* identity = nullptr;
  const Detector* detector = nullptr;
  /// Null disables whitelist filtering.
  const Whitelist* whitelist = nullptr;
  /// Used under PrivatePolicy::Skip; null leaves private elements untouched.
  const PrivateDict* private_dict = nullptr;
};

struct DeidReportRow {
  TagPath path;
  ActionKind action = ActionKind::Keep;
  std::string before_hash;
  std::string after_hash;
  bool degraded = false;
  std::string note;
};

struct DeidReport {
  std::vector<DeidReportRow> rows;
  std::size_t detector_calls = 0;
  std::size_t entities = 0;
  std::size_t degraded = 0;

  std::map<ActionKind, std::size_t> action_counts() const;
};

struct DeidResult {
  DataSet dataset;
  DeidReport report;
};

/// Apply the resolved action to every element, top level and nested. Errors
/// from the detector or identity store are contained per element: the
/// element is emptied and its row marked degraded.
DeidResult deidentify_dataset(DataSet ds, const RuleConfig& rules, const DeidContext& ctx);

/// FNV-1a 64 of the bytes, 16 hex digits.
std::string value_hash(std::span<const std::uint8_t> bytes);

}  // namespace dcmdeid
