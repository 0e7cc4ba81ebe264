#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dcmdeid/action.hpp"
#include "dcmdeid/dataset.hpp"

namespace dcmdeid {

class IdentityStore;

/// Dictionary key for a private attribute: "(gggg,creator,ee)_VR" where gggg
/// is the group and ee the low byte of the element, both lowercase hex.
struct PrivateKey {
  std::string group;
  std::string creator;
  std::string element_low;
  std::string vr;

  std::string render() const;
  static std::optional<PrivateKey> parse(std::string_view text);

  bool operator==(const PrivateKey&) const = default;
};

/// Throws NotPrivate when the tag group is even, MissingCreator when `creator` is empty.
PrivateKey build_private_key(Tag tag, std::string_view creator, VR vr);
PrivateKey build_private_key(Tag tag, std::string_view creator, std::string_view vr_code);

class PrivateDict {
 public:
  PrivateDict() = default;

  /// Lines of "<rendered-key> <action>", '#' comments. Creators may contain
  /// spaces; the action is the last whitespace-separated field.
  /// Throws SchemaError(line), DuplicateKey(key), UnknownActionKind.
  static PrivateDict parse(std::string_view text, std::filesystem::path source = {});
  static PrivateDict load(const std::filesystem::path& path);
  /// Representative sample shipped with the library.
  static const PrivateDict& bundled();

  void add(const PrivateKey& key, ActionKind action);

  /// Exact key match; for UN (implicit-VR files) falls back to the first
  /// entry with the same group/creator/element regardless of VR.
  std::optional<ActionKind> lookup(const PrivateKey& key) const;

  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, ActionKind>& entries() const { return entries_; }
  const std::filesystem::path& source() const { return source_; }

 private:
  std::map<std::string, ActionKind> entries_;
  std::map<std::string, std::string> by_prefix_;
  std::filesystem::path source_;
};

const char* bundled_private_dict_text() noexcept;

struct PrivateReportRow {
  TagPath path;
  ActionKind action = ActionKind::Remove;
  std::string key;
  bool dictionary_hit = false;
};

struct PrivateReport {
  std::vector<PrivateReportRow> rows;
  std::size_t removed = 0;
  std::size_t kept = 0;
};

/// Apply dictionary actions to every private element (top level and inside
/// sequence items). Dictionary misses and elements without a creator are
/// removed; creator elements survive only while their block keeps at least
/// one element. Even-group elements are never modified. `identity` is used
/// for RemapUID/RemapID/ShiftDate entries and may be null otherwise.
PrivateReport deidentify_private(ElementMap& map, const PrivateDict& dict, IdentityStore* identity = nullptr);

}  // namespace dcmdeid
