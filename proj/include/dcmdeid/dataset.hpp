#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dcmdeid/tag.hpp"
#include "dcmdeid/vr.hpp"

namespace dcmdeid {

using Bytes = std::vector<std::uint8_t>;

class SequenceItem;

/// One attribute. Keeps the raw value bytes exactly as read so that an
/// untouched element re-encodes to the same bytes.
class DataElement {
 public:
  DataElement() = default;
  DataElement(Tag tag, VR vr, Bytes raw = {});

  /// String value, padded to even length with the VR's padding byte.
  static DataElement from_string(Tag tag, VR vr, std::string_view value);
  static DataElement from_strings(Tag tag, VR vr, const std::vector<std::string>& values);
  static DataElement from_u16(Tag tag, std::uint16_t value);
  static DataElement sequence(Tag tag, std::vector<SequenceItem> items);

  Tag tag() const { return tag_; }
  VR vr() const { return vr_; }

  /// Two-letter code as stored in the file; differs from vr_code(vr()) only
  /// for unrecognized codes, which parse as UN.
  std::string_view stored_vr_code() const { return {vr_code_.data(), 2}; }
  void set_stored_vr_code(std::array<char, 2> code) { vr_code_ = code; }

  const Bytes& raw() const { return raw_; }
  void set_raw(Bytes raw) { raw_ = std::move(raw); }

  bool is_sequence() const;
  std::vector<SequenceItem>& items() { return items_; }
  const std::vector<SequenceItem>& items() const { return items_; }

  bool undefined_length() const { return undefined_length_; }
  void set_undefined_length(bool v) { undefined_length_ = v; }

  /// UN element of undefined length whose items are implicit-VR encoded.
  bool nested_implicit() const { return nested_implicit_; }
  void set_nested_implicit(bool v) { nested_implicit_ = v; }

  /// Whole value with trailing padding (spaces, NULs) removed.
  std::string string() const;

  /// Values split on '\' (for multi-valued VRs), each with trailing padding removed.
  std::vector<std::string> strings() const;

  /// Replace the value, padding per VR.
  void set_string(std::string_view value);

  std::optional<std::uint16_t> as_u16() const;

  /// Zero-length value, no items.
  void clear_value();

  bool operator==(const DataElement& other) const;

 private:
  Tag tag_;
  VR vr_ = VR::UN;
  std::array<char, 2> vr_code_{'U', 'N'};
  Bytes raw_;
  std::vector<SequenceItem> items_;
  bool undefined_length_ = false;
  bool nested_implicit_ = false;
};

/// Tag-ordered attribute container shared by datasets and sequence items.
class ElementMap {
 public:
  using Storage = std::map<Tag, DataElement>;

  const DataElement* find(Tag tag) const;
  DataElement* find(Tag tag);
  bool contains(Tag tag) const { return elements_.count(tag) != 0; }

  /// Insert or replace.
  void set(DataElement element);
  bool remove(Tag tag);

  /// Trimmed string value, or `fallback` when absent.
  std::string get_string(Tag tag, std::string_view fallback = {}) const;

  std::size_t size() const { return elements_.size(); }
  bool empty() const { return elements_.empty(); }

  Storage::const_iterator begin() const { return elements_.begin(); }
  Storage::const_iterator end() const { return elements_.end(); }
  Storage::iterator begin() { return elements_.begin(); }
  Storage::iterator end() { return elements_.end(); }
  Storage::iterator erase(Storage::iterator it) { return elements_.erase(it); }

  bool operator==(const ElementMap& other) const { return elements_ == other.elements_; }

 private:
  Storage elements_;
};

class SequenceItem : public ElementMap {
 public:
  bool undefined_length() const { return undefined_length_; }
  void set_undefined_length(bool v) { undefined_length_ = v; }

  bool operator==(const SequenceItem& other) const {
    return undefined_length_ == other.undefined_length_ && ElementMap::operator==(other);
  }

 private:
  bool undefined_length_ = false;
};

enum class TransferSyntax { ImplicitVRLittleEndian, ExplicitVRLittleEndian };

inline constexpr std::string_view kImplicitVRLittleEndianUID = "1.2.840.10008.1.2";
inline constexpr std::string_view kExplicitVRLittleEndianUID = "1.2.840.10008.1.2.1";

std::string_view transfer_syntax_uid(TransferSyntax ts) noexcept;

/// A Part-10 file: preamble, group-0002 meta header and the body.
class DataSet : public ElementMap {
 public:
  DataSet() { preamble.fill(0); }

  std::array<std::uint8_t, 128> preamble{};
  ElementMap file_meta;
  TransferSyntax transfer_syntax = TransferSyntax::ExplicitVRLittleEndian;
  /// False when parsed leniently from a bare dataset without preamble.
  bool part10 = true;

  /// Populate a minimal file meta header for the given SOP class/instance.
  void make_file_meta(std::string_view sop_class_uid, std::string_view sop_instance_uid);

  bool operator==(const DataSet& other) const {
    return preamble == other.preamble && file_meta == other.file_meta &&
           transfer_syntax == other.transfer_syntax && part10 == other.part10 &&
           ElementMap::operator==(other);
  }
};

/// Location of an element: the chain of (sequence tag, item index) steps
/// leading to it, then its own tag.
struct TagPath {
  struct Step {
    Tag sequence;
    std::size_t item = 0;
    bool operator==(const Step&) const = default;
    auto operator<=>(const Step&) const = default;
  };
  std::vector<Step> parents;
  Tag tag;

  TagPath child_in(std::size_t item, Tag child) const;
  bool is_nested() const { return !parents.empty(); }

  /// "(0008,1140)[0].(0008,1155)"
  std::string str() const;
  static std::optional<TagPath> parse(std::string_view text);

  bool operator==(const TagPath&) const = default;
  auto operator<=>(const TagPath&) const = default;
};

using ElementVisitor = std::function<void(const TagPath&, const DataElement&)>;

/// Depth-first pre-order over every element, including sequence descendants.
void walk(const ElementMap& root, const ElementVisitor& visit);

std::size_t count_elements(const ElementMap& root);

}  // namespace dcmdeid
