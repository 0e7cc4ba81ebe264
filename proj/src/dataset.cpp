#include "dcmdeid/dataset.hpp"

#include <charconv>
#include <cstring>

namespace dcmdeid {

namespace {

std::string_view trim_trailing_padding(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.remove_suffix(1);
  return s;
}

Bytes padded_bytes(VR vr, std::string_view value) {
  Bytes out(value.begin(), value.end());
  if (out.size() % 2 != 0) {
    out.push_back(static_cast<std::uint8_t>(padding_byte(vr).value_or('\0')));
  }
  return out;
}

}  // namespace

DataElement::DataElement(Tag tag, VR vr, Bytes raw) : tag_(tag), vr_(vr), raw_(std::move(raw)) {
  const auto code = vr_code(vr);
  vr_code_ = {code[0], code[1]};
}

DataElement DataElement::from_string(Tag tag, VR vr, std::string_view value) {
  return DataElement(tag, vr, padded_bytes(vr, value));
}

DataElement DataElement::from_strings(Tag tag, VR vr, const std::vector<std::string>& values) {
  std::string joined;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) joined.push_back('\\');
    joined += values[i];
  }
  return from_string(tag, vr, joined);
}

DataElement DataElement::from_u16(Tag tag, std::uint16_t value) {
  return DataElement(tag, VR::US,
                     Bytes{static_cast<std::uint8_t>(value & 0xFF), static_cast<std::uint8_t>(value >> 8)});
}

DataElement DataElement::sequence(Tag tag, std::vector<SequenceItem> items) {
  DataElement e(tag, VR::SQ);
  e.items_ = std::move(items);
  return e;
}

bool DataElement::is_sequence() const { return vr_ == VR::SQ || !items_.empty() || nested_implicit_; }

std::string DataElement::string() const {
  std::string_view s(reinterpret_cast<const char*>(raw_.data()), raw_.size());
  return std::string(trim_trailing_padding(s));
}

std::vector<std::string> DataElement::strings() const {
  const std::string whole = string();
  std::vector<std::string> out;
  if (whole.empty()) return out;
  if (!is_multi_valued_string(vr_)) {
    out.push_back(whole);
    return out;
  }
  std::string_view rest(whole);
  while (true) {
    const auto pos = rest.find('\\');
    out.emplace_back(trim_trailing_padding(rest.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  return out;
}

void DataElement::set_string(std::string_view value) {
  raw_ = padded_bytes(vr_, value);
  items_.clear();
}

std::optional<std::uint16_t> DataElement::as_u16() const {
  if (raw_.size() < 2) return std::nullopt;
  return static_cast<std::uint16_t>(raw_[0] | (raw_[1] << 8));
}

void DataElement::clear_value() {
  raw_.clear();
  items_.clear();
}

bool DataElement::operator==(const DataElement& other) const {
  return tag_ == other.tag_ && vr_ == other.vr_ && vr_code_ == other.vr_code_ && raw_ == other.raw_ &&
         items_ == other.items_ && undefined_length_ == other.undefined_length_ &&
         nested_implicit_ == other.nested_implicit_;
}

const DataElement* ElementMap::find(Tag tag) const {
  auto it = elements_.find(tag);
  return it == elements_.end() ? nullptr : &it->second;
}

DataElement* ElementMap::find(Tag tag) {
  auto it = elements_.find(tag);
  return it == elements_.end() ? nullptr : &it->second;
}

void ElementMap::set(DataElement element) {
  const Tag tag = element.tag();
  elements_.insert_or_assign(tag, std::move(element));
}

bool ElementMap::remove(Tag tag) { return elements_.erase(tag) != 0; }

std::string ElementMap::get_string(Tag tag, std::string_view fallback) const {
  if (const auto* e = find(tag)) return e->string();
  return std::string(fallback);
}

std::string_view transfer_syntax_uid(TransferSyntax ts) noexcept {
  return ts == TransferSyntax::ImplicitVRLittleEndian ? kImplicitVRLittleEndianUID : kExplicitVRLittleEndianUID;
}

void DataSet::make_file_meta(std::string_view sop_class_uid, std::string_view sop_instance_uid) {
  file_meta = ElementMap{};
  file_meta.set(DataElement(tags::kFileMetaGroupLength, VR::UL, Bytes(4, 0)));
  file_meta.set(DataElement(tags::kFileMetaVersion, VR::OB, Bytes{0x00, 0x01}));
  file_meta.set(DataElement::from_string(tags::kMediaStorageSOPClassUID, VR::UI, sop_class_uid));
  file_meta.set(DataElement::from_string(tags::kMediaStorageSOPInstanceUID, VR::UI, sop_instance_uid));
  file_meta.set(DataElement::from_string(tags::kTransferSyntaxUID, VR::UI, transfer_syntax_uid(transfer_syntax)));
  file_meta.set(DataElement::from_string(tags::kImplementationClassUID, VR::UI,
                                         "2.25.229800438946224101476466325377493441024"));
  file_meta.set(DataElement::from_string(Tag{0x0002, 0x0013}, VR::SH, "DCMDEID_1"));
  part10 = true;
}

TagPath TagPath::child_in(std::size_t item, Tag child) const {
  TagPath p;
  p.parents = parents;
  p.parents.push_back({tag, item});
  p.tag = child;
  return p;
}

std::string TagPath::str() const {
  std::string out;
  for (const auto& step : parents) {
    out += step.sequence.str();
    out += '[';
    out += std::to_string(step.item);
    out += "].";
  }
  out += tag.str();
  return out;
}

std::optional<TagPath> TagPath::parse(std::string_view text) {
  TagPath path;
  while (true) {
    if (text.size() < 11 || text.front() != '(') return std::nullopt;
    auto tag = Tag::parse(text.substr(0, 11));
    if (!tag) return std::nullopt;
    text.remove_prefix(11);
    if (text.empty()) {
      path.tag = *tag;
      return path;
    }
    if (text.front() != '[') return std::nullopt;
    const auto close = text.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    std::size_t index = 0;
    auto digits = text.substr(1, close - 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
    text.remove_prefix(close + 1);
    if (text.empty() || text.front() != '.') return std::nullopt;
    text.remove_prefix(1);
    path.parents.push_back({*tag, index});
  }
}

namespace {

void walk_impl(const ElementMap& map, const TagPath& parent, bool root, const ElementVisitor& visit) {
  for (const auto& [tag, element] : map) {
    TagPath path;
    if (root) {
      path.tag = tag;
    } else {
      path = parent;
      path.tag = tag;
    }
    visit(path, element);
    for (std::size_t i = 0; i < element.items().size(); ++i) {
      TagPath item_parent = path;
      item_parent.parents.push_back({tag, i});
      walk_impl(element.items()[i], item_parent, false, visit);
    }
  }
}

}  // namespace

void walk(const ElementMap& root, const ElementVisitor& visit) { walk_impl(root, TagPath{}, true, visit); }

std::size_t count_elements(const ElementMap& root) {
  std::size_t n = 0;
  walk(root, [&](const TagPath&, const DataElement&) { ++n; });
  return n;
}

}  // namespace dcmdeid
