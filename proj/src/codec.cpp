#include "dcmdeid/codec.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "dcmdeid/dictionary.hpp"
#include "dcmdeid/error.hpp"

namespace dcmdeid {

namespace {

constexpr std::uint32_t kUndefinedLength = 0xFFFFFFFFu;
constexpr std::size_t kPreambleSize = 128;
constexpr int kMaxDepth = 64;

[[noreturn]] void truncated(Tag tag, std::size_t offset) {
  throw Error(ErrorCode::TruncatedElement, fmt::format("tag {} at offset {}", tag.str(), offset));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> buf, std::size_t pos = 0) : buf_(buf), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  bool at_end() const { return pos_ >= buf_.size(); }

  std::uint16_t u16(Tag ctx) {
    need(2, ctx);
    const auto v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  std::uint32_t u32(Tag ctx) {
    need(4, ctx);
    const std::uint32_t v = std::uint32_t{buf_[pos_]} | (std::uint32_t{buf_[pos_ + 1]} << 8) |
                            (std::uint32_t{buf_[pos_ + 2]} << 16) | (std::uint32_t{buf_[pos_ + 3]} << 24);
    pos_ += 4;
    return v;
  }

  Tag tag() {
    const std::size_t at = pos_;
    if (remaining() < 4) truncated(Tag{}, at);
    const auto g = u16(Tag{});
    const auto e = u16(Tag{});
    return Tag{g, e};
  }

  std::array<char, 2> code(Tag ctx) {
    need(2, ctx);
    std::array<char, 2> c{static_cast<char>(buf_[pos_]), static_cast<char>(buf_[pos_ + 1])};
    pos_ += 2;
    return c;
  }

  Bytes bytes(std::size_t n, Tag ctx) {
    need(n, ctx);
    Bytes out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_), buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  Tag peek_tag() const {
    if (remaining() < 4) return Tag{0xFFFF, 0xFFFF};
    return Tag{static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8)),
               static_cast<std::uint16_t>(buf_[pos_ + 2] | (buf_[pos_ + 3] << 8))};
  }

  void need(std::size_t n, Tag ctx) const {
    if (remaining() < n) truncated(ctx, pos_);
  }

 private:
  std::span<const std::uint8_t> buf_;
  std::size_t pos_;
};

struct Limit {
  bool undefined;
  std::size_t end;
};

void parse_elements(Reader& r, ElementMap& out, bool explicit_vr, Limit limit, int depth,
                    std::optional<std::uint16_t> only_group = std::nullopt);

void parse_items(Reader& r, DataElement& element, bool explicit_vr, Limit limit, int depth) {
  const Tag seq_tag = element.tag();
  while (true) {
    if (!limit.undefined && r.pos() >= limit.end) break;
    if (limit.undefined && r.at_end()) truncated(seq_tag, r.pos());
    const std::size_t item_offset = r.pos();
    const Tag tag = r.tag();
    const std::uint32_t len = r.u32(tag);
    if (tag == tags::kSequenceDelimitation) {
      if (!limit.undefined) truncated(seq_tag, item_offset);
      break;
    }
    if (tag != tags::kItem) truncated(seq_tag, item_offset);
    SequenceItem item;
    if (len == kUndefinedLength) {
      item.set_undefined_length(true);
      parse_elements(r, item, explicit_vr, {true, 0}, depth + 1);
    } else {
      if (len > r.remaining()) truncated(seq_tag, item_offset);
      parse_elements(r, item, explicit_vr, {false, r.pos() + len}, depth + 1);
    }
    element.items().push_back(std::move(item));
  }
  if (!limit.undefined && r.pos() != limit.end) truncated(seq_tag, r.pos());
}

void parse_elements(Reader& r, ElementMap& out, bool explicit_vr, Limit limit, int depth,
                    std::optional<std::uint16_t> only_group) {
  if (depth > kMaxDepth) truncated(Tag{}, r.pos());
  while (true) {
    if (!limit.undefined && r.pos() >= limit.end) break;
    if (r.at_end()) {
      if (limit.undefined && depth > 0) truncated(Tag{}, r.pos());
      break;
    }
    if (only_group && r.peek_tag().group != *only_group) break;

    const std::size_t offset = r.pos();
    const Tag tag = r.tag();
    if (tag == tags::kItemDelimitation) {
      r.u32(tag);
      if (!limit.undefined) truncated(tag, offset);
      break;
    }

    VR vr = VR::UN;
    std::array<char, 2> stored{'U', 'N'};
    std::uint32_t len = 0;
    if (explicit_vr) {
      stored = r.code(tag);
      const auto known = vr_from_code(std::string_view(stored.data(), 2));
      vr = known.value_or(VR::UN);
      if (known && uses_long_length(*known)) {
        r.u16(tag);
        len = r.u32(tag);
      } else {
        len = r.u16(tag);
      }
    } else {
      vr = implicit_vr_for(tag);
      const auto code = vr_code(vr);
      stored = {code[0], code[1]};
      len = r.u32(tag);
    }

    DataElement element(tag, vr);
    element.set_stored_vr_code(stored);

    if (len == kUndefinedLength) {
      element.set_undefined_length(true);
      if (explicit_vr && vr == VR::UN) {
        element.set_nested_implicit(true);
        parse_items(r, element, false, {true, 0}, depth);
      } else if (vr == VR::SQ || !explicit_vr) {
        if (!explicit_vr && vr != VR::SQ) {
          element = DataElement(tag, VR::SQ);
          element.set_undefined_length(true);
        }
        parse_items(r, element, explicit_vr, {true, 0}, depth);
      } else {
        throw Error(ErrorCode::UnsupportedTransferSyntax,
                    fmt::format("encapsulated value for {} in a native transfer syntax", tag.str()));
      }
    } else {
      if (len > r.remaining() || (!limit.undefined && r.pos() + len > limit.end)) truncated(tag, offset);
      if (vr == VR::SQ) {
        parse_items(r, element, explicit_vr, {false, r.pos() + len}, depth);
      } else {
        element.set_raw(r.bytes(len, tag));
      }
    }
    out.set(std::move(element));
  }
}

std::string trimmed_uid(const DataElement* e) {
  if (!e) return {};
  std::string s = e->string();
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  return s;
}

TransferSyntax resolve_transfer_syntax(const std::string& uid) {
  if (uid == kImplicitVRLittleEndianUID) return TransferSyntax::ImplicitVRLittleEndian;
  if (uid == kExplicitVRLittleEndianUID) return TransferSyntax::ExplicitVRLittleEndian;
  throw Error(ErrorCode::UnsupportedTransferSyntax, uid.empty() ? std::string("<missing>") : uid);
}

bool looks_explicit(std::span<const std::uint8_t> bytes, std::size_t pos) {
  if (bytes.size() < pos + 6) return false;
  const char code[2] = {static_cast<char>(bytes[pos + 4]), static_cast<char>(bytes[pos + 5])};
  return vr_from_code(std::string_view(code, 2)).has_value();
}

// ---------------------------------------------------------------------------

class Writer {
 public:
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
  void tag(Tag t) {
    u16(t.group);
    u16(t.element);
  }
  void append(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void raw(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  Bytes& buffer() { return out_; }

 private:
  Bytes out_;
};

void write_elements(Writer& w, const ElementMap& map, bool explicit_vr, SerializeMode mode);

Bytes encode_items(const DataElement& element, bool explicit_vr, SerializeMode mode) {
  Writer w;
  for (const auto& item : element.items()) {
    Writer body;
    write_elements(body, item, explicit_vr, mode);
    w.tag(tags::kItem);
    const bool undefined = mode == SerializeMode::Preserve && item.undefined_length();
    if (undefined) {
      w.u32(kUndefinedLength);
      w.append(body.buffer());
      w.tag(tags::kItemDelimitation);
      w.u32(0);
    } else {
      w.u32(static_cast<std::uint32_t>(body.buffer().size()));
      w.append(body.buffer());
    }
  }
  return std::move(w.buffer());
}

void write_element(Writer& w, const DataElement& element, bool explicit_vr, SerializeMode mode) {
  const Tag tag = element.tag();
  const bool sequence = element.is_sequence();
  const bool nested_implicit = element.nested_implicit();
  const bool undefined = sequence && element.undefined_length() &&
                         (mode == SerializeMode::Preserve || nested_implicit);

  Bytes value;
  if (sequence) {
    value = encode_items(element, nested_implicit ? false : explicit_vr, mode);
  } else {
    value = element.raw();
    if (value.size() % 2 != 0 && mode == SerializeMode::Canonical) {
      const auto pad = padding_byte(element.vr());
      if (!pad) throw Error(ErrorCode::OddLengthValue, tag.str());
      value.push_back(static_cast<std::uint8_t>(*pad));
    }
  }

  w.tag(tag);
  if (explicit_vr) {
    std::string_view code = element.stored_vr_code();
    auto known = vr_from_code(code);
    bool long_form = known ? uses_long_length(*known) : false;
    if (!long_form && value.size() > 0xFFFF) {
      code = "UN";
      long_form = true;
    }
    w.raw(code.data(), 2);
    if (long_form) {
      w.u16(0);
      w.u32(undefined ? kUndefinedLength : static_cast<std::uint32_t>(value.size()));
    } else {
      w.u16(static_cast<std::uint16_t>(value.size()));
    }
  } else {
    w.u32(undefined ? kUndefinedLength : static_cast<std::uint32_t>(value.size()));
  }
  w.append(value);
  if (undefined) {
    w.tag(tags::kSequenceDelimitation);
    w.u32(0);
  }
}

void write_elements(Writer& w, const ElementMap& map, bool explicit_vr, SerializeMode mode) {
  auto it = map.begin();
  while (it != map.end()) {
    const std::uint16_t group = it->first.group;
    Writer group_body;
    const DataElement* group_length = nullptr;
    for (; it != map.end() && it->first.group == group; ++it) {
      if (it->first.is_group_length() && !it->first.is_private_creator()) {
        group_length = &it->second;
        continue;
      }
      write_element(group_body, it->second, explicit_vr, mode);
    }
    if (group_length) {
      DataElement gl(group_length->tag(), VR::UL);
      gl.set_stored_vr_code({'U', 'L'});
      const auto n = static_cast<std::uint32_t>(group_body.buffer().size());
      gl.set_raw(Bytes{static_cast<std::uint8_t>(n & 0xFF), static_cast<std::uint8_t>((n >> 8) & 0xFF),
                       static_cast<std::uint8_t>((n >> 16) & 0xFF), static_cast<std::uint8_t>(n >> 24)});
      write_element(w, gl, explicit_vr, mode);
    }
    w.append(group_body.buffer());
  }
}

}  // namespace

bool has_dicm_magic(std::span<const std::uint8_t> bytes) noexcept {
  return bytes.size() >= kPreambleSize + 4 && std::memcmp(bytes.data() + kPreambleSize, "DICM", 4) == 0;
}

DataSet parse_file(std::span<const std::uint8_t> bytes, ParseOptions options) {
  DataSet ds;
  if (has_dicm_magic(bytes)) {
    std::copy_n(bytes.begin(), kPreambleSize, ds.preamble.begin());
    Reader r(bytes, kPreambleSize + 4);
    parse_elements(r, ds.file_meta, true, {false, bytes.size()}, 0, std::uint16_t{0x0002});
    const std::string ts_uid = trimmed_uid(ds.file_meta.find(tags::kTransferSyntaxUID));
    ds.transfer_syntax = resolve_transfer_syntax(ts_uid);
    const bool explicit_vr = ds.transfer_syntax == TransferSyntax::ExplicitVRLittleEndian;
    parse_elements(r, ds, explicit_vr, {false, bytes.size()}, 0);
    ds.part10 = true;
    return ds;
  }
  if (!options.lenient) throw Error(ErrorCode::MissingMagic, "no DICM marker at offset 128");

  ds.part10 = false;
  Reader r(bytes);
  if (r.peek_tag().group == 0x0002) {
    parse_elements(r, ds.file_meta, true, {false, bytes.size()}, 0, std::uint16_t{0x0002});
  }
  if (const auto* ts = ds.file_meta.find(tags::kTransferSyntaxUID)) {
    ds.transfer_syntax = resolve_transfer_syntax(trimmed_uid(ts));
  } else {
    ds.transfer_syntax = looks_explicit(bytes, r.pos()) ? TransferSyntax::ExplicitVRLittleEndian
                                                        : TransferSyntax::ImplicitVRLittleEndian;
  }
  parse_elements(r, ds, ds.transfer_syntax == TransferSyntax::ExplicitVRLittleEndian, {false, bytes.size()}, 0);
  return ds;
}

DataSet read_file(const std::filesystem::path& path, ParseOptions options) {
  const Bytes bytes = read_bytes(path);
  return parse_file(bytes, options);
}

Bytes serialize_file(const DataSet& ds, SerializeMode mode) {
  Writer w;
  if (ds.part10) {
    w.append(ds.preamble);
    w.raw("DICM", 4);
  }
  write_elements(w, ds.file_meta, true, mode);
  write_elements(w, ds, ds.transfer_syntax == TransferSyntax::ExplicitVRLittleEndian, mode);
  return std::move(w.buffer());
}

void write_file(const std::filesystem::path& path, const DataSet& ds, SerializeMode mode) {
  write_bytes(path, serialize_file(ds, mode));
}

std::optional<std::string> private_creator_for(const ElementMap& map, Tag tag) {
  if (!tag.is_private()) return std::nullopt;
  const Tag creator_tag{tag.group, static_cast<std::uint16_t>(tag.element >> 8)};
  if (!creator_tag.is_private_creator()) return std::nullopt;
  const auto* e = map.find(creator_tag);
  if (!e) return std::nullopt;
  return e->string();
}

Bytes read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed: " + path.string());
  return data;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace dcmdeid
