#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "dcmdeid/dataset.hpp"

namespace dcmdeid {

struct ParseOptions {
  /// Accept a bare dataset with no preamble/"DICM" magic. The encoding is
  /// sniffed from the first element header.
  bool lenient = false;
};

/// Parse a Part-10 file. Throws Error{MissingMagic | TruncatedElement |
/// UnsupportedTransferSyntax}.
DataSet parse_file(std::span<const std::uint8_t> bytes, ParseOptions options = {});
DataSet read_file(const std::filesystem::path& path, ParseOptions options = {});

enum class SerializeMode {
  /// Re-emit the stored encoding form (undefined lengths, stored VR codes, odd lengths).
  Preserve,
  /// Defined lengths everywhere and even-padded values; throws OddLengthValue
  /// when a value cannot be padded for its VR.
  Canonical,
};

Bytes serialize_file(const DataSet& ds, SerializeMode mode = SerializeMode::Preserve);
void write_file(const std::filesystem::path& path, const DataSet& ds, SerializeMode mode = SerializeMode::Preserve);

/// Value of (group, 00YY) where YY is the high byte of `tag.element`, with
/// trailing padding stripped. Absent when the tag is not private or the
/// creator element is missing.
std::optional<std::string> private_creator_for(const ElementMap& map, Tag tag);

/// True when the buffer starts with a 128-byte preamble and "DICM".
bool has_dicm_magic(std::span<const std::uint8_t> bytes) noexcept;

Bytes read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dcmdeid
