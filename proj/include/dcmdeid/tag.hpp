#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace dcmdeid {

/// A (group, element) attribute tag. Ordered by group, then element.
struct Tag {
  std::uint16_t group = 0;
  std::uint16_t element = 0;

  constexpr Tag() = default;
  constexpr Tag(std::uint16_t g, std::uint16_t e) : group(g), element(e) {}

  constexpr std::uint32_t value() const { return (std::uint32_t{group} << 16) | element; }

  /// Odd groups are vendor-private.
  constexpr bool is_private() const { return (group & 1u) != 0; }

  /// (gggg,0010)-(gggg,00FF) in a private group name the block owner.
  constexpr bool is_private_creator() const {
    return is_private() && element >= 0x0010 && element <= 0x00FF;
  }

  constexpr bool is_group_length() const { return element == 0x0000; }

  constexpr auto operator<=>(const Tag&) const = default;

  /// "(GGGG,EEEE)", uppercase hex.
  std::string str() const;

  /// Accepts "(gggg,eeee)", "gggg,eeee" or "ggggeeee" (hex, any case).
  static std::optional<Tag> parse(std::string_view text);
};

namespace tags {
inline constexpr Tag kItem{0xFFFE, 0xE000};
inline constexpr Tag kItemDelimitation{0xFFFE, 0xE00D};
inline constexpr Tag kSequenceDelimitation{0xFFFE, 0xE0DD};

inline constexpr Tag kFileMetaGroupLength{0x0002, 0x0000};
inline constexpr Tag kFileMetaVersion{0x0002, 0x0001};
inline constexpr Tag kMediaStorageSOPClassUID{0x0002, 0x0002};
inline constexpr Tag kMediaStorageSOPInstanceUID{0x0002, 0x0003};
inline constexpr Tag kTransferSyntaxUID{0x0002, 0x0010};
inline constexpr Tag kImplementationClassUID{0x0002, 0x0012};

inline constexpr Tag kSOPClassUID{0x0008, 0x0016};
inline constexpr Tag kSOPInstanceUID{0x0008, 0x0018};
inline constexpr Tag kPatientName{0x0010, 0x0010};
inline constexpr Tag kPatientID{0x0010, 0x0020};

inline constexpr Tag kSamplesPerPixel{0x0028, 0x0002};
inline constexpr Tag kPhotometricInterpretation{0x0028, 0x0004};
inline constexpr Tag kNumberOfFrames{0x0028, 0x0008};
inline constexpr Tag kRows{0x0028, 0x0010};
inline constexpr Tag kColumns{0x0028, 0x0011};
inline constexpr Tag kBitsAllocated{0x0028, 0x0100};
inline constexpr Tag kBitsStored{0x0028, 0x0101};
inline constexpr Tag kHighBit{0x0028, 0x0102};
inline constexpr Tag kPixelRepresentation{0x0028, 0x0103};
inline constexpr Tag kPixelData{0x7FE0, 0x0010};
}  // namespace tags

}  // namespace dcmdeid

template <>
struct std::hash<dcmdeid::Tag> {
  std::size_t operator()(const dcmdeid::Tag& t) const noexcept { return std::hash<std::uint32_t>{}(t.value()); }
};
