#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "dcmdeid/tag.hpp"
#include "dcmdeid/vr.hpp"

namespace dcmdeid {

struct DictionaryEntry {
  Tag tag;
  VR vr;
  std::string_view keyword;
};

/// Bundled subset of the standard data dictionary: identifying attributes,
/// the modules checked by the built-in validator profiles and the pixel module.
const DictionaryEntry* dictionary_lookup(Tag tag) noexcept;
const DictionaryEntry* dictionary_lookup(std::string_view keyword) noexcept;

/// VR for implicit-VR decoding: dictionary hit, LO for private creators,
/// UL for group lengths, otherwise UN.
VR implicit_vr_for(Tag tag) noexcept;

/// "ProtocolName" -> "Protocol Name", "ReferencedSOPClassUID" -> "Referenced SOP Class UID".
std::string display_name(std::string_view keyword);

/// Keyword for a tag or its "(GGGG,EEEE)" rendering when not in the dictionary.
std::string keyword_or_tag(Tag tag);

}  // namespace dcmdeid
