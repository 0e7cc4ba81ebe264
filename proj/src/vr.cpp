#include "dcmdeid/vr.hpp"

#include <array>

namespace dcmdeid {

namespace {

constexpr std::array<std::string_view, 34> kCodes = {
    "AE", "AS", "AT", "CS", "DA", "DS", "DT", "FD", "FL", "IS", "LO", "LT",
    "OB", "OD", "OF", "OL", "OV", "OW", "PN", "SH", "SL", "SQ", "SS", "ST",
    "SV", "TM", "UC", "UI", "UL", "UN", "UR", "US", "UT", "UV",
};

}  // namespace

std::string_view vr_code(VR vr) noexcept { return kCodes[static_cast<std::size_t>(vr)]; }

std::optional<VR> vr_from_code(std::string_view code) noexcept {
  for (std::size_t i = 0; i < kCodes.size(); ++i) {
    if (kCodes[i] == code) return static_cast<VR>(i);
  }
  return std::nullopt;
}

bool uses_long_length(VR vr) noexcept {
  switch (vr) {
    case VR::OB: case VR::OD: case VR::OF: case VR::OL: case VR::OV: case VR::OW:
    case VR::SQ: case VR::SV: case VR::UC: case VR::UN: case VR::UR: case VR::UT:
    case VR::UV:
      return true;
    default:
      return false;
  }
}

bool is_string_vr(VR vr) noexcept {
  switch (vr) {
    case VR::AE: case VR::AS: case VR::CS: case VR::DA: case VR::DS: case VR::DT:
    case VR::IS: case VR::LO: case VR::LT: case VR::PN: case VR::SH: case VR::ST:
    case VR::TM: case VR::UC: case VR::UI: case VR::UR: case VR::UT:
      return true;
    default:
      return false;
  }
}

bool is_text_class(VR vr) noexcept {
  switch (vr) {
    case VR::LO: case VR::LT: case VR::SH: case VR::PN: case VR::CS: case VR::ST: case VR::UT:
      return true;
    default:
      return false;
  }
}

bool is_date_class(VR vr) noexcept { return vr == VR::DA || vr == VR::DT || vr == VR::TM; }

std::optional<char> padding_byte(VR vr) noexcept {
  if (vr == VR::UI || vr == VR::OB || vr == VR::UN) return '\0';
  if (is_string_vr(vr)) return ' ';
  return std::nullopt;
}

bool is_multi_valued_string(VR vr) noexcept {
  // LT, ST, UT and UR carry a single value; backslash is an ordinary character there.
  return is_string_vr(vr) && vr != VR::LT && vr != VR::ST && vr != VR::UT && vr != VR::UR;
}

}  // namespace dcmdeid
