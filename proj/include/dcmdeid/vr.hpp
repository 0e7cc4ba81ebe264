#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace dcmdeid {

enum class VR : std::uint8_t {
  AE, AS, AT, CS, DA, DS, DT, FD, FL, IS, LO, LT, OB, OD, OF, OL, OV, OW,
  PN, SH, SL, SQ, SS, ST, SV, TM, UC, UI, UL, UN, UR, US, UT, UV,
};

std::string_view vr_code(VR vr) noexcept;
std::optional<VR> vr_from_code(std::string_view code) noexcept;

/// Explicit-VR encoding uses the 2-reserved-byte + 32-bit length header form.
bool uses_long_length(VR vr) noexcept;

/// Value is character data (possibly multi-valued with backslash).
bool is_string_vr(VR vr) noexcept;

/// LO, LT, SH, PN, CS, ST, UT: candidates for free-text PHI cleaning.
bool is_text_class(VR vr) noexcept;

/// DA, DT, TM.
bool is_date_class(VR vr) noexcept;

/// Byte appended to an odd-length value: NUL for UI and binary VRs, space for text.
std::optional<char> padding_byte(VR vr) noexcept;

/// Whether values of this VR may be split on '\'.
bool is_multi_valued_string(VR vr) noexcept;

}  // namespace dcmdeid
