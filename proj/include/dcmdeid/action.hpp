#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "dcmdeid/vr.hpp"

namespace dcmdeid {

/// What happens to one attribute during de-identification.
enum class ActionKind {
  Remove,        ///< delete the element
  Empty,         ///< keep the element with a zero-length value
  ReplaceDummy,  ///< PN -> "ANON^ANON", other text -> "REMOVED"; UI remapped, dates shifted
  Keep,
  RemapUID,      ///< consistent pseudonymous UID (UI only)
  RemapID,       ///< consistent pseudonymous patient identifier (text VRs)
  ShiftDate,     ///< shift by the run's date offset (DA, DT, TM)
  CleanText,     ///< delete detected PHI substrings, keep the rest (text-class VRs)
};

std::string_view to_string(ActionKind kind) noexcept;

/// Case-insensitive; also accepts the PS3.15 action codes X, Z, D, K, U.
std::optional<ActionKind> parse_action(std::string_view name) noexcept;

/// CleanText needs a text-class VR, RemapUID needs UI, ShiftDate needs
/// DA/DT/TM, RemapID needs a string VR. Everything else applies anywhere.
bool action_valid_for(ActionKind kind, VR vr) noexcept;

inline constexpr std::string_view kDummyPersonName = "ANON^ANON";
inline constexpr std::string_view kDummyText = "REMOVED";

}  // namespace dcmdeid
