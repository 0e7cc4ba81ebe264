#include "dcmdeid/action.hpp"

#include <cctype>

namespace dcmdeid {

std::string_view to_string(ActionKind kind) noexcept {
  switch (kind) {
    case ActionKind::Remove: return "Remove";
    case ActionKind::Empty: return "Empty";
    case ActionKind::ReplaceDummy: return "ReplaceDummy";
    case ActionKind::Keep: return "Keep";
    case ActionKind::RemapUID: return "RemapUID";
    case ActionKind::RemapID: return "RemapID";
    case ActionKind::ShiftDate: return "ShiftDate";
    case ActionKind::CleanText: return "CleanText";
  }
  return "Keep";
}

std::optional<ActionKind> parse_action(std::string_view name) noexcept {
  std::string n;
  for (char c : name) {
    if (c != '_' && c != '-') n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (n == "remove" || n == "x" || n == "delete") return ActionKind::Remove;
  if (n == "empty" || n == "z") return ActionKind::Empty;
  if (n == "replacedummy" || n == "dummy" || n == "replace" || n == "d") return ActionKind::ReplaceDummy;
  if (n == "keep" || n == "k") return ActionKind::Keep;
  if (n == "remapuid" || n == "u") return ActionKind::RemapUID;
  if (n == "remapid") return ActionKind::RemapID;
  if (n == "shiftdate") return ActionKind::ShiftDate;
  if (n == "cleantext" || n == "clean") return ActionKind::CleanText;
  return std::nullopt;
}

bool action_valid_for(ActionKind kind, VR vr) noexcept {
  switch (kind) {
    case ActionKind::CleanText: return is_text_class(vr);
    case ActionKind::RemapUID: return vr == VR::UI;
    case ActionKind::ShiftDate: return is_date_class(vr);
    case ActionKind::RemapID: return is_string_vr(vr) && vr != VR::UI && !is_date_class(vr);
    default: return true;
  }
}

}  // namespace dcmdeid
