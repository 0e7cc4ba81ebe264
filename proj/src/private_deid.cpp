#include "dcmdeid/private_deid.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "dcmdeid/codec.hpp"
#include "dcmdeid/error.hpp"
#include "dcmdeid/identity_store.hpp"

namespace dcmdeid {

namespace {

constexpr const char* kBundledPrivateDict = R"(# Private tag dictionary: (gggg,creator,ee)_VR <action>
# Representative sample in the TCIA key scheme. Misses are removed.
(0009,gems_petd_01,2b)_SL keep
(0009,gems_petd_01,2c)_SL keep
(0009,gems_petd_01,05)_DT remove
(0009,gems_petd_01,06)_LO remove
(0009,gems_petd_01,36)_LO remove
(0009,GEMS_IDEN_01,01)_LO remove
(0009,GEMS_IDEN_01,27)_SL keep
(0019,GEMS_ACQU_01,23)_DS keep
(0019,GEMS_ACQU_01,24)_DS keep
(0019,GEMS_ACQU_01,9e)_LO remove
(0021,GEMS_RELA_01,03)_SS keep
(0025,GEMS_SERS_01,07)_SL keep
(0027,GEMS_IMAG_01,06)_SL keep
(0029,SIEMENS CSA HEADER,08)_CS keep
(0029,SIEMENS CSA HEADER,09)_LO keep
(0029,SIEMENS CSA HEADER,10)_OB keep
(0029,SIEMENS CSA HEADER,20)_OB keep
(0029,SIEMENS MEDCOM HEADER2,60)_LO remove
(0043,GEMS_PARM_01,1e)_DS keep
(0043,GEMS_PARM_01,27)_SH keep
(0043,GEMS_PARM_01,9f)_OB remove
(0051,SIEMENS MR HEADER,0a)_LO keep
(0051,SIEMENS MR HEADER,0b)_SH keep
(0051,SIEMENS MR HEADER,0c)_LO keep
(0051,SIEMENS MR HEADER,13)_SH keep
(2001,Philips Imaging DD 001,0c)_CS keep
(2001,Philips Imaging DD 001,6b)_CS keep
(2005,Philips MR Imaging DD 001,10)_DS keep
(2005,Philips MR Imaging DD 001,90)_LO remove
(7fd1,SIEMENS SYNGO ULTRA-SOUND TOYON DATA STREAMING,01)_OB empty
(0011,ACME_RESEARCH_01,01)_LO keep
(0011,ACME_RESEARCH_01,02)_LO remove
(0011,ACME_RESEARCH_01,03)_DA remove
(0011,ACME_RESEARCH_01,04)_DS keep
(0011,ACME_RESEARCH_01,05)_SH remove
(0013,ACME_SCAN_02,10)_LO remove
(0013,ACME_SCAN_02,11)_LO remove
)";

std::string lower_hex(unsigned v, int width) { return fmt::format("{:0{}x}", v, width); }

bool is_lower_hex(std::string_view s) {
  for (char c : s) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

std::string prefix_of(const PrivateKey& k) { return "(" + k.group + "," + k.creator + "," + k.element_low + ")"; }

}  // namespace

std::string PrivateKey::render() const { return prefix_of(*this) + "_" + vr; }

std::optional<PrivateKey> PrivateKey::parse(std::string_view text) {
  if (text.size() < 12 || text.front() != '(') return std::nullopt;
  const auto close = text.rfind(")_");
  if (close == std::string_view::npos) return std::nullopt;
  const auto vr = text.substr(close + 2);
  if (vr.size() != 2 || !std::isupper(static_cast<unsigned char>(vr[0])) ||
      !std::isupper(static_cast<unsigned char>(vr[1]))) {
    return std::nullopt;
  }
  const auto inner = text.substr(1, close - 1);
  const auto first = inner.find(',');
  const auto last = inner.rfind(',');
  if (first == std::string_view::npos || first == last) return std::nullopt;
  PrivateKey k{std::string(inner.substr(0, first)), std::string(inner.substr(first + 1, last - first - 1)),
               std::string(inner.substr(last + 1)), std::string(vr)};
  if (k.group.size() != 4 || !is_lower_hex(k.group) || k.element_low.size() != 2 || !is_lower_hex(k.element_low) ||
      k.creator.empty()) {
    return std::nullopt;
  }
  return k;
}

PrivateKey build_private_key(Tag tag, std::string_view creator, std::string_view vr_code) {
  if (!tag.is_private()) throw Error(ErrorCode::NotPrivate, tag.str());
  if (creator.empty()) throw Error(ErrorCode::MissingCreator, tag.str());
  return PrivateKey{lower_hex(tag.group, 4), std::string(creator), lower_hex(tag.element & 0xFFu, 2),
                    std::string(vr_code)};
}

PrivateKey build_private_key(Tag tag, std::string_view creator, VR vr) {
  return build_private_key(tag, creator, vr_code(vr));
}

void PrivateDict::add(const PrivateKey& key, ActionKind action) {
  const auto rendered = key.render();
  if (!entries_.emplace(rendered, action).second) throw Error(ErrorCode::DuplicateKey, rendered);
  by_prefix_.emplace(prefix_of(key), rendered);
}

PrivateDict PrivateDict::parse(std::string_view text, std::filesystem::path source) {
  PrivateDict dict;
  dict.source_ = std::move(source);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto split = body.find_last_of(" \t");
    if (split == std::string::npos) throw Error(ErrorCode::SchemaError, fmt::format("line {}: missing action", line_no));
    const auto key = PrivateKey::parse(trim(std::string_view(body).substr(0, split)));
    if (!key) throw Error(ErrorCode::SchemaError, fmt::format("line {}: malformed key", line_no));
    const auto action_name = std::string_view(body).substr(split + 1);
    const auto action = parse_action(action_name);
    if (!action) throw Error(ErrorCode::UnknownActionKind, fmt::format("line {}: '{}'", line_no, action_name));
    if (*action == ActionKind::CleanText) {
      throw Error(ErrorCode::SchemaError, fmt::format("line {}: CleanText is not available for private tags", line_no));
    }
    const auto vr = vr_from_code(key->vr);
    if (vr && !action_valid_for(*action, *vr)) {
      throw Error(ErrorCode::SchemaError,
                  fmt::format("line {}: {} not valid for VR {}", line_no, to_string(*action), key->vr));
    }
    dict.add(*key, *action);
  }
  return dict;
}

PrivateDict PrivateDict::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

const PrivateDict& PrivateDict::bundled() {
  static const PrivateDict d = parse(kBundledPrivateDict, "<bundled>");
  return d;
}

const char* bundled_private_dict_text() noexcept { return kBundledPrivateDict; }

std::optional<ActionKind> PrivateDict::lookup(const PrivateKey& key) const {
  if (auto it = entries_.find(key.render()); it != entries_.end()) return it->second;
  if (key.vr == "UN") {
    if (auto p = by_prefix_.find(prefix_of(key)); p != by_prefix_.end()) return entries_.at(p->second);
  }
  return std::nullopt;
}

namespace {

void apply_private_action(DataElement& e, ActionKind action, IdentityStore* identity) {
  switch (action) {
    case ActionKind::Empty:
      e.clear_value();
      break;
    case ActionKind::ReplaceDummy:
      if (is_string_vr(e.vr())) {
        e.set_string(e.vr() == VR::PN ? kDummyPersonName : kDummyText);
      } else {
        e.clear_value();
      }
      break;
    case ActionKind::RemapUID:
    case ActionKind::RemapID:
    case ActionKind::ShiftDate: {
      if (!identity) {
        e.clear_value();
        break;
      }
      std::vector<std::string> out;
      for (const auto& v : e.strings()) {
        if (v.empty()) {
          out.push_back(v);
        } else if (action == ActionKind::RemapUID) {
          out.push_back(identity->remap_uid(v));
        } else if (action == ActionKind::RemapID) {
          out.push_back(identity->remap_patient_id(v));
        } else {
          out.push_back(shift_date(v, identity->date_offset_days(), e.vr()));
        }
      }
      e = DataElement::from_strings(e.tag(), e.vr(), out);
      break;
    }
    default:
      break;
  }
}

// Rows for the descendants of a private sequence that is removed or kept whole.
void add_subtree_rows(const DataElement& e, const TagPath& path, ActionKind action, PrivateReport& report) {
  for (std::size_t i = 0; i < e.items().size(); ++i) {
    walk(e.items()[i], [&](const TagPath& rel, const DataElement&) {
      TagPath full;
      full.parents = path.parents;
      full.parents.push_back({path.tag, i});
      full.parents.insert(full.parents.end(), rel.parents.begin(), rel.parents.end());
      full.tag = rel.tag;
      report.rows.push_back({full, action, {}, false});
    });
  }
}

void process(ElementMap& map, const TagPath* parent, std::size_t item, const PrivateDict& dict,
             IdentityStore* identity, PrivateReport& report) {
  const auto path_for = [&](Tag tag) {
    if (!parent) {
      TagPath p;
      p.tag = tag;
      return p;
    }
    return parent->child_in(item, tag);
  };

  std::set<Tag> surviving_blocks;  // creator tags with >= 1 surviving element
  for (auto it = map.begin(); it != map.end();) {
    const Tag tag = it->first;
    DataElement& e = it->second;
    if (!tag.is_private()) {
      for (std::size_t i = 0; i < e.items().size(); ++i) {
        const TagPath here = path_for(tag);
        process(e.items()[i], &here, i, dict, identity, report);
      }
      ++it;
      continue;
    }
    if (tag.is_private_creator()) {
      ++it;
      continue;
    }
    PrivateReportRow row;
    row.path = path_for(tag);
    ActionKind action = ActionKind::Remove;
    if (tag.element >= 0x1000) {
      if (auto creator = private_creator_for(map, tag); creator && !creator->empty()) {
        const auto key = build_private_key(tag, *creator, e.stored_vr_code());
        row.key = key.render();
        if (auto hit = dict.lookup(key)) {
          action = *hit;
          row.dictionary_hit = true;
        }
      }
    }
    row.action = action;
    if (action == ActionKind::Remove) {
      ++report.removed;
      add_subtree_rows(e, row.path, ActionKind::Remove, report);
      report.rows.push_back(std::move(row));
      it = map.erase(it);
      continue;
    }
    add_subtree_rows(e, row.path, action == ActionKind::Keep ? ActionKind::Keep : ActionKind::Remove, report);
    try {
      apply_private_action(e, action, identity);
    } catch (const Error&) {
      e.clear_value();
      row.action = ActionKind::Empty;
    }
    ++report.kept;
    surviving_blocks.insert(Tag{tag.group, static_cast<std::uint16_t>(tag.element >> 8)});
    report.rows.push_back(std::move(row));
    ++it;
  }

  for (auto it = map.begin(); it != map.end();) {
    const Tag tag = it->first;
    if (!tag.is_private_creator()) {
      ++it;
      continue;
    }
    PrivateReportRow row;
    row.path = path_for(tag);
    if (surviving_blocks.count(tag)) {
      row.action = ActionKind::Keep;
      ++report.kept;
      report.rows.push_back(std::move(row));
      ++it;
    } else {
      row.action = ActionKind::Remove;
      ++report.removed;
      report.rows.push_back(std::move(row));
      it = map.erase(it);
    }
  }
}

}  // namespace

PrivateReport deidentify_private(ElementMap& map, const PrivateDict& dict, IdentityStore* identity) {
  PrivateReport report;
  process(map, nullptr, 0, dict, identity, report);
  return report;
}

}  // namespace dcmdeid
