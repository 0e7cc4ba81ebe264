#include "dcmdeid/rule_engine.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>

#include "dcmdeid/codec.hpp"
#include "dcmdeid/error.hpp"
#include "dcmdeid/identity_store.hpp"

namespace dcmdeid {

namespace {

constexpr std::string_view kTciaProfile = R"(# TCIA-style basic profile
@name tcia
@default keep
@private skip
@consolidate on
@vr-default text CleanText
@vr-default CS Keep
@vr-default uid RemapUID
@vr-default date ShiftDate
0008,0014 RemapUID      InstanceCreatorUID
0008,0016 Keep          SOPClassUID
0008,0018 RemapUID      SOPInstanceUID
0008,0050 Remove        AccessionNumber
0008,0070 Keep          Manufacturer
0008,0080 Remove        InstitutionName
0008,0081 Remove        InstitutionAddress
0008,0090 Remove        ReferringPhysicianName
0008,0092 Remove        ReferringPhysicianAddress
0008,0094 Remove        ReferringPhysicianTelephoneNumbers
0008,0100 Keep          CodeValue
0008,0102 Keep          CodingSchemeDesignator
0008,0104 Keep          CodeMeaning
0008,0201 Remove        TimezoneOffsetFromUTC
0008,1010 Remove        StationName
0008,1030 CleanText     StudyDescription
0008,103E CleanText     SeriesDescription
0008,1040 Remove        InstitutionalDepartmentName
0008,1048 Remove        PhysiciansOfRecord
0008,1050 Remove        PerformingPhysicianName
0008,1060 Remove        NameOfPhysiciansReadingStudy
0008,1070 Remove        OperatorsName
0008,1090 Keep          ManufacturerModelName
0008,1150 Keep          ReferencedSOPClassUID
0008,1155 RemapUID      ReferencedSOPInstanceUID
0008,9123 Keep          CreatorVersionUID
0010,0010 ReplaceDummy  PatientName
0010,0020 RemapID       PatientID
0010,0021 Remove        IssuerOfPatientID
0010,0030 Remove        PatientBirthDate
0010,0032 Remove        PatientBirthTime
0010,1000 Remove        OtherPatientIDs
0010,1001 Remove        OtherPatientNames
0010,1002 Remove        OtherPatientIDsSequence
0010,1005 Remove        PatientBirthName
0010,1040 Remove        PatientAddress
0010,1060 Remove        PatientMotherBirthName
0010,1090 Remove        MedicalRecordLocator
0010,2150 Remove        CountryOfResidence
0010,2152 Remove        RegionOfResidence
0010,2154 Remove        PatientTelephoneNumbers
0010,2160 Remove        EthnicGroup
0010,21F0 Remove        PatientReligiousPreference
0012,0010 Keep          ClinicalTrialSponsorName
0012,0020 Keep          ClinicalTrialProtocolID
0012,0030 Keep          ClinicalTrialSiteID
0012,0040 Keep          ClinicalTrialSubjectID
0012,0063 Keep          DeidentificationMethod
0018,1000 Remove        DeviceSerialNumber
0018,1002 RemapUID      DeviceUID
0018,1004 Remove        PlateID
0018,1020 Keep          SoftwareVersions
0018,700A Remove        DetectorID
0020,000D RemapUID      StudyInstanceUID
0020,000E RemapUID      SeriesInstanceUID
0020,0010 Remove        StudyID
0020,0052 RemapUID      FrameOfReferenceUID
0032,1032 Remove        RequestingPhysician
0032,1033 Remove        RequestingService
0038,0010 Remove        AdmissionID
0038,0300 Remove        CurrentPatientLocation
0038,0400 Remove        PatientInstitutionResidence
0040,0006 Remove        ScheduledPerformingPhysicianName
0040,0253 Remove        PerformedProcedureStepID
0040,1001 Remove        RequestedProcedureID
0040,A730 Remove        ContentSequence
)";

constexpr std::string_view kPs315Profile = R"(# Basic application level confidentiality profile
@name ps315
@default keep
@private remove
@consolidate off
@vr-default text CleanText
@vr-default CS Keep
@vr-default date ShiftDate
0008,0014 RemapUID      InstanceCreatorUID
0008,0018 RemapUID      SOPInstanceUID
0008,0050 Empty         AccessionNumber
0008,0070 Keep          Manufacturer
0008,0080 Remove        InstitutionName
0008,0081 Remove        InstitutionAddress
0008,0090 Empty         ReferringPhysicianName
0008,0092 Remove        ReferringPhysicianAddress
0008,0094 Remove        ReferringPhysicianTelephoneNumbers
0008,0100 Keep          CodeValue
0008,0102 Keep          CodingSchemeDesignator
0008,0104 Keep          CodeMeaning
0008,1010 Remove        StationName
0008,1030 Remove        StudyDescription
0008,103E Remove        SeriesDescription
0008,1040 Remove        InstitutionalDepartmentName
0008,1048 Remove        PhysiciansOfRecord
0008,1050 Remove        PerformingPhysicianName
0008,1060 Remove        NameOfPhysiciansReadingStudy
0008,1070 Remove        OperatorsName
0008,1080 Remove        AdmittingDiagnosesDescription
0008,1090 Keep          ManufacturerModelName
0008,1155 RemapUID      ReferencedSOPInstanceUID
0008,2111 Remove        DerivationDescription
0010,0010 Empty         PatientName
0010,0020 RemapID       PatientID
0010,0021 Remove        IssuerOfPatientID
0010,0030 Empty         PatientBirthDate
0010,0032 Remove        PatientBirthTime
0010,1000 Remove        OtherPatientIDs
0010,1001 Remove        OtherPatientNames
0010,1002 Remove        OtherPatientIDsSequence
0010,1005 Remove        PatientBirthName
0010,1040 Remove        PatientAddress
0010,1060 Remove        PatientMotherBirthName
0010,1090 Remove        MedicalRecordLocator
0010,2000 Remove        MedicalAlerts
0010,2110 Remove        Allergies
0010,2150 Remove        CountryOfResidence
0010,2152 Remove        RegionOfResidence
0010,2154 Remove        PatientTelephoneNumbers
0010,2160 Remove        EthnicGroup
0010,2180 Remove        Occupation
0010,21B0 Remove        AdditionalPatientHistory
0010,21F0 Remove        PatientReligiousPreference
0010,4000 Remove        PatientComments
0012,0040 Keep          ClinicalTrialSubjectID
0018,1000 Remove        DeviceSerialNumber
0018,1002 RemapUID      DeviceUID
0018,1004 Remove        PlateID
0018,1030 Remove        ProtocolName
0018,700A Remove        DetectorID
0020,000D RemapUID      StudyInstanceUID
0020,000E RemapUID      SeriesInstanceUID
0020,0010 Empty         StudyID
0020,0052 RemapUID      FrameOfReferenceUID
0020,4000 Remove        ImageComments
0032,1032 Remove        RequestingPhysician
0032,1033 Remove        RequestingService
0032,1060 Remove        RequestedProcedureDescription
0032,4000 Remove        StudyComments
0038,0010 Remove        AdmissionID
0038,0300 Remove        CurrentPatientLocation
0038,0400 Remove        PatientInstitutionResidence
0038,0500 Remove        PatientState
0038,4000 Remove        VisitComments
0040,0006 Remove        ScheduledPerformingPhysicianName
0040,0253 Remove        PerformedProcedureStepID
0040,0254 Remove        PerformedProcedureStepDescription
0040,0280 Remove        CommentsOnThePerformedProcedureStep
0040,1001 Remove        RequestedProcedureID
0040,1400 Remove        RequestedProcedureComments
0040,2400 Remove        ImagingServiceRequestComments
0040,A730 Remove        ContentSequence
)";

constexpr std::string_view kCustomRules = R"(# Collection-specific overrides
@custom v2
0008,1010 Keep          StationName
0018,1000 Keep          DeviceSerialNumber
0018,1002 Keep          DeviceUID
0018,1004 Keep          PlateID
0018,700A Keep          DetectorID
0018,1020 Keep          SoftwareVersions
0008,0008 Keep          ImageType
0008,0060 Keep          Modality
0018,0015 Keep          BodyPartExamined
0018,5100 Keep          PatientPosition
0028,0301 Keep          BurnedInAnnotation
0010,0040 Keep          PatientSex
0010,1010 Keep          PatientAge
0010,1020 Keep          PatientSize
0010,1030 Keep          PatientWeight
0010,21A0 Keep          SmokingStatus
0010,21C0 Keep          PregnancyStatus
0010,21D0 Remove        LastMenstrualDate
0010,2110 Remove        Allergies
0010,2180 Remove        Occupation
0038,0500 Remove        PatientState
0010,2000 Remove        MedicalAlerts
0010,4000 Remove        PatientComments
0020,4000 Remove        ImageComments
0032,4000 Remove        StudyComments
0038,4000 Remove        VisitComments
0040,0280 Remove        CommentsOnThePerformedProcedureStep
0040,1400 Remove        RequestedProcedureComments
0040,2400 Remove        ImagingServiceRequestComments
0008,1080 Remove        AdmittingDiagnosesDescription
0008,2111 Remove        DerivationDescription
0020,1040 Keep          PositionReferenceIndicator
0018,0010 CleanText     ContrastBolusAgent
0018,1030 CleanText     ProtocolName
0018,1400 CleanText     AcquisitionDeviceProcessingDescription
0032,1060 CleanText     RequestedProcedureDescription
0040,0254 CleanText     PerformedProcedureStepDescription
0010,21B0 CleanText     AdditionalPatientHistory
0012,0062 Keep          PatientIdentityRemoved
0012,0063 Keep          DeidentificationMethod
)";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

[[noreturn]] void schema_error(std::size_t line, std::string_view what) {
  throw Error(ErrorCode::SchemaError, fmt::format("line {}: {}", line, what));
}

ActionKind action_or_throw(std::string_view name) {
  auto a = parse_action(name);
  if (!a) throw Error(ErrorCode::UnknownActionKind, std::string(name));
  return *a;
}

Tag rule_tag(std::string_view text, std::size_t line) {
  // Strict GGGG,EEEE form.
  if (text.size() != 9 || text[4] != ',') schema_error(line, fmt::format("bad tag '{}'", text));
  for (std::size_t i = 0; i < 9; ++i) {
    if (i != 4 && !std::isxdigit(static_cast<unsigned char>(text[i]))) {
      schema_error(line, fmt::format("bad tag '{}'", text));
    }
  }
  return *Tag::parse(text);
}

const std::set<std::string, std::less<>> kClasses{"text", "date", "uid"};

void parse_into(std::string_view text, RuleConfig& cfg, int depth) {
  std::set<Tag> seen_table;
  std::set<Tag> seen_custom;
  bool in_custom = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto f = fields(line);

    if (f[0].front() == '@') {
      const std::string dir = lower(f[0]);
      if (dir == "@profile") {
        if (f.size() != 2) schema_error(line_no, "@profile takes one argument");
        if (depth > 0) schema_error(line_no, "nested @profile");
        if (!seen_table.empty() || in_custom) schema_error(line_no, "@profile must precede rules");
        RuleConfig base;
        std::string_view body;
        try {
          body = bundled_profile_text(lower(f[1]));
        } catch (const Error&) {
          schema_error(line_no, fmt::format("unknown profile '{}'", f[1]));
        }
        parse_into(body, base, depth + 1);
        cfg.table = std::move(base.table);
      } else if (dir == "@name") {
        if (f.size() != 2) schema_error(line_no, "@name takes one argument");
        cfg.table.profile_name = std::string(f[1]);
      } else if (dir == "@default") {
        if (f.size() != 2) schema_error(line_no, "@default takes one argument");
        cfg.table.default_action = action_or_throw(f[1]);
      } else if (dir == "@vr-default") {
        if (f.size() != 3) schema_error(line_no, "@vr-default takes a class and an action");
        const ActionKind a = action_or_throw(f[2]);
        const std::string cls = lower(f[1]);
        if (kClasses.count(cls)) {
          cfg.table.class_rules[cls] = a;
        } else if (auto vr = vr_from_code(f[1]); vr && f[1].size() == 2) {
          cfg.table.vr_rules[*vr] = a;
        } else {
          schema_error(line_no, fmt::format("unknown VR class '{}'", f[1]));
        }
      } else if (dir == "@private") {
        if (f.size() != 2) schema_error(line_no, "@private takes one argument");
        const std::string v = lower(f[1]);
        if (v == "skip") {
          cfg.table.private_policy = PrivatePolicy::Skip;
        } else if (v == "remove") {
          cfg.table.private_policy = PrivatePolicy::Remove;
        } else {
          schema_error(line_no, fmt::format("bad @private value '{}'", f[1]));
        }
      } else if (dir == "@consolidate") {
        if (f.size() != 2) schema_error(line_no, "@consolidate takes on|off");
        const std::string v = lower(f[1]);
        if (v != "on" && v != "off") schema_error(line_no, fmt::format("bad @consolidate value '{}'", f[1]));
        cfg.table.consolidate_free_text = v == "on";
      } else if (dir == "@custom") {
        if (f.size() > 2) schema_error(line_no, "@custom takes at most one argument");
        in_custom = true;
        if (f.size() == 2) cfg.custom.version = std::string(f[1]);
      } else {
        schema_error(line_no, fmt::format("unknown directive '{}'", f[0]));
      }
      continue;
    }

    if (f.size() < 2) schema_error(line_no, "expected 'GGGG,EEEE <ActionKind>'");
    const Tag tag = rule_tag(f[0], line_no);
    const ActionKind a = action_or_throw(f[1]);
    auto& seen = in_custom ? seen_custom : seen_table;
    if (!seen.insert(tag).second) throw Error(ErrorCode::DuplicateTagRule, tag.str());
    if (in_custom) {
      cfg.custom.overrides[tag] = a;
    } else {
      cfg.table.explicit_rules[tag] = a;
    }
  }
}

std::string hex16(std::uint64_t v) { return fmt::format("{:016x}", v); }

bool is_uid_class(VR vr) { return vr == VR::UI; }

struct Engine {
  const RuleConfig& rules;
  const DeidContext& ctx;
  const std::map<TagPath, std::string>* cleaned = nullptr;
  bool consolidated = false;
  DeidReport report;

  ActionKind resolve(Tag tag, VR vr) const { return resolve_action(rules.table, rules.custom, tag, vr); }

  void subtree_rows(const DataElement& e, const TagPath& path, ActionKind action, std::string_view note) {
    for (std::size_t i = 0; i < e.items().size(); ++i) {
      for (const auto& [t, child] : e.items()[i]) {
        TagPath p = path.child_in(i, t);
        DeidReportRow row;
        row.path = p;
        row.action = action;
        row.before_hash = value_hash(child.raw());
        row.after_hash = action == ActionKind::Keep ? row.before_hash : std::string{};
        row.note = std::string(note);
        report.rows.push_back(std::move(row));
        subtree_rows(child, p, action, note);
      }
    }
  }

  std::string clean_one(const TagPath& path, const std::string& text) {
    if (consolidated) {
      if (cleaned) {
        if (auto it = cleaned->find(path); it != cleaned->end()) return it->second;
      }
      return text;
    }
    if (!ctx.detector || text.empty()) return text;
    ++report.detector_calls;
    auto spans = detect_entities(*ctx.detector, text);
    if (ctx.whitelist) spans = filter_whitelist(std::move(spans), *ctx.whitelist, text);
    report.entities += spans.size();
    return remove_spans(text, spans);
  }

  void set_values(DataElement& e, const std::vector<std::string>& before, const std::vector<std::string>& after) {
    if (before != after) e = DataElement::from_strings(e.tag(), e.vr(), after);
  }

  // Applies `action` to a non-sequence element. Returns false when the element is removed.
  bool apply(DataElement& e, const TagPath& path, ActionKind action) {
    switch (action) {
      case ActionKind::Remove:
        return false;
      case ActionKind::Empty:
        e.clear_value();
        return true;
      case ActionKind::Keep:
        return true;
      case ActionKind::ReplaceDummy:
        if (e.vr() == VR::UI) return apply(e, path, ActionKind::RemapUID);
        if (is_date_class(e.vr())) return apply(e, path, ActionKind::ShiftDate);
        if (!is_string_vr(e.vr())) {
          e.clear_value();
        } else if (!e.raw().empty()) {
          e.set_string(e.vr() == VR::PN ? kDummyPersonName : kDummyText);
        }
        return true;
      case ActionKind::RemapUID:
      case ActionKind::RemapID:
      case ActionKind::ShiftDate: {
        if (!action_valid_for(action, e.vr())) {
          throw Error(ErrorCode::InvalidConfig,
                      fmt::format("{} not applicable to VR {}", to_string(action), vr_code(e.vr())));
        }
        if (!ctx.identity) throw Error(ErrorCode::InvalidConfig, "no identity store");
        const auto before = e.strings();
        std::vector<std::string> after;
        after.reserve(before.size());
        for (const auto& v : before) {
          if (v.empty()) {
            after.push_back(v);
          } else if (action == ActionKind::RemapUID) {
            after.push_back(ctx.identity->remap_uid(v));
          } else if (action == ActionKind::RemapID) {
            after.push_back(ctx.identity->remap_patient_id(v));
          } else {
            after.push_back(shift_date(v, ctx.identity->date_offset_days(), e.vr()));
          }
        }
        set_values(e, before, after);
        return true;
      }
      case ActionKind::CleanText: {
        if (!action_valid_for(action, e.vr())) {
          throw Error(ErrorCode::InvalidConfig, fmt::format("CleanText not applicable to VR {}", vr_code(e.vr())));
        }
        const std::string before = e.string();
        const std::string after = clean_one(path, before);
        if (after != before) e.set_string(after);
        return true;
      }
    }
    return true;
  }

  void run_detector_only(const TagPath& path, const DataElement& e) {
    // Empty/ReplaceDummy text elements still go through detection so that
    // detector failures are surfaced; the action itself wins regardless.
    if (consolidated || !ctx.detector || !is_text_class(e.vr())) return;
    const std::string text = e.string();
    if (text.empty()) return;
    (void)clean_one(path, text);
  }

  void process(ElementMap& map, const TagPath* parent, std::size_t item) {
    for (auto it = map.begin(); it != map.end();) {
      DataElement& e = it->second;
      const Tag tag = it->first;
      TagPath path = parent ? parent->child_in(item, tag) : TagPath{{}, tag};

      if (tag.is_private()) {
        if (rules.table.private_policy == PrivatePolicy::Remove) {
          DeidReportRow row{path, ActionKind::Remove, value_hash(e.raw()), {}, false, "private"};
          report.rows.push_back(std::move(row));
          subtree_rows(e, path, ActionKind::Remove, "private");
          it = map.erase(it);
          continue;
        }
        if (!ctx.private_dict) {
          DeidReportRow row{path, ActionKind::Keep, value_hash(e.raw()), value_hash(e.raw()), false, "private"};
          report.rows.push_back(std::move(row));
          subtree_rows(e, path, ActionKind::Keep, "private");
        }
        ++it;
        continue;
      }

      const ActionKind action = resolve(tag, e.vr());
      if (e.is_sequence()) {
        if (action == ActionKind::Remove || action == ActionKind::Empty) {
          report.rows.push_back({path, action, value_hash(e.raw()), {}, false, {}});
          subtree_rows(e, path, ActionKind::Remove, {});
          if (action == ActionKind::Remove) {
            it = map.erase(it);
          } else {
            e.items().clear();
            ++it;
          }
          continue;
        }
        report.rows.push_back({path, ActionKind::Keep, {}, {}, false, {}});
        for (std::size_t i = 0; i < e.items().size(); ++i) process(e.items()[i], &path, i);
        ++it;
        continue;
      }

      DeidReportRow row;
      row.path = path;
      row.action = action;
      row.before_hash = value_hash(e.raw());
      bool keep = true;
      try {
        if (action == ActionKind::Empty || action == ActionKind::ReplaceDummy) run_detector_only(path, e);
        keep = apply(e, path, action);
      } catch (const Error& err) {
        e.clear_value();
        row.action = ActionKind::Empty;
        row.degraded = true;
        row.note = err.what();
        ++report.degraded;
      }
      row.after_hash = keep ? value_hash(e.raw()) : std::string{};
      report.rows.push_back(std::move(row));
      it = keep ? std::next(it) : map.erase(it);
    }
  }
};

}  // namespace

std::string_view bundled_profile_text(std::string_view name) {
  if (name == "tcia") return kTciaProfile;
  if (name == "ps315") return kPs315Profile;
  throw Error(ErrorCode::InvalidConfig, fmt::format("unknown profile '{}'", name));
}

std::string_view bundled_custom_rules_text() { return kCustomRules; }

RuleConfig load_rule_config(std::string_view text) {
  RuleConfig cfg;
  parse_into(text, cfg, 0);
  return cfg;
}

RuleConfig load_rule_config_file(const std::filesystem::path& path) {
  const Bytes b = read_bytes(path);
  return load_rule_config(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

RuleConfig bundled_rule_config(std::string_view profile, bool with_custom_rules) {
  RuleConfig cfg = load_rule_config(bundled_profile_text(profile));
  if (with_custom_rules) cfg.custom = load_rule_config(kCustomRules).custom;
  return cfg;
}

ActionKind resolve_action(const RuleTable& table, const CustomRuleSet& custom, Tag tag, VR vr) {
  if (auto it = custom.overrides.find(tag); it != custom.overrides.end()) return it->second;
  if (auto it = table.explicit_rules.find(tag); it != table.explicit_rules.end()) return it->second;
  if (auto it = table.vr_rules.find(vr); it != table.vr_rules.end()) return it->second;
  const char* cls = is_text_class(vr) ? "text" : is_date_class(vr) ? "date" : is_uid_class(vr) ? "uid" : nullptr;
  if (cls) {
    if (auto it = table.class_rules.find(cls); it != table.class_rules.end()) return it->second;
  }
  return table.default_action;
}

std::string escape_note_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '\x1b' || c == '\x1f') out.push_back('\x1b');
    out.push_back(c);
  }
  return out;
}

std::string unescape_note_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\x1b' && i + 1 < text.size()) ++i;
    out.push_back(text[i]);
  }
  return out;
}

MedicalNote MedicalNote::build(std::vector<std::pair<TagPath, std::string>> parts) {
  MedicalNote note;
  for (auto& [path, text] : parts) {
    if (!note.segments.empty()) note.document += kSeparator;
    NoteSegment seg;
    seg.path = path;
    seg.start = note.document.size();
    note.document += escape_note_text(text);
    seg.end = note.document.size();
    seg.text = std::move(text);
    note.segments.push_back(std::move(seg));
  }
  return note;
}

MedicalNote consolidate_free_text(const ElementMap& ds, const RuleTable& table, const CustomRuleSet& custom) {
  std::vector<std::pair<TagPath, std::string>> parts;
  std::function<void(const ElementMap&, const TagPath*, std::size_t)> visit =
      [&](const ElementMap& map, const TagPath* parent, std::size_t item) {
        for (const auto& [tag, e] : map) {
          if (tag.is_private()) continue;
          TagPath path = parent ? parent->child_in(item, tag) : TagPath{{}, tag};
          const ActionKind a = resolve_action(table, custom, tag, e.vr());
          if (e.is_sequence()) {
            if (a == ActionKind::Remove || a == ActionKind::Empty) continue;
            for (std::size_t i = 0; i < e.items().size(); ++i) visit(e.items()[i], &path, i);
            continue;
          }
          if (!is_text_class(e.vr())) continue;
          if (a != ActionKind::CleanText && a != ActionKind::Empty && a != ActionKind::ReplaceDummy) continue;
          std::string text = e.string();
          if (text.empty()) continue;
          parts.emplace_back(std::move(path), std::move(text));
        }
      };
  visit(ds, nullptr, 0);
  return MedicalNote::build(std::move(parts));
}

std::map<TagPath, std::string> apply_entity_removals(const MedicalNote& note, const std::vector<EntitySpan>& entities) {
  for (const auto& s : entities) {
    if (s.start > s.end || s.end > note.document.size()) {
      throw Error(ErrorCode::SpanOutOfBounds,
                  fmt::format("[{}, {}) in document of {} bytes", s.start, s.end, note.document.size()));
    }
  }
  std::map<TagPath, std::string> out;
  for (const auto& seg : note.segments) {
    std::vector<bool> drop(seg.end - seg.start, false);
    bool any = false;
    for (const auto& s : entities) {
      const std::size_t a = std::max(s.start, seg.start);
      const std::size_t b = std::min(s.end, seg.end);
      for (std::size_t i = a; i < b; ++i) {
        drop[i - seg.start] = true;
        any = true;
      }
    }
    if (!any) continue;
    // Work on the escaped text; an escape pair is dropped together.
    std::string kept;
    const std::string_view esc(note.document.data() + seg.start, seg.end - seg.start);
    for (std::size_t i = 0; i < esc.size(); ++i) {
      if (esc[i] == '\x1b' && i + 1 < esc.size()) {
        if (!drop[i] && !drop[i + 1]) {
          kept.push_back(esc[i]);
          kept.push_back(esc[i + 1]);
        }
        ++i;
        continue;
      }
      if (!drop[i]) kept.push_back(esc[i]);
    }
    out.emplace(seg.path, unescape_note_text(kept));
  }
  return out;
}

std::map<ActionKind, std::size_t> DeidReport::action_counts() const {
  std::map<ActionKind, std::size_t> out;
  for (const auto& r : rows) ++out[r.action];
  return out;
}

std::string value_hash(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return hex16(h);
}

DeidResult deidentify_dataset(DataSet ds, const RuleConfig& rules, const DeidContext& ctx) {
  Engine engine{rules, ctx, nullptr, false, {}};
  std::map<TagPath, std::string> cleaned;
  std::set<TagPath> failed;
  if (rules.table.consolidate_free_text) {
    engine.consolidated = true;
    const MedicalNote note = consolidate_free_text(ds, rules.table, rules.custom);
    if (ctx.detector && !note.document.empty()) {
      ++engine.report.detector_calls;
      try {
        auto spans = detect_entities(*ctx.detector, note.document);
        if (ctx.whitelist) spans = filter_whitelist(std::move(spans), *ctx.whitelist, note.document);
        engine.report.entities += spans.size();
        cleaned = apply_entity_removals(note, spans);
      } catch (const Error&) {
        for (const auto& seg : note.segments) failed.insert(seg.path);
      }
    }
    engine.cleaned = &cleaned;
  }

  engine.process(ds, nullptr, 0);

  if (!failed.empty()) {
    // The single detector pass failed: every element that fed it is emptied.
    for (auto& row : engine.report.rows) {
      if (!failed.count(row.path) || row.action == ActionKind::Remove) continue;
      ElementMap* map = &ds;
      for (const auto& step : row.path.parents) {
        DataElement* seq = map->find(step.sequence);
        map = seq && step.item < seq->items().size() ? &seq->items()[step.item] : nullptr;
        if (!map) break;
      }
      DataElement* e = map ? map->find(row.path.tag) : nullptr;
      if (!e) continue;
      e->clear_value();
      row.action = ActionKind::Empty;
      row.after_hash = value_hash(e->raw());
      row.degraded = true;
      row.note = "detector unavailable";
      ++engine.report.degraded;
    }
  }

  if (rules.table.private_policy == PrivatePolicy::Skip && ctx.private_dict) {
    auto pr = deidentify_private(ds, *ctx.private_dict, ctx.identity);
    for (auto& r : pr.rows) {
      DeidReportRow row;
      row.path = std::move(r.path);
      row.action = r.action;
      row.note = r.dictionary_hit ? fmt::format("private {}", r.key) : fmt::format("private miss {}", r.key);
      engine.report.rows.push_back(std::move(row));
    }
  }

  // Keep the file meta header consistent with the remapped instance UID.
  if (const DataElement* sop = ds.find(tags::kSOPInstanceUID)) {
    if (DataElement* meta = ds.file_meta.find(tags::kMediaStorageSOPInstanceUID)) {
      if (meta->string() != sop->string()) meta->set_string(sop->string());
    }
  }

  std::stable_sort(engine.report.rows.begin(), engine.report.rows.end(),
                   [](const DeidReportRow& a, const DeidReportRow& b) { return a.path < b.path; });
  return DeidResult{std::move(ds), std::move(engine.report)};
}

}  // namespace dcmdeid
