#include <gtest/gtest.h>

#include <random>

#include "dcmdeid/error.hpp"
#include "dcmdeid/identity_store.hpp"
#include "dcmdeid/rule_engine.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace dcmdeid;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no Error thrown";
  return ErrorCode::IoError;
}

constexpr Tag kStudyDate{0x0008, 0x0020};
constexpr Tag kStationName{0x0008, 0x1010};
constexpr Tag kStudyDescription{0x0008, 0x1030};
constexpr Tag kSeriesDescription{0x0008, 0x103E};
constexpr Tag kReferencedImageSequence{0x0008, 0x1140};
constexpr Tag kReferencedSOPInstanceUID{0x0008, 0x1155};
constexpr Tag kBirthDate{0x0010, 0x0030};
constexpr Tag kAdditionalHistory{0x0010, 0x21B0};
constexpr Tag kStudyInstanceUID{0x0020, 0x000D};
constexpr Tag kImageComments{0x0020, 0x4000};

DataSet sample() {
  DataSet ds;
  ds.make_file_meta("1.2.840.10008.5.1.4.1.1.2", "1.2.826.0.1.7");
  ds.set(DataElement::from_string(tags::kSOPClassUID, VR::UI, "1.2.840.10008.5.1.4.1.1.2"));
  ds.set(DataElement::from_string(tags::kSOPInstanceUID, VR::UI, "1.2.826.0.1.7"));
  ds.set(DataElement::from_string(kStudyDate, VR::DA, "20200101"));
  ds.set(DataElement::from_string(kStationName, VR::SH, "CT01"));
  ds.set(DataElement::from_string(kStudyDescription, VR::LO, "CT CHEST for John Smith"));
  ds.set(DataElement::from_string(kSeriesDescription, VR::LO, "MR BREAST"));
  SequenceItem ref;
  ref.set(DataElement::from_string(kReferencedSOPInstanceUID, VR::UI, "1.2.826.0.1.6"));
  ds.set(DataElement::sequence(kReferencedImageSequence, {ref}));
  ds.set(DataElement::from_string(tags::kPatientName, VR::PN, "SMITH^JOHN"));
  ds.set(DataElement::from_string(tags::kPatientID, VR::LO, "MRN0042"));
  ds.set(DataElement::from_string(kBirthDate, VR::DA, "19600102"));
  ds.set(DataElement::from_string(kAdditionalHistory, VR::LT, "Seen by Dr. Jones on 01/02/2019"));
  ds.set(DataElement::from_string(kStudyInstanceUID, VR::UI, "1.2.826.0.1.1"));
  ds.set(DataElement::from_string(kImageComments, VR::LT, "comment"));
  ds.set(DataElement::from_string(Tag(0x0009, 0x0010), VR::LO, "gems_petd_01"));
  ds.set(DataElement::from_string(Tag(0x0009, 0x102B), VR::SL, ""));
  ds.set(DataElement::from_string(Tag(0x0009, 0x1036), VR::LO, "secret"));
  return ds;
}

}  // namespace

TEST(RuleConfigLoader, ParsesDirectivesAndRules) {
  auto cfg = load_rule_config(
      "# demo\n"
      "@name demo\n"
      "@default Remove\n"
      "@vr-default text CleanText\n"
      "@vr-default PN Empty\n"
      "@private remove\n"
      "@consolidate on\n"
      "0010,0010 ReplaceDummy   PatientName\n"
      "@custom v9\n"
      "0010,0010 Keep\n");
  EXPECT_EQ(cfg.table.profile_name, "demo");
  EXPECT_EQ(cfg.table.default_action, ActionKind::Remove);
  EXPECT_EQ(cfg.table.class_rules.at("text"), ActionKind::CleanText);
  EXPECT_EQ(cfg.table.vr_rules.at(VR::PN), ActionKind::Empty);
  EXPECT_EQ(cfg.table.private_policy, PrivatePolicy::Remove);
  EXPECT_TRUE(cfg.table.consolidate_free_text);
  EXPECT_EQ(cfg.table.explicit_rules.at(tags::kPatientName), ActionKind::ReplaceDummy);
  EXPECT_EQ(cfg.custom.version, "v9");
  EXPECT_EQ(cfg.custom.overrides.at(tags::kPatientName), ActionKind::Keep);
}

TEST(RuleConfigLoader, ProfileInclude) {
  auto cfg = load_rule_config("@profile tcia\n0008,103E Keep\n");
  EXPECT_EQ(cfg.table.profile_name, "tcia");
  EXPECT_EQ(cfg.table.explicit_rules.at(kSeriesDescription), ActionKind::Keep);
  EXPECT_EQ(cfg.table.explicit_rules.at(tags::kPatientID), ActionKind::RemapID);
}

TEST(RuleConfigLoader, Errors) {
  EXPECT_EQ(code_of([] { load_rule_config("0010,0010 Shred\n"); }), ErrorCode::UnknownActionKind);
  EXPECT_EQ(code_of([] { load_rule_config("0010,0010 Keep\n0010,0010 Remove\n"); }), ErrorCode::DuplicateTagRule);
  EXPECT_EQ(code_of([] { load_rule_config("(0010,0010) Keep\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { load_rule_config("0010,0010\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { load_rule_config("@bogus x\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { load_rule_config("@profile nope\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { load_rule_config("0010,0010 Keep\n@profile tcia\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { load_rule_config("@private sometimes\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { load_rule_config("@vr-default XYZ Keep\n"); }), ErrorCode::SchemaError);
  try {
    load_rule_config("\n\n0010,001G Keep\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  // a table rule and a custom rule on the same tag are fine
  EXPECT_NO_THROW(load_rule_config("0010,0010 Keep\n@custom\n0010,0010 Remove\n"));
}

TEST(RuleConfigLoader, FromFile) {
  oracle::TempDir dir;
  oracle::write_text(dir / "r.txt", "@profile ps315\n");
  EXPECT_EQ(load_rule_config_file(dir / "r.txt").table.profile_name, "ps315");
  EXPECT_EQ(code_of([&] { load_rule_config_file(dir / "none.txt"); }), ErrorCode::IoError);
}

TEST(BundledRules, ProfilesAndOverlay) {
  EXPECT_EQ(code_of([] { bundled_profile_text("hipaa"); }), ErrorCode::InvalidConfig);
  auto tcia = bundled_rule_config("tcia", true);
  EXPECT_EQ(tcia.custom.overrides.size(), 40u);
  EXPECT_EQ(tcia.custom.version, "v2");
  auto ps = bundled_rule_config("ps315", false);
  EXPECT_TRUE(ps.custom.overrides.empty());
  EXPECT_EQ(ps.table.private_policy, PrivatePolicy::Remove);
  EXPECT_EQ(resolve_action(ps.table, ps.custom, tags::kPatientName, VR::PN), ActionKind::Empty);
}

TEST(ResolveAction, Precedence) {
  RuleTable t;
  t.default_action = ActionKind::Keep;
  t.class_rules["text"] = ActionKind::CleanText;
  t.class_rules["date"] = ActionKind::ShiftDate;
  t.class_rules["uid"] = ActionKind::RemapUID;
  t.vr_rules[VR::SH] = ActionKind::Empty;
  t.explicit_rules[kStationName] = ActionKind::Remove;
  CustomRuleSet c;
  EXPECT_EQ(resolve_action(t, c, Tag(0x0008, 0x0070), VR::US), ActionKind::Keep);       // default
  EXPECT_EQ(resolve_action(t, c, Tag(0x0008, 0x0070), VR::LO), ActionKind::CleanText);  // class
  EXPECT_EQ(resolve_action(t, c, Tag(0x0008, 0x0070), VR::DA), ActionKind::ShiftDate);
  EXPECT_EQ(resolve_action(t, c, Tag(0x0008, 0x0070), VR::UI), ActionKind::RemapUID);
  EXPECT_EQ(resolve_action(t, c, Tag(0x0008, 0x0070), VR::SH), ActionKind::Empty);      // VR beats class
  EXPECT_EQ(resolve_action(t, c, kStationName, VR::SH), ActionKind::Remove);            // explicit beats VR
  c.overrides[kStationName] = ActionKind::Keep;
  EXPECT_EQ(resolve_action(t, c, kStationName, VR::SH), ActionKind::Keep);              // custom beats all
}

TEST(MedicalNoteTest, EscapingRoundTrips) {
  std::string nasty = std::string("a\x1f") + "b\x1b" + "c\n\x1f\nd";
  EXPECT_EQ(unescape_note_text(escape_note_text(nasty)), nasty);
  EXPECT_EQ(escape_note_text(nasty).find(MedicalNote::kSeparator), std::string::npos);
  auto note = MedicalNote::build({{TagPath{{}, Tag(1, 1)}, nasty}, {TagPath{{}, Tag(1, 2)}, "x"}});
  ASSERT_EQ(note.segments.size(), 2u);
  EXPECT_EQ(note.document.substr(note.segments[1].start - 3, 3), MedicalNote::kSeparator);
}

TEST(MedicalNoteTest, RemovalsMatchPerSegmentMask) {
  std::mt19937 rng(8);
  for (int round = 0; round < 200; ++round) {
    std::vector<std::pair<TagPath, std::string>> parts;
    int n = 1 + rng() % 4;
    for (int k = 0; k < n; ++k) {
      std::string s(rng() % 12, ' ');
      for (auto& c : s) c = static_cast<char>('a' + rng() % 26);
      parts.push_back({TagPath{{}, Tag(0x0010, static_cast<std::uint16_t>(k + 1))}, s});
    }
    auto note = MedicalNote::build(parts);
    std::vector<EntitySpan> ents;
    int m = note.document.empty() ? 0 : rng() % 4;
    for (int k = 0; k < m; ++k) {
      std::size_t a = rng() % note.document.size();
      std::size_t b = a + 1 + rng() % (note.document.size() - a);
      ents.push_back({a, b, EntityCategory::Other, 1.0, ""});
    }
    auto got = apply_entity_removals(note, ents);
    for (const auto& seg : note.segments) {
      std::vector<std::pair<std::size_t, std::size_t>> local;
      bool touched = false;
      for (const auto& e : ents) {
        std::size_t a = std::max(e.start, seg.start), b = std::min(e.end, seg.end);
        if (a < b) {
          local.emplace_back(a - seg.start, b - seg.start);
          touched = true;
        }
      }
      if (!touched) {
        EXPECT_EQ(got.count(seg.path), 0u);
      } else {
        ASSERT_EQ(got.count(seg.path), 1u);
        EXPECT_EQ(got.at(seg.path), oracle::mask_remove(seg.text, local));
      }
    }
  }
}

TEST(MedicalNoteTest, EscapePairsDropTogether) {
  std::string text = std::string("ab\x1f") + "cd";
  auto note = MedicalNote::build({{TagPath{{}, Tag(1, 1)}, text}});
  // escaped: a b ESC US c d; drop only the ESC byte
  auto out = apply_entity_removals(note, {{2, 3, EntityCategory::Other, 1.0, ""}});
  EXPECT_EQ(out.begin()->second, "abcd");
  EXPECT_EQ(code_of([&] { apply_entity_removals(note, {{0, 99, EntityCategory::Other, 1.0, ""}}); }),
            ErrorCode::SpanOutOfBounds);
}

TEST(MedicalNoteTest, ConsolidationSelectsFreeText) {
  auto cfg = bundled_rule_config("tcia", true);
  auto note = consolidate_free_text(sample(), cfg.table, cfg.custom);
  std::vector<Tag> tags;
  for (const auto& s : note.segments) tags.push_back(s.path.tag);
  // StudyDescription, SeriesDescription, PatientName (ReplaceDummy), AdditionalPatientHistory
  EXPECT_EQ(tags, (std::vector<Tag>{kStudyDescription, kSeriesDescription, tags::kPatientName, kAdditionalHistory}));
}

TEST(DeidentifyDatasetTest, TciaWithCustomRules) {
  IdentityStore ids("salt");
  PatternDetector det;
  DeidContext ctx{&ids, &det, &Whitelist::bundled(), &PrivateDict::bundled()};
  auto res = deidentify_dataset(sample(), bundled_rule_config("tcia", true), ctx);
  const DataSet& out = res.dataset;

  EXPECT_EQ(out.get_string(tags::kPatientName), "ANON^ANON");
  EXPECT_EQ(out.get_string(tags::kPatientID), ids.remap_patient_id("MRN0042"));
  EXPECT_FALSE(out.contains(kBirthDate));
  EXPECT_EQ(out.get_string(kStudyDate), "20200430");
  EXPECT_EQ(out.get_string(kStationName), "CT01");
  EXPECT_EQ(out.get_string(kSeriesDescription), "MR BREAST");
  EXPECT_EQ(out.get_string(kStudyDescription), "CT CHEST for");
  EXPECT_EQ(out.get_string(kAdditionalHistory), "Seen by Dr.  on");
  EXPECT_FALSE(out.contains(kImageComments));
  EXPECT_EQ(out.get_string(tags::kSOPClassUID), "1.2.840.10008.5.1.4.1.1.2");
  const std::string new_sop = ids.remap_uid("1.2.826.0.1.7");
  EXPECT_EQ(out.get_string(tags::kSOPInstanceUID), new_sop);
  EXPECT_EQ(out.file_meta.get_string(tags::kMediaStorageSOPInstanceUID), new_sop);
  EXPECT_EQ(out.find(kReferencedImageSequence)->items()[0].get_string(kReferencedSOPInstanceUID),
            ids.remap_uid("1.2.826.0.1.6"));
  EXPECT_TRUE(out.contains(Tag(0x0009, 0x102B)));
  EXPECT_FALSE(out.contains(Tag(0x0009, 0x1036)));

  EXPECT_EQ(res.report.detector_calls, 1u);
  EXPECT_EQ(res.report.degraded, 0u);
  for (std::size_t i = 1; i < res.report.rows.size(); ++i)
    EXPECT_LE(res.report.rows[i - 1].path, res.report.rows[i].path);
}

TEST(DeidentifyDatasetTest, BaseProfileDropsCustomTags) {
  IdentityStore ids("salt");
  PatternDetector det;
  DeidContext ctx{&ids, &det, &Whitelist::bundled(), nullptr};
  auto res = deidentify_dataset(sample(), bundled_rule_config("tcia", false), ctx);
  EXPECT_FALSE(res.dataset.contains(kStationName));
  EXPECT_TRUE(res.dataset.contains(kImageComments));  // text class -> CleanText, nothing detected
  // no private dict: private elements are left alone
  EXPECT_TRUE(res.dataset.contains(Tag(0x0009, 0x1036)));
}

TEST(DeidentifyDatasetTest, WhitelistOffEmptiesDescriptions) {
  IdentityStore ids("salt");
  PatternDetector det;
  DeidContext ctx{&ids, &det, nullptr, nullptr};
  auto res = deidentify_dataset(sample(), bundled_rule_config("tcia", true), ctx);
  EXPECT_EQ(res.dataset.get_string(kSeriesDescription), "");
}

TEST(DeidentifyDatasetTest, PerElementModeCallsDetectorPerValue) {
  auto cfg = bundled_rule_config("tcia", true);
  cfg.table.consolidate_free_text = false;
  IdentityStore ids("salt");
  oracle::NeedleDetector det({"Smith", "Jones"});
  DeidContext ctx{&ids, &det, nullptr, nullptr};
  auto res = deidentify_dataset(sample(), cfg, ctx);
  EXPECT_EQ(det.calls(), 4u);  // three CleanText values plus the PatientName dummy check
  EXPECT_EQ(res.dataset.get_string(kStudyDescription), "CT CHEST for John");
  EXPECT_EQ(res.dataset.get_string(kAdditionalHistory), "Seen by Dr.  on 01/02/2019");
}

TEST(DeidentifyDatasetTest, DetectorFailureDegradesSafely) {
  IdentityStore ids("salt");
  oracle::ThrowingDetector det;
  DeidContext ctx{&ids, &det, &Whitelist::bundled(), nullptr};
  auto res = deidentify_dataset(sample(), bundled_rule_config("tcia", true), ctx);
  EXPECT_EQ(res.dataset.get_string(kStudyDescription), "");
  EXPECT_EQ(res.dataset.get_string(kSeriesDescription), "");
  EXPECT_EQ(res.dataset.get_string(kAdditionalHistory), "");
  EXPECT_GE(res.report.degraded, 3u);
  // non-text actions are unaffected
  EXPECT_EQ(res.dataset.get_string(kStudyDate), "20200430");

  auto per_element = bundled_rule_config("tcia", true);
  per_element.table.consolidate_free_text = false;
  auto res2 = deidentify_dataset(sample(), per_element, ctx);
  EXPECT_EQ(res2.dataset.get_string(kStudyDescription), "");
  EXPECT_GE(res2.report.degraded, 3u);
}

TEST(DeidentifyDatasetTest, Ps315EmptiesAndDropsPrivate) {
  IdentityStore ids("salt");
  PatternDetector det;
  DeidContext ctx{&ids, &det, &Whitelist::bundled(), &PrivateDict::bundled()};
  auto res = deidentify_dataset(sample(), bundled_rule_config("ps315", false), ctx);
  EXPECT_TRUE(res.dataset.contains(tags::kPatientName));
  EXPECT_EQ(res.dataset.get_string(tags::kPatientName), "");
  for (const auto& [tag, e] : res.dataset) EXPECT_FALSE(tag.is_private()) << tag.str();
}

TEST(DeidentifyDatasetTest, Deterministic) {
  auto run = [] {
    IdentityStore ids("salt");
    PatternDetector det;
    DeidContext ctx{&ids, &det, &Whitelist::bundled(), &PrivateDict::bundled()};
    return deidentify_dataset(sample(), bundled_rule_config("tcia", true), ctx);
  };
  auto a = run(), b = run();
  EXPECT_EQ(a.dataset, b.dataset);
  ASSERT_EQ(a.report.rows.size(), b.report.rows.size());
  for (std::size_t i = 0; i < a.report.rows.size(); ++i) {
    EXPECT_EQ(a.report.rows[i].path, b.report.rows[i].path);
    EXPECT_EQ(a.report.rows[i].after_hash, b.report.rows[i].after_hash);
  }
}

TEST(ValueHash, Fnv1a) {
  // published FNV-1a 64 test vectors
  EXPECT_EQ(value_hash({}), "cbf29ce484222325");
  const std::uint8_t a[] = {'a'};
  EXPECT_EQ(value_hash(a), "af63dc4c8601ec8c");
  const std::string fb = "foobar";
  EXPECT_EQ(value_hash({reinterpret_cast<const std::uint8_t*>(fb.data()), fb.size()}), "85944171f73967e8");
}
