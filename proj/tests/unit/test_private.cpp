#include <gtest/gtest.h>

#include "dcmdeid/action.hpp"
#include "dcmdeid/error.hpp"
#include "dcmdeid/identity_store.hpp"
#include "dcmdeid/private_deid.hpp"
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

DataElement lo(std::uint16_t g, std::uint16_t e, std::string_view v) {
  return DataElement::from_string(Tag(g, e), VR::LO, v);
}

}  // namespace

TEST(Actions, ParseNamesAndCodes) {
  EXPECT_EQ(parse_action("remove"), ActionKind::Remove);
  EXPECT_EQ(parse_action("CleanText"), ActionKind::CleanText);
  EXPECT_EQ(parse_action("X"), ActionKind::Remove);
  EXPECT_EQ(parse_action("Z"), ActionKind::Empty);
  EXPECT_EQ(parse_action("D"), ActionKind::ReplaceDummy);
  EXPECT_EQ(parse_action("K"), ActionKind::Keep);
  EXPECT_EQ(parse_action("U"), ActionKind::RemapUID);
  EXPECT_FALSE(parse_action("scramble"));
  for (auto k : {ActionKind::Remove, ActionKind::Empty, ActionKind::ReplaceDummy, ActionKind::Keep,
                 ActionKind::RemapUID, ActionKind::RemapID, ActionKind::ShiftDate, ActionKind::CleanText})
    EXPECT_EQ(parse_action(to_string(k)), k);
}

TEST(Actions, VrApplicability) {
  EXPECT_TRUE(action_valid_for(ActionKind::RemapUID, VR::UI));
  EXPECT_FALSE(action_valid_for(ActionKind::RemapUID, VR::LO));
  EXPECT_TRUE(action_valid_for(ActionKind::ShiftDate, VR::DT));
  EXPECT_FALSE(action_valid_for(ActionKind::ShiftDate, VR::US));
  EXPECT_TRUE(action_valid_for(ActionKind::CleanText, VR::LT));
  EXPECT_FALSE(action_valid_for(ActionKind::CleanText, VR::UI));
  EXPECT_TRUE(action_valid_for(ActionKind::Remove, VR::OB));
}

TEST(PrivateKeyTest, BuildRendersTciaForm) {
  EXPECT_EQ(build_private_key(Tag(0x0009, 0x102b), "gems_petd_01", VR::SL).render(), "(0009,gems_petd_01,2b)_SL");
  EXPECT_EQ(build_private_key(Tag(0x0029, 0x1108), "SIEMENS CSA HEADER", "CS").render(),
            "(0029,SIEMENS CSA HEADER,08)_CS");
  EXPECT_EQ(code_of([] { build_private_key(Tag(0x0010, 0x1010), "x", VR::LO); }), ErrorCode::NotPrivate);
  EXPECT_EQ(code_of([] { build_private_key(Tag(0x0009, 0x1010), "", VR::LO); }), ErrorCode::MissingCreator);
}

TEST(PrivateKeyTest, ParseRoundTrips) {
  auto k = PrivateKey::parse("(2005,Philips MR Imaging DD 001,10)_DS");
  ASSERT_TRUE(k);
  EXPECT_EQ(k->creator, "Philips MR Imaging DD 001");
  EXPECT_EQ(k->render(), "(2005,Philips MR Imaging DD 001,10)_DS");
  EXPECT_FALSE(PrivateKey::parse("(0009,x,2B)_SL"));
  EXPECT_FALSE(PrivateKey::parse("(0009,x,2b)_sl"));
  EXPECT_FALSE(PrivateKey::parse("(009,x,2b)_SL"));
  EXPECT_FALSE(PrivateKey::parse("(0009,,2b)_SL"));
}

TEST(PrivateDictTest, ParseErrors) {
  EXPECT_EQ(code_of([] { PrivateDict::parse("(0009,a,01)_LO\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { PrivateDict::parse("(0009,a,1)_LO keep\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { PrivateDict::parse("(0009,a,01)_LO shred\n"); }), ErrorCode::UnknownActionKind);
  EXPECT_EQ(code_of([] { PrivateDict::parse("(0009,a,01)_LO keep\n(0009,a,01)_LO remove\n"); }),
            ErrorCode::DuplicateKey);
  EXPECT_EQ(code_of([] { PrivateDict::parse("(0009,a,01)_LO CleanText\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { PrivateDict::parse("(0009,a,01)_LO RemapUID\n"); }), ErrorCode::SchemaError);
  try {
    PrivateDict::parse("# ok\n(0009,a,01)_LO keep\nbroken line here\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(PrivateDictTest, LookupWithUnFallback) {
  auto d = PrivateDict::parse("(0009,ACME 1,01)_LO keep\n(0009,ACME 1,02)_DA ShiftDate\n");
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.lookup(build_private_key(Tag(0x0009, 0x1001), "ACME 1", VR::LO)), ActionKind::Keep);
  EXPECT_EQ(d.lookup(build_private_key(Tag(0x0009, 0x1001), "ACME 1", VR::UN)), ActionKind::Keep);
  EXPECT_FALSE(d.lookup(build_private_key(Tag(0x0009, 0x1001), "ACME 1", VR::SH)));
  EXPECT_FALSE(d.lookup(build_private_key(Tag(0x0009, 0x1001), "acme 1", VR::LO)));
  EXPECT_GE(PrivateDict::bundled().size(), 20u);
  EXPECT_EQ(PrivateDict::bundled().lookup(build_private_key(Tag(0x0009, 0x102b), "gems_petd_01", VR::SL)),
            ActionKind::Keep);
}

TEST(PrivateDictTest, LoadFromFile) {
  oracle::TempDir dir;
  oracle::write_text(dir / "d.txt", "(0011,X,01)_LO keep\n");
  EXPECT_EQ(PrivateDict::load(dir / "d.txt").size(), 1u);
  EXPECT_EQ(code_of([&] { PrivateDict::load(dir / "none.txt"); }), ErrorCode::IoError);
}

TEST(DeidentifyPrivate, DictionaryDrivesActions) {
  auto dict = PrivateDict::parse(
      "(0009,ACME,01)_LO keep\n"
      "(0009,ACME,02)_DA ShiftDate\n"
      "(0009,ACME,03)_UI RemapUID\n"
      "(0009,ACME,04)_LO Empty\n"
      "(0009,ACME,05)_PN ReplaceDummy\n");
  ElementMap m;
  m.set(lo(0x0008, 0x103E, "SERIES"));
  m.set(lo(0x0009, 0x0010, "ACME"));
  m.set(lo(0x0009, 0x1001, "keep me"));
  m.set(DataElement::from_string(Tag(0x0009, 0x1002), VR::DA, "20200101"));
  m.set(DataElement::from_string(Tag(0x0009, 0x1003), VR::UI, "1.2.3"));
  m.set(lo(0x0009, 0x1004, "emptied"));
  m.set(DataElement::from_string(Tag(0x0009, 0x1005), VR::PN, "DOE^J"));
  m.set(lo(0x0009, 0x1006, "miss"));
  IdentityStore ids("s", 10);
  auto r = deidentify_private(m, dict, &ids);

  EXPECT_EQ(m.get_string(Tag(0x0008, 0x103E)), "SERIES");
  EXPECT_EQ(m.get_string(Tag(0x0009, 0x1001)), "keep me");
  EXPECT_EQ(m.get_string(Tag(0x0009, 0x1002)), "20200111");
  EXPECT_EQ(m.get_string(Tag(0x0009, 0x1003)), ids.remap_uid("1.2.3"));
  EXPECT_TRUE(m.find(Tag(0x0009, 0x1004))->raw().empty());
  EXPECT_EQ(m.get_string(Tag(0x0009, 0x1005)), kDummyPersonName);
  EXPECT_FALSE(m.contains(Tag(0x0009, 0x1006)));
  EXPECT_TRUE(m.contains(Tag(0x0009, 0x0010)));
  EXPECT_EQ(r.removed, 1u);
  EXPECT_EQ(r.kept, 6u);  // 5 elements + creator
  std::size_t hits = 0;
  for (const auto& row : r.rows) hits += row.dictionary_hit;
  EXPECT_EQ(hits, 5u);
}

TEST(DeidentifyPrivate, EmptyBlocksLoseTheirCreator) {
  ElementMap m;
  m.set(lo(0x0011, 0x0010, "NOBODY"));
  m.set(lo(0x0011, 0x1001, "x"));
  m.set(lo(0x0011, 0x1101, "no creator for block 11"));
  m.set(lo(0x0013, 0x1001, "orphan"));
  auto r = deidentify_private(m, PrivateDict{});
  EXPECT_TRUE(m.empty());
  EXPECT_EQ(r.removed, 4u);
  EXPECT_EQ(r.kept, 0u);
}

TEST(DeidentifyPrivate, WalksIntoStandardSequences) {
  auto dict = PrivateDict::parse("(0009,ACME,01)_LO keep\n");
  SequenceItem item;
  item.set(lo(0x0009, 0x0010, "ACME"));
  item.set(lo(0x0009, 0x1001, "inner keep"));
  item.set(lo(0x0009, 0x1002, "inner drop"));
  ElementMap m;
  m.set(DataElement::sequence(Tag(0x0008, 0x1140), {item}));
  auto r = deidentify_private(m, dict);
  const auto& it = m.find(Tag(0x0008, 0x1140))->items()[0];
  EXPECT_TRUE(it.contains(Tag(0x0009, 0x1001)));
  EXPECT_FALSE(it.contains(Tag(0x0009, 0x1002)));
  bool nested_row = false;
  for (const auto& row : r.rows) nested_row |= row.path.is_nested();
  EXPECT_TRUE(nested_row);
}

TEST(DeidentifyPrivate, RemovedPrivateSequenceReportsSubtree) {
  SequenceItem item;
  item.set(lo(0x0010, 0x0010, "nested"));
  ElementMap m;
  m.set(lo(0x0009, 0x0010, "ACME"));
  m.set(DataElement::sequence(Tag(0x0009, 0x1010), {item}));
  auto r = deidentify_private(m, PrivateDict{});
  EXPECT_TRUE(m.empty());
  EXPECT_EQ(r.rows.size(), 3u);  // nested element, sequence, creator
}
