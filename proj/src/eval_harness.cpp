#include "dcmdeid/eval_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "dcmdeid/action.hpp"
#include "dcmdeid/codec.hpp"
#include "dcmdeid/dictionary.hpp"
#include "dcmdeid/error.hpp"
#include "dcmdeid/identity_store.hpp"
#include "dcmdeid/phi_detect.hpp"

namespace fs = std::filesystem;

namespace dcmdeid {

namespace {

using Kind = KeyEntry::Kind;
using Label = KeyEntry::Label;

constexpr std::string_view kUidRoot = "1.2.826.0.1.3680043.10.777";
constexpr std::size_t kFilesPerPatient = 6;
constexpr std::size_t kInstancesPerSeries = 3;
constexpr std::uint16_t kFrameRows = 64;
constexpr std::uint16_t kFrameCols = 128;

const std::vector<std::string_view> kStreets = {"Oak", "Maple", "Pine", "Cedar", "Elm", "Birch", "Walnut", "Spruce", "Willow"};
const std::vector<std::string_view> kStreetKinds = {"Street", "Avenue", "Road", "Lane", "Drive"};
const std::vector<std::string_view> kInstitutions = {"General Hospital", "University Medical Center",
                                                     "Riverside Clinic", "Northside Imaging"};
const std::vector<std::string_view> kAllergies = {"penicillin", "latex", "none known", "iodinated contrast"};
const std::vector<std::string_view> kOccupations = {"teacher", "engineer", "nurse", "retired", "farmer"};
const std::vector<std::string_view> kStates = {"stable", "ambulatory", "sedated"};

struct ModalitySpec {
  std::string_view modality;
  std::string_view sop_class;
  std::uint16_t bits;
  std::vector<std::string_view> anatomy;
  std::vector<std::string_view> series;
  std::vector<std::string_view> protocols;
};

const std::vector<ModalitySpec>& modalities() {
  static const std::vector<ModalitySpec> m = {
      {"CT", "1.2.840.10008.5.1.4.1.1.2", 16,
       {"CHEST", "ABDOMEN PELVIS", "HEAD", "CHEST ABDOMEN PELVIS", "LUMBAR SPINE"},
       {"AX 5MM", "COR MPR", "SAG MPR", "LOW DOSE CHEST", "CHEST W CONTRAST", "SCOUT", "DELAYED PHASE"},
       {"ROUTINE CHEST", "LOW DOSE SCREENING", "TRAUMA HEAD", "CTA AORTA", "ROUTINE ABDOMEN"}},
      {"MR", "1.2.840.10008.5.1.4.1.1.4", 16,
       {"BRAIN", "BREAST", "KNEE", "CERVICAL SPINE", "PROSTATE"},
       {"MR BREAST", "AX T1 POST", "SAG T2 FLAIR", "COR STIR", "AX DWI", "LOCALIZER", "MR BREAST"},
       {"ROUTINE BRAIN", "BREAST DYNAMIC", "KNEE ROUTINE", "PROSTATE MULTI"}},
      {"CR", "1.2.840.10008.5.1.4.1.1.1", 8,
       {"CHEST", "KNEE", "HAND", "FOOT", "PELVIS"},
       {"PA", "LAT", "AP", "CHEST PA LAT", "OBLIQUE"},
       {"CHEST ROUTINE", "EXTREMITY", "PELVIS AP"}},
  };
  return m;
}

struct Rng {
  explicit Rng(std::uint64_t seed) : g(seed) {}
  std::mt19937_64 g;
  std::uint64_t next() { return g(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(g() % n); }
  double unit() { return static_cast<double>(g() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return unit() < p; }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }
  std::string digits(std::size_t n) {
    std::string s;
    s.push_back(static_cast<char>('1' + below(9)));
    while (s.size() < n) s.push_back(static_cast<char>('0' + below(10)));
    return s;
  }
};

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::chrono::year_month_day random_date(Rng& rng, int y0, int y1) {
  using namespace std::chrono;
  const sys_days a{year{y0} / January / 1};
  const sys_days b{year{y1} / December / 31};
  const auto span = (b - a).count();
  return year_month_day{a + days{static_cast<int>(rng.below(static_cast<std::size_t>(span) + 1))}};
}

std::string da(const std::chrono::year_month_day& d) {
  return fmt::format("{:04}{:02}{:02}", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                     static_cast<unsigned>(d.day()));
}

std::string da_shifted(const std::chrono::year_month_day& d, int offset) {
  return da(std::chrono::year_month_day{std::chrono::sys_days{d} + std::chrono::days{offset}});
}

// Free text with its expected de-identified form.
struct Text {
  std::string source;
  std::string expected;
  void plain(std::string_view s) {
    source += s;
    expected += s;
  }
  void phi(std::string_view s) { source += s; }
};

struct Patient {
  std::string given;
  std::string surname;
  std::string pid;
  std::chrono::year_month_day birth;
  std::string sex;
  int age = 0;
  std::string institution;
  std::string address;
  std::string phone;
  std::string email;
  std::string referring;
  std::size_t modality = 0;
  std::string study_uid;
  std::chrono::year_month_day study_date;
  std::string accession;
  std::string study_id;
  Text study_description;
  Text history;
  std::string device_serial;
  std::string device_uid;
  std::string station;
};

struct Series {
  std::string uid;
  std::string frame_of_reference;
  Text description;
  Text protocol;
  std::vector<std::string> instance_uids;
};

class Generator {
 public:
  explicit Generator(const CorpusSpec& spec) : spec_(spec), rng_(spec.seed) {}

  Corpus run();

 private:
  bool has(PhiFamily f) const { return spec_.phi_mix.count(f) != 0; }
  std::string uid(std::string_view kind) { return fmt::format("{}.{}.{}.{}", kUidRoot, spec_.seed % 1000000, kind, ++uid_counter_); }

  void name_phrase(Text& t, const Patient& p, bool allow_caret = true) {
    const std::size_t v = rng_.below(allow_caret ? 3 : 2);
    if (v == 0) {
      t.phi(fmt::format("{} {}", p.given, p.surname));
    } else if (v == 1) {
      t.plain("Dr. ");
      t.phi(std::string(rng_.pick(PatternDetector::surnames())));
    } else {
      t.phi(fmt::format("{}^{}", upper(p.surname), upper(p.given)));
    }
  }
  void date_phrase(Text& t) {
    const auto d = random_date(rng_, 2010, 2023);
    if (rng_.chance(0.5)) {
      t.phi(fmt::format("{:02}/{:02}/{:04}", static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()),
                        static_cast<int>(d.year())));
    } else {
      t.phi(fmt::format("{:04}-{:02}-{:02}", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                        static_cast<unsigned>(d.day())));
    }
  }

  Patient make_patient(std::size_t index);
  Series make_series(const Patient& p);
  void make_file(std::size_t index, const Patient& p, Series& s, std::size_t instance, Corpus& out);

  const CorpusSpec& spec_;
  Rng rng_;
  std::uint64_t uid_counter_ = 0;
};

Patient Generator::make_patient(std::size_t index) {
  Patient p;
  p.given = std::string(rng_.pick(PatternDetector::given_names()));
  p.surname = std::string(rng_.pick(PatternDetector::surnames()));
  p.pid = rng_.digits(8);
  p.birth = random_date(rng_, 1940, 2000);
  p.sex = rng_.chance(0.5) ? "M" : "F";
  p.age = 20 + static_cast<int>(rng_.below(70));
  p.institution = std::string(rng_.pick(kInstitutions));
  p.address = fmt::format("{} {} {}", 1 + rng_.below(9999), rng_.pick(kStreets), rng_.pick(kStreetKinds));
  p.phone = fmt::format("555-{:03}-{:04}", rng_.below(1000), rng_.below(10000));
  p.email = fmt::format("{}{}@example.org", lower(p.given.substr(0, 1)), lower(p.surname));
  p.referring = fmt::format("{}^{}", upper(rng_.pick(PatternDetector::surnames())),
                            upper(rng_.pick(PatternDetector::given_names())));
  p.modality = index % modalities().size();
  p.study_uid = uid("1");
  p.study_date = random_date(rng_, 2015, 2023);
  p.accession = "A" + rng_.digits(7);
  p.study_id = std::to_string(1 + rng_.below(9999));
  p.device_serial = fmt::format("SN-{}", rng_.digits(5));
  p.device_uid = uid("9");
  p.station = fmt::format("{}_STATION_{}", modalities()[p.modality].modality, 1 + rng_.below(9));

  const auto& m = modalities()[p.modality];
  Text sd;
  sd.plain(fmt::format("{} {}", m.modality, rng_.pick(m.anatomy)));
  if (has(PhiFamily::Name) && rng_.chance(0.3)) {
    sd.plain(" for ");
    name_phrase(sd, p, false);
  }
  p.study_description = sd;
  std::vector<int> clauses = {0, 1, 2, 3, 4, 5};
  const std::size_t n = 2 + rng_.below(3);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = clauses[rng_.below(clauses.size())];
    std::erase(clauses, c);
    if (i > 0) p.history.plain(" ");
    switch (c) {
      case 0:
        if (has(PhiFamily::Age)) {
          p.history.phi(rng_.chance(0.5) ? fmt::format("{} year old", p.age) : fmt::format("{}yo", p.age));
        } else {
          p.history.plain("Adult");
        }
        p.history.plain(" with chest pain.");
        break;
      case 1:
        p.history.plain("Seen by ");
        if (has(PhiFamily::Name)) {
          name_phrase(p.history, p);
        } else {
          p.history.plain("the clinic");
        }
        p.history.plain(" on ");
        if (has(PhiFamily::Date)) {
          date_phrase(p.history);
        } else {
          p.history.plain("admission");
        }
        p.history.plain(".");
        break;
      case 2:
        p.history.plain("Prior exam ");
        if (has(PhiFamily::Date)) {
          date_phrase(p.history);
        } else {
          p.history.plain("last year");
        }
        p.history.plain(", no change.");
        break;
      case 3:
        p.history.plain("Contact ");
        if (has(PhiFamily::Contact)) {
          p.history.phi(rng_.chance(0.5) ? p.phone : p.email);
        } else {
          p.history.plain("via portal");
        }
        p.history.plain(".");
        break;
      case 4:
        p.history.plain("Lives at ");
        if (has(PhiFamily::Location)) {
          p.history.phi(p.address);
        } else {
          p.history.plain("home");
        }
        p.history.plain(".");
        break;
      default:
        p.history.plain("Ref ");
        if (has(PhiFamily::Id)) {
          if (rng_.chance(0.5)) {
            p.history.plain("MRN: ");
            p.history.phi(p.pid);
          } else {
            p.history.phi(rng_.digits(7));
          }
        } else {
          p.history.plain("pending");
        }
        p.history.plain(".");
        break;
    }
  }
  return p;
}

Series Generator::make_series(const Patient& p) {
  Series s;
  s.uid = uid("2");
  s.frame_of_reference = uid("4");
  const auto& m = modalities()[p.modality];
  s.description.plain(rng_.pick(m.series));
  if (has(PhiFamily::Date) && rng_.chance(0.2)) {
    s.description.plain(" ");
    date_phrase(s.description);
  }
  s.protocol.plain(rng_.pick(m.protocols));
  if (has(PhiFamily::Name) && rng_.chance(0.25)) {
    s.protocol.plain(" Dr. ");
    s.protocol.phi(std::string(rng_.pick(PatternDetector::surnames())));
  }
  return s;
}

// Plan for one element path when building the key.
struct Plan {
  Kind kind = Kind::Value;
  std::optional<std::string> expected;
  Label label = Label::Standard;
};

std::string hex_of(const Bytes& b) {
  std::string out;
  out.reserve(b.size() * 2);
  for (auto c : b) out += fmt::format("{:02x}", c);
  return out;
}

void draw_text(Frame& f, const TextBox& box, std::uint16_t bg, std::uint16_t fg) {
  for (int y = box.y0; y < box.y1; ++y) {
    for (int x = box.x0; x < box.x1; ++x) f.set(x, y, 0, bg);
  }
  for (std::size_t i = 0; i < box.text.size(); ++i) {
    const auto c = static_cast<unsigned char>(box.text[i]);
    if (c == ' ') continue;
    const std::uint32_t bits = (c * 2654435761u) >> 7;
    for (int gy = 0; gy < 5; ++gy) {
      for (int gx = 0; gx < 3; ++gx) {
        if ((bits >> (gy * 3 + gx)) & 1u) f.set(box.x0 + 1 + static_cast<int>(i) * 4 + gx, box.y0 + 1 + gy, 0, fg);
      }
    }
  }
}

TextBox text_box(int x0, int y0, std::string text) {
  TextBox b;
  b.x0 = x0;
  b.y0 = y0;
  b.x1 = x0 + static_cast<int>(text.size()) * 4 + 1;
  b.y1 = y0 + 7;
  b.text = std::move(text);
  b.confidence = 0.9;
  return b;
}

void Generator::make_file(std::size_t index, const Patient& p, Series& s, std::size_t instance, Corpus& out) {
  const auto& m = modalities()[p.modality];
  const bool implicit = index % 4 == 3;
  const std::string sop_uid = uid("3");
  const std::size_t series_no = (index % kFilesPerPatient) / kInstancesPerSeries;
  const std::string rel = index % 13 == 12
                              ? fmt::format("P{:04}/S{}/IM{:03}", index / kFilesPerPatient, series_no, instance)
                              : fmt::format("P{:04}/S{}/IM{:03}.dcm", index / kFilesPerPatient, series_no, instance);

  DataSet ds;
  std::map<TagPath, Plan> plan;
  const auto top = [](Tag t) { return TagPath{{}, t}; };
  const auto put = [&](Tag t, VR vr, std::string_view v, Plan pl = {}) {
    ds.set(DataElement::from_string(t, vr, v));
    plan[top(t)] = std::move(pl);
  };
  const Plan keep{};
  const Plan absent_phi{Kind::Absent, std::nullopt, Label::Phi};
  const Plan absent_custom{Kind::Absent, std::nullopt, Label::Custom};
  const Plan repaired{Kind::Value, std::string{}, Label::Validation};
  const Plan uid_plan{Kind::Uid, std::nullopt, Label::Phi};
  const auto value = [](std::string v, Label l) { return Plan{Kind::Value, std::move(v), l}; };
  const int off = spec_.date_offset_days;

  put(Tag{0x0008, 0x0008}, VR::CS, "ORIGINAL\\PRIMARY\\AXIAL");
  put(tags::kSOPClassUID, VR::UI, m.sop_class);
  put(tags::kSOPInstanceUID, VR::UI, sop_uid, uid_plan);
  put(Tag{0x0008, 0x0060}, VR::CS, m.modality);
  put(Tag{0x0008, 0x0070}, VR::LO, "ACME Medical");
  put(Tag{0x0008, 0x1090}, VR::LO, "Imager 9000");
  put(Tag{0x0008, 0x1010}, VR::SH, p.station, Plan{Kind::Value, std::nullopt, Label::Custom});
  put(Tag{0x0008, 0x0030}, VR::TM, "101500");
  put(Tag{0x0008, 0x0031}, VR::TM, "102000");
  if (has(PhiFamily::Date)) {
    put(Tag{0x0008, 0x0020}, VR::DA, da(p.study_date), value(da_shifted(p.study_date, off), Label::Phi));
    put(Tag{0x0008, 0x0021}, VR::DA, da(p.study_date), value(da_shifted(p.study_date, off), Label::Phi));
    put(Tag{0x0008, 0x0023}, VR::DA, da(p.study_date), value(da_shifted(p.study_date, off), Label::Phi));
    put(Tag{0x0008, 0x002A}, VR::DT, da(p.study_date) + "101500",
        value(da_shifted(p.study_date, off) + "101500", Label::Phi));
    put(Tag{0x0010, 0x0030}, VR::DA, da(p.birth), repaired);
  }
  if (has(PhiFamily::Id)) {
    put(Tag{0x0008, 0x0050}, VR::SH, p.accession, repaired);
    put(tags::kPatientID, VR::LO, p.pid, Plan{Kind::Pid, std::nullopt, Label::Phi});
    put(Tag{0x0010, 0x1000}, VR::LO, "X" + p.pid, absent_phi);
    put(Tag{0x0020, 0x0010}, VR::SH, p.study_id, repaired);
    SequenceItem item;
    item.set(DataElement::from_string(tags::kPatientID, VR::LO, "Y" + p.pid));
    ds.set(DataElement::sequence(Tag{0x0010, 0x1002}, {item}));
    plan[top(Tag{0x0010, 0x1002})] = absent_phi;
  } else {
    put(tags::kPatientID, VR::LO, "", keep);
  }
  if (has(PhiFamily::Location)) {
    put(Tag{0x0008, 0x0080}, VR::LO, p.institution, absent_phi);
    put(Tag{0x0008, 0x0081}, VR::ST, p.address, absent_phi);
  }
  if (has(PhiFamily::Name)) {
    put(tags::kPatientName, VR::PN, fmt::format("{}^{}", upper(p.surname), upper(p.given)),
        value(std::string(kDummyPersonName), Label::Phi));
    put(Tag{0x0008, 0x0090}, VR::PN, p.referring, repaired);
    put(Tag{0x0008, 0x1070}, VR::PN, p.referring, absent_phi);
  } else {
    put(tags::kPatientName, VR::PN, "", keep);
  }
  if (has(PhiFamily::Contact)) put(Tag{0x0010, 0x2154}, VR::SH, p.phone, absent_phi);

  put(Tag{0x0008, 0x1030}, VR::LO, p.study_description.source, value(p.study_description.expected, Label::Phi));
  put(Tag{0x0008, 0x103E}, VR::LO, s.description.source, value(s.description.expected, Label::Phi));
  put(Tag{0x0018, 0x1030}, VR::LO, s.protocol.source, value(s.protocol.expected, Label::Phi));
  put(Tag{0x0010, 0x21B0}, VR::LT, p.history.source, value(p.history.expected, Label::Phi));

  put(Tag{0x0010, 0x0040}, VR::CS, p.sex);
  put(Tag{0x0010, 0x1010}, VR::AS, fmt::format("{:03}Y", p.age));
  put(Tag{0x0010, 0x2110}, VR::LO, rng_.pick(kAllergies), absent_custom);
  put(Tag{0x0010, 0x2180}, VR::SH, rng_.pick(kOccupations), absent_custom);
  put(Tag{0x0038, 0x0500}, VR::LO, rng_.pick(kStates), absent_custom);
  put(Tag{0x0020, 0x4000}, VR::LT, fmt::format("image {} of series {}", instance + 1, series_no + 1), absent_custom);
  put(Tag{0x0018, 0x1000}, VR::LO, p.device_serial, Plan{Kind::Value, std::nullopt, Label::Custom});
  put(Tag{0x0018, 0x1002}, VR::UI, p.device_uid, Plan{Kind::Value, std::nullopt, Label::Custom});
  const std::string_view anatomy = rng_.pick(m.anatomy);
  put(Tag{0x0018, 0x0015}, VR::CS, anatomy.substr(0, anatomy.find(' ')));
  put(Tag{0x0018, 0x0050}, VR::DS, "2.5");
  put(Tag{0x0018, 0x0060}, VR::DS, "120");
  put(Tag{0x0018, 0x1020}, VR::LO, "VA10");
  put(Tag{0x0018, 0x5100}, VR::CS, "HFS");
  put(Tag{0x0020, 0x000D}, VR::UI, p.study_uid, uid_plan);
  put(Tag{0x0020, 0x000E}, VR::UI, s.uid, uid_plan);
  put(Tag{0x0020, 0x0011}, VR::IS, std::to_string(series_no + 1));
  put(Tag{0x0020, 0x0012}, VR::IS, "1");
  put(Tag{0x0020, 0x0013}, VR::IS, std::to_string(instance + 1));
  put(Tag{0x0020, 0x0020}, VR::CS, "L\\P");
  put(Tag{0x0020, 0x0032}, VR::DS, fmt::format("0\\0\\{}", -2.5 * static_cast<double>(instance)));
  put(Tag{0x0020, 0x0037}, VR::DS, "1\\0\\0\\0\\1\\0");
  put(Tag{0x0020, 0x0052}, VR::UI, s.frame_of_reference, uid_plan);
  put(Tag{0x0020, 0x1040}, VR::LO, "");
  if (p.modality == 2) put(Tag{0x0018, 0x1004}, VR::LO, "PL" + p.device_serial.substr(3), Plan{Kind::Value, std::nullopt, Label::Custom});

  if (!s.instance_uids.empty()) {
    SequenceItem item;
    item.set(DataElement::from_string(Tag{0x0008, 0x1150}, VR::UI, m.sop_class));
    item.set(DataElement::from_string(Tag{0x0008, 0x1155}, VR::UI, s.instance_uids.back()));
    ds.set(DataElement::sequence(Tag{0x0008, 0x1140}, {item}));
    TagPath seq = top(Tag{0x0008, 0x1140});
    plan[seq.child_in(0, Tag{0x0008, 0x1155})] = uid_plan;
  }
  s.instance_uids.push_back(sop_uid);

  // Private blocks.
  const auto priv = [&](Tag t, VR vr, Bytes raw, bool kept) {
    ds.set(DataElement(t, vr, std::move(raw)));
    plan[top(t)] = kept ? Plan{Kind::Value, std::nullopt, Label::Private} : Plan{Kind::Absent, std::nullopt, Label::Private};
  };
  const auto text_bytes = [](std::string_view s, char pad) {
    Bytes b(s.begin(), s.end());
    if (b.size() % 2) b.push_back(static_cast<std::uint8_t>(pad));
    return b;
  };
  priv(Tag{0x0009, 0x0010}, VR::LO, text_bytes("gems_petd_01", ' '), true);
  const std::int32_t sl = static_cast<std::int32_t>(rng_.below(100000)) - 50000;
  Bytes slb(4);
  for (int i = 0; i < 4; ++i) slb[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(static_cast<std::uint32_t>(sl) >> (8 * i));
  priv(Tag{0x0009, 0x102B}, VR::SL, slb, true);
  priv(Tag{0x0009, 0x1005}, VR::DT, text_bytes(da(p.study_date) + "101500", ' '), false);
  priv(Tag{0x0009, 0x1036}, VR::LO, text_bytes(upper(p.surname) + "^" + upper(p.given), ' '), false);
  priv(Tag{0x0011, 0x0010}, VR::LO, text_bytes("ACME_RESEARCH_01", ' '), true);
  priv(Tag{0x0011, 0x1001}, VR::LO, text_bytes(fmt::format("cohort {}", 1 + rng_.below(5)), ' '), true);
  priv(Tag{0x0011, 0x1002}, VR::LO, text_bytes(p.given + " " + p.surname, ' '), false);
  priv(Tag{0x0011, 0x1003}, VR::DA, text_bytes(da(p.birth), ' '), false);
  priv(Tag{0x0011, 0x1004}, VR::DS, text_bytes("1.25", ' '), true);
  priv(Tag{0x0011, 0x1007}, VR::LO, text_bytes("unmapped", ' '), false);
  priv(Tag{0x0013, 0x0010}, VR::LO, text_bytes("ACME_SCAN_02", ' '), false);
  priv(Tag{0x0013, 0x1010}, VR::LO, text_bytes(p.pid, ' '), false);
  priv(Tag{0x0013, 0x1011}, VR::LO, text_bytes(p.institution, ' '), false);

  // Pixel module.
  const std::size_t n_frames = (p.modality == 1 && instance == 2) ? 2 : 1;
  ds.set(DataElement::from_u16(tags::kSamplesPerPixel, 1));
  put(tags::kPhotometricInterpretation, VR::CS, "MONOCHROME2");
  if (n_frames > 1) put(tags::kNumberOfFrames, VR::IS, std::to_string(n_frames));
  ds.set(DataElement::from_u16(tags::kRows, kFrameRows));
  ds.set(DataElement::from_u16(tags::kColumns, kFrameCols));
  ds.set(DataElement::from_u16(tags::kBitsAllocated, m.bits));
  ds.set(DataElement::from_u16(tags::kBitsStored, m.bits == 16 ? 12 : 8));
  ds.set(DataElement::from_u16(tags::kHighBit, m.bits == 16 ? 11 : 7));
  ds.set(DataElement::from_u16(tags::kPixelRepresentation, 0));

  FileKey fk;
  fk.path = rel;
  const bool with_text = rng_.chance(spec_.pixel_text_rate);
  Bytes pixels;
  for (std::size_t fi = 0; fi < n_frames; ++fi) {
    Frame f;
    f.index = fi;
    f.rows = kFrameRows;
    f.cols = kFrameCols;
    f.bits_allocated = m.bits;
    f.pixels.assign(f.byte_size(), 0);
    for (int y = 0; y < kFrameRows; ++y) {
      for (int x = 0; x < kFrameCols; ++x) {
        const auto v = m.bits == 16 ? 200 + (x * 7 + y * 5 + static_cast<int>(fi) * 3) % 2000 : 40 + (x + 2 * y) % 150;
        f.set(x, y, 0, static_cast<std::uint16_t>(v));
      }
    }
    if (with_text) {
      const std::uint16_t bg = m.bits == 16 ? 4095 : 255;
      std::vector<KeyBox> boxes;
      std::string phi_text;
      if (has(PhiFamily::Name)) phi_text = upper(p.surname) + "^" + upper(p.given);
      if (has(PhiFamily::Date)) {
        const auto& b = p.birth;
        phi_text += (phi_text.empty() ? "" : " ") + fmt::format("{:02}/{:02}/{:04}", static_cast<unsigned>(b.month()),
                                                                static_cast<unsigned>(b.day()), static_cast<int>(b.year()));
      }
      if (phi_text.empty() && has(PhiFamily::Id)) phi_text = "MRN " + p.pid;
      if (!phi_text.empty()) boxes.push_back({text_box(3, 3, phi_text), true});
      static const std::vector<std::string> kMarkers = {"R", "L", "MR BREAST", "AX", "PORTABLE"};
      const std::string marker = rng_.pick(kMarkers);
      boxes.push_back({text_box(kFrameCols - 4 - static_cast<int>(marker.size()) * 4 - 1, kFrameRows - 10, marker), false});
      std::vector<TextBox> plain;
      for (const auto& kb : boxes) {
        draw_text(f, kb.box, bg, 0);
        plain.push_back(kb.box);
      }
      out.detections.add(rel, fi, plain);
      fk.frames[fi] = std::move(boxes);
    }
    pixels.insert(pixels.end(), f.pixels.begin(), f.pixels.end());
  }
  if (pixels.size() % 2) pixels.push_back(0);
  ds.set(DataElement(tags::kPixelData, m.bits == 16 ? VR::OW : VR::OB, std::move(pixels)));

  ds.make_file_meta(m.sop_class, sop_uid);
  if (implicit) {
    ds.transfer_syntax = TransferSyntax::ImplicitVRLittleEndian;
    ds.file_meta.set(DataElement::from_string(tags::kTransferSyntaxUID, VR::UI, kImplicitVRLittleEndianUID));
  }

  // The key describes the file as a reader sees it (implicit private VRs read as UN).
  const Bytes bytes = serialize_file(ds);
  const DataSet seen = parse_file(bytes);
  std::function<void(const ElementMap&, const TagPath*, std::size_t)> visit = [&](const ElementMap& map,
                                                                                   const TagPath* parent,
                                                                                   std::size_t item) {
    for (const auto& [t, e] : map) {
      TagPath path = parent ? parent->child_in(item, t) : TagPath{{}, t};
      if (t == tags::kPixelData) continue;
      auto it = plan.find(path);
      const Plan pl = it == plan.end() ? Plan{} : it->second;
      if (e.is_sequence()) {
        if (pl.kind == Kind::Absent) {
          fk.entries.push_back({path.str(), display_name(keyword_or_tag(t)), Kind::Absent, {}, {}, pl.label});
          continue;
        }
        for (std::size_t i = 0; i < e.items().size(); ++i) visit(e.items()[i], &path, i);
        continue;
      }
      KeyEntry ke;
      ke.path = path.str();
      ke.name = t.is_private() ? t.str() : display_name(keyword_or_tag(t));
      ke.kind = pl.kind;
      ke.label = pl.label;
      ke.source = render_value(e);
      if (pl.kind == Kind::Value) ke.expected = pl.expected ? *pl.expected : ke.source;
      fk.entries.push_back(std::move(ke));
    }
  };
  visit(seen, nullptr, 0);
  out.key.files.push_back(std::move(fk));
  out.files.push_back({rel, std::move(ds)});
}

Corpus Generator::run() {
  if (spec_.pixel_text_rate < 0.0 || spec_.pixel_text_rate > 1.0 || std::isnan(spec_.pixel_text_rate)) {
    throw Error(ErrorCode::SpecError, "pixel_text_rate must be in [0, 1]");
  }
  if (spec_.n_files > 1000000) throw Error(ErrorCode::SpecError, "n_files above 1000000");
  if (std::abs(spec_.date_offset_days) > 3650) throw Error(ErrorCode::SpecError, "date offset out of range");
  Corpus out;
  out.key.seed = spec_.seed;
  out.key.date_offset_days = spec_.date_offset_days;
  std::optional<Patient> patient;
  std::optional<Series> series;
  for (std::size_t i = 0; i < spec_.n_files; ++i) {
    if (i % kFilesPerPatient == 0) patient = make_patient(i / kFilesPerPatient);
    if (i % kInstancesPerSeries == 0) series = make_series(*patient);
    make_file(i, *patient, *series, i % kInstancesPerSeries, out);
  }
  return out;
}

const DataElement* find_path(const ElementMap& root, const TagPath& path) {
  const ElementMap* map = &root;
  for (const auto& step : path.parents) {
    const DataElement* seq = map->find(step.sequence);
    if (!seq || step.item >= seq->items().size()) return nullptr;
    map = &seq->items()[step.item];
  }
  return map->find(path.tag);
}

std::string_view trim_padding(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view to_string(PhiFamily f) noexcept {
  switch (f) {
    case PhiFamily::Name: return "name";
    case PhiFamily::Date: return "date";
    case PhiFamily::Id: return "id";
    case PhiFamily::Location: return "location";
    case PhiFamily::Contact: return "contact";
    case PhiFamily::Age: return "age";
  }
  return "name";
}

std::optional<PhiFamily> parse_phi_family(std::string_view s) noexcept {
  for (auto f : all_phi_families()) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

std::set<PhiFamily> all_phi_families() {
  return {PhiFamily::Name, PhiFamily::Date, PhiFamily::Id, PhiFamily::Location, PhiFamily::Contact, PhiFamily::Age};
}

std::string_view to_string(KeyEntry::Kind k) noexcept {
  switch (k) {
    case Kind::Value: return "value";
    case Kind::Absent: return "absent";
    case Kind::Uid: return "uid";
    case Kind::Pid: return "pid";
  }
  return "value";
}

std::string_view to_string(KeyEntry::Label l) noexcept {
  switch (l) {
    case Label::Standard: return "standard";
    case Label::Phi: return "phi";
    case Label::Private: return "private";
    case Label::Validation: return "validation";
    case Label::Custom: return "custom";
  }
  return "standard";
}

std::string_view category_for(KeyEntry::Label label) noexcept {
  switch (label) {
    case Label::Private: return ScoreReport::kCategories[1];
    case Label::Validation: return ScoreReport::kCategories[2];
    case Label::Custom: return ScoreReport::kCategories[3];
    default: return ScoreReport::kCategories[0];
  }
}

std::size_t AnswerKey::entry_count() const {
  std::size_t n = 0;
  for (const auto& f : files) {
    n += f.entries.size();
    n += f.frames.size();
  }
  return n;
}

std::string AnswerKey::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["seed"] = seed;
  j["date_offset_days"] = date_offset_days;
  nlohmann::ordered_json files_j = nlohmann::ordered_json::array();
  for (const auto& f : files) {
    nlohmann::ordered_json fj;
    fj["path"] = f.path;
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const auto& e : f.entries) {
      nlohmann::ordered_json ej;
      ej["path"] = e.path;
      ej["name"] = e.name;
      ej["kind"] = to_string(e.kind);
      if (e.kind == Kind::Value) ej["expected"] = e.expected;
      ej["source"] = e.source;
      ej["label"] = to_string(e.label);
      entries.push_back(std::move(ej));
    }
    fj["entries"] = std::move(entries);
    nlohmann::ordered_json frames = nlohmann::ordered_json::array();
    for (const auto& [idx, boxes] : f.frames) {
      nlohmann::ordered_json bj = nlohmann::ordered_json::array();
      for (const auto& kb : boxes) {
        bj.push_back({{"x0", kb.box.x0}, {"y0", kb.box.y0}, {"x1", kb.box.x1}, {"y1", kb.box.y1},
                      {"text", kb.box.text}, {"phi", kb.phi}});
      }
      frames.push_back({{"frame", idx}, {"boxes", std::move(bj)}});
    }
    fj["frames"] = std::move(frames);
    files_j.push_back(std::move(fj));
  }
  j["files"] = std::move(files_j);
  return j.dump(1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

AnswerKey AnswerKey::parse(std::string_view json_text) {
  AnswerKey key;
  try {
    const auto j = nlohmann::json::parse(json_text);
    key.seed = j.at("seed").get<std::uint64_t>();
    key.date_offset_days = j.value("date_offset_days", 120);
    for (const auto& fj : j.at("files")) {
      FileKey f;
      f.path = fj.at("path").get<std::string>();
      for (const auto& ej : fj.at("entries")) {
        KeyEntry e;
        e.path = ej.at("path").get<std::string>();
        e.name = ej.value("name", e.path);
        const std::string kind = ej.at("kind").get<std::string>();
        if (kind == "value") {
          e.kind = Kind::Value;
        } else if (kind == "absent") {
          e.kind = Kind::Absent;
        } else if (kind == "uid") {
          e.kind = Kind::Uid;
        } else if (kind == "pid") {
          e.kind = Kind::Pid;
        } else {
          throw Error(ErrorCode::SchemaError, "answer key: unknown kind '" + kind + "'");
        }
        e.expected = ej.value("expected", std::string{});
        e.source = ej.value("source", std::string{});
        const std::string label = ej.value("label", std::string("standard"));
        e.label = label == "phi"          ? Label::Phi
                  : label == "private"    ? Label::Private
                  : label == "validation" ? Label::Validation
                  : label == "custom"     ? Label::Custom
                                          : Label::Standard;
        if (!TagPath::parse(e.path)) throw Error(ErrorCode::SchemaError, "answer key: bad path '" + e.path + "'");
        f.entries.push_back(std::move(e));
      }
      if (fj.contains("frames")) {
        for (const auto& frj : fj.at("frames")) {
          auto& boxes = f.frames[frj.at("frame").get<std::size_t>()];
          for (const auto& bj : frj.at("boxes")) {
            KeyBox kb;
            kb.box.x0 = bj.at("x0").get<int>();
            kb.box.y0 = bj.at("y0").get<int>();
            kb.box.x1 = bj.at("x1").get<int>();
            kb.box.y1 = bj.at("y1").get<int>();
            kb.box.text = bj.value("text", std::string{});
            kb.phi = bj.value("phi", false);
            boxes.push_back(std::move(kb));
          }
        }
      }
      key.files.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("answer key: ") + e.what());
  }
  return key;
}

AnswerKey AnswerKey::load(const fs::path& path) {
  const Bytes b = read_bytes(path);
  return parse(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

void AnswerKey::save(const fs::path& path) const {
  const std::string s = to_json();
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

Corpus generate_corpus(const CorpusSpec& spec) { return Generator(spec).run(); }

void write_corpus(const Corpus& corpus, const fs::path& dir) {
  for (const auto& f : corpus.files) {
    const fs::path p = dir / "dicom" / fs::path(f.path);
    fs::create_directories(p.parent_path());
    write_file(p, f.dataset);
  }
  fs::create_directories(dir);
  corpus.key.save(dir / "answer_key.json");
  const std::string d = corpus.detections.to_json();
  write_bytes(dir / "detections.json", std::span(reinterpret_cast<const std::uint8_t*>(d.data()), d.size()));
}

double check_score(std::string_view expected, std::string_view produced) {
  const auto a = trim_padding(expected);
  const auto b = trim_padding(produced);
  if (a == b) return 1.0;
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  const double dist = static_cast<double>(prev[b.size()]);
  return 1.0 - dist / static_cast<double>(std::max(a.size(), b.size()));
}

std::string render_value(const DataElement& e) {
  if (is_string_vr(e.vr())) return e.string();
  return hex_of(e.raw());
}

std::size_t score_bucket(double s) {
  if (s >= 1.0) return 0;
  if (s <= 0.0) return 1;
  if (s < 0.25) return 2;
  if (s < 0.4) return 3;
  if (s < 0.5) return 4;
  if (s < 0.7) return 5;
  if (s < 0.8) return 6;
  return 7;
}

std::string ScoreReport::table() const {
  std::string out = fmt::format("accuracy: {:.3f}% ({} / {})\n", accuracy(), matched, total);
  if (!per_tag.empty()) {
    std::vector<std::pair<std::string, std::size_t>> rows(per_tag.begin(), per_tag.end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    out += "\nfailures by tag:\n";
    for (const auto& [name, n] : rows) out += fmt::format("  {:<40} {}\n", name, n);
  }
  out += "\ncheck_score histogram (mismatches):\n";
  for (std::size_t i = 0; i < histogram.size(); ++i) out += fmt::format("  {:<12} {}\n", kBucketNames[i], histogram[i]);
  out += "\nfailure categories:\n";
  for (auto c : kCategories) {
    auto it = categories.find(std::string(c));
    out += fmt::format("  {:<14} {}\n", c, it == categories.end() ? 0 : it->second);
  }
  return out;
}

std::string ScoreReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy();
  j["total"] = total;
  j["matched"] = matched;
  j["per_tag"] = per_tag;
  nlohmann::ordered_json h = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < histogram.size(); ++i) h[std::string(kBucketNames[i])] = histogram[i];
  j["histogram"] = std::move(h);
  nlohmann::ordered_json c = nlohmann::ordered_json::object();
  for (auto name : kCategories) {
    auto it = categories.find(std::string(name));
    c[std::string(name)] = it == categories.end() ? 0 : it->second;
  }
  j["categories"] = std::move(c);
  nlohmann::ordered_json m = nlohmann::ordered_json::array();
  for (const auto& x : mismatches) {
    m.push_back({{"file", x.file}, {"path", x.path}, {"name", x.name}, {"expected", x.expected},
                 {"produced", x.produced_present ? nlohmann::ordered_json(x.produced) : nlohmann::ordered_json()},
                 {"score", x.score}, {"category", x.category}});
  }
  j["mismatches"] = std::move(m);
  return j.dump(1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

ScoreReport score_run(const AnswerKey& key, const fs::path& output_dir, const fs::path& source_dir) {
  std::vector<DataSet> outputs;
  outputs.reserve(key.files.size());
  for (const auto& f : key.files) {
    const fs::path p = output_dir / fs::path(f.path);
    if (!fs::exists(p)) throw Error(ErrorCode::MissingOutputFile, p.string());
    outputs.push_back(read_file(p));
  }

  // UID and patient-id equivalence classes across the whole run.
  std::map<std::string, std::set<std::string>> fwd[2];
  std::map<std::string, std::set<std::string>> rev[2];
  for (std::size_t i = 0; i < key.files.size(); ++i) {
    for (const auto& e : key.files[i].entries) {
      if (e.kind != Kind::Uid && e.kind != Kind::Pid) continue;
      const int k = e.kind == Kind::Uid ? 0 : 1;
      const DataElement* el = find_path(outputs[i], *TagPath::parse(e.path));
      const std::string produced = el ? el->string() : std::string("<absent>");
      fwd[k][e.source].insert(produced);
      rev[k][produced].insert(e.source);
    }
  }

  ScoreReport r;
  auto record = [&](const std::string& file, const std::string& path, const std::string& name, std::string expected,
                    std::optional<std::string> produced, double score, Label label) {
    Mismatch m;
    m.file = file;
    m.path = path;
    m.name = name;
    m.expected = std::move(expected);
    m.produced_present = produced.has_value();
    m.produced = produced.value_or("");
    m.score = score;
    m.category = std::string(category_for(label));
    ++r.per_tag[name];
    ++r.histogram[score_bucket(score)];
    ++r.categories[m.category];
    r.mismatches.push_back(std::move(m));
  };

  for (std::size_t i = 0; i < key.files.size(); ++i) {
    const auto& fk = key.files[i];
    for (const auto& e : fk.entries) {
      ++r.total;
      const DataElement* el = find_path(outputs[i], *TagPath::parse(e.path));
      std::optional<std::string> produced;
      if (el) produced = el->is_sequence() ? std::string("<sequence>") : render_value(*el);
      bool ok = false;
      double score = 0.0;
      std::string expected = e.expected;
      switch (e.kind) {
        case Kind::Absent:
          ok = !el;
          expected = "<absent>";
          score = ok ? 1.0 : check_score("", *produced);
          break;
        case Kind::Value:
          score = check_score(e.expected, produced.value_or(""));
          ok = el && score == 1.0;
          break;
        case Kind::Uid:
        case Kind::Pid: {
          const int k = e.kind == Kind::Uid ? 0 : 1;
          expected = fmt::format("<pseudonym of {}>", e.source);
          ok = el && *produced != e.source && !produced->empty() && fwd[k][e.source].size() == 1 &&
               rev[k][*produced].size() == 1 && (e.kind == Kind::Pid || is_valid_uid(*produced));
          score = ok ? 1.0 : 0.0;
          break;
        }
      }
      if (ok) {
        ++r.matched;
      } else {
        record(fk.path, e.path, e.name, std::move(expected), produced, score, e.label);
      }
    }

    if (fk.frames.empty()) continue;
    std::vector<Frame> before;
    std::vector<Frame> after;
    std::string frame_error;
    try {
      before = extract_frames(read_file(source_dir / fs::path(fk.path)));
      after = extract_frames(outputs[i]);
    } catch (const Error& err) {
      frame_error = err.what();
    }
    for (const auto& [idx, boxes] : fk.frames) {
      ++r.total;
      const std::string path = fmt::format("frame[{}].pixels", idx);
      if (!frame_error.empty() || idx >= before.size() || idx >= after.size() ||
          before[idx].pixels.size() != after[idx].pixels.size()) {
        record(fk.path, path, "Burned In Text", "<redacted>", std::nullopt, 0.0, Label::Phi);
        continue;
      }
      const Frame& a = before[idx];
      const Frame& b = after[idx];
      bool ok = true;
      double worst = 1.0;
      for (const auto& kb : boxes) {
        std::size_t changed = 0;
        for (int y = kb.box.y0; y < kb.box.y1; ++y) {
          for (int x = kb.box.x0; x < kb.box.x1; ++x) changed += a.at(x, y) != b.at(x, y) ? 1 : 0;
        }
        const double frac = static_cast<double>(changed) / static_cast<double>(kb.box.area());
        if (kb.phi) {
          worst = std::min(worst, frac);
          if (frac < 0.95) ok = false;
        } else if (changed != 0) {
          ok = false;
          worst = std::min(worst, 1.0 - frac);
        }
      }
      for (int y = 0; y < a.rows && ok; ++y) {
        for (int x = 0; x < a.cols; ++x) {
          const bool inside = std::any_of(boxes.begin(), boxes.end(), [&](const KeyBox& kb) { return kb.box.contains(x, y); });
          if (!inside && a.at(x, y) != b.at(x, y)) {
            ok = false;
            worst = 0.0;
            break;
          }
        }
      }
      if (ok) {
        ++r.matched;
      } else {
        record(fk.path, path, "Burned In Text", "<redacted>", std::string("<pixels>"), std::min(worst, 0.999), Label::Phi);
      }
    }
  }
  return r;
}

}  // namespace dcmdeid
