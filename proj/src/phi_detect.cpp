#include "dcmdeid/phi_detect.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "dcmdeid/error.hpp"

namespace dcmdeid {

namespace {

std::string fold(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }

struct Token {
  std::size_t start;
  std::size_t end;
};

// Alphabetic word tokens (letters plus inner apostrophes/hyphens).
std::vector<Token> word_tokens(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < text.size() && (std::isalpha(static_cast<unsigned char>(text[i])) ||
                               ((text[i] == '\'' || text[i] == '-') && i + 1 < text.size() &&
                                std::isalpha(static_cast<unsigned char>(text[i + 1]))))) {
      ++i;
    }
    // Words glued to digits ("T1", "3D") are not name candidates.
    const bool glued = (start > 0 && std::isdigit(static_cast<unsigned char>(text[start - 1]))) ||
                       (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])));
    if (!glued) out.push_back({start, i});
  }
  return out;
}

bool all_upper(std::string_view w) {
  if (w.size() < 2) return false;
  for (char c : w) {
    if (is_lower(c)) return false;
  }
  return true;
}

bool capitalized(std::string_view w) { return !w.empty() && is_upper(w.front()); }

// Tokens are joined into a run only when separated by exactly one space.
bool single_space_between(std::string_view text, const Token& a, const Token& b) {
  return b.start == a.end + 1 && text[a.end] == ' ';
}

constexpr const char* kWhitelist = R"(# Imaging vocabulary that must never be treated as PHI.
# One term per line, matched case-insensitively against whole tokens.
# modalities
CT
MR
MRI
PET
SPECT
US
XR
CR
DX
MG
NM
PT
RF
XA
OT
SC
CTA
MRA
MRCP
# sequences and techniques
T1
T2
T1W
T2W
T1WI
T2WI
PD
FLAIR
DWI
ADC
SWI
STIR
GRE
TSE
FSE
SE
IR
EPI
DTI
TOF
MPRAGE
SPGR
FS
FATSAT
DIXON
BOLD
PERFUSION
PERF
LOCALIZER
LOC
SCOUT
SURVEY
CALIBRATION
TRACE
MAP
MIP
MPR
RECON
REFORMAT
FUSION
HELICAL
SPIRAL
ANGIO
VENOGRAM
TOMO
DBT
SYNTH
CAD
# orientation and laterality
AX
AXIAL
SAG
SAGITTAL
COR
CORONAL
OBL
OBLIQUE
TRA
TRANSVERSE
2D
3D
R
L
LT
RT
LEFT
RIGHT
BILAT
BILATERAL
AP
PA
LAT
LATERAL
MLO
CC
# contrast and phases
PRE
POST
CONTRAST
CONT
GAD
GADO
W
WO
WITH
WITHOUT
IV
ORAL
DYN
DYNAMIC
DELAYED
ARTERIAL
VENOUS
PORTAL
PHASE
NON
ENHANCED
# anatomy
HEAD
BRAIN
NECK
SPINE
CSPINE
TSPINE
LSPINE
CERVICAL
THORACIC
LUMBAR
SACRUM
CHEST
THORAX
LUNG
LUNGS
HEART
CARDIAC
CORONARY
AORTA
ABDOMEN
ABD
PELVIS
LIVER
KIDNEY
KIDNEYS
RENAL
PROSTATE
BREAST
BREASTS
KNEE
SHOULDER
HIP
ANKLE
WRIST
ELBOW
HAND
FOOT
ORBIT
ORBITS
SINUS
SINUSES
PANCREAS
SPLEEN
BLADDER
UTERUS
OVARY
THYROID
SKULL
FACE
TEMPORAL
IAC
PITUITARY
EXTREMITY
WHOLE
BODY
BONE
SOFT
TISSUE
# protocol words
STANDARD
ROUTINE
PROTOCOL
SERIES
STUDY
SCREENING
DIAGNOSTIC
BIOPSY
FOLLOW
UP
LOW
DOSE
HIGH
RES
THIN
THICK
SLICE
SLICES
WINDOW
KERNEL
MULTI
SINGLE
EXAM
IMAGE
IMAGES
VIEW
ORIGINAL
PRIMARY
SECONDARY
DERIVED
AVERAGE
OTHER
ATTN
NAC
AC
WB
SUV
FDG
PSMA
CALCIUM
SCORE
STROKE
TRAUMA
QUICK
FAST
)";

// Common given names and surnames used by the name-list rule.
const std::vector<std::string_view> kGivenNames = {
    "James",  "John",    "Robert",  "Michael", "William", "David",   "Richard", "Joseph",  "Thomas",
    "Charles", "Daniel", "Matthew", "Anthony", "Donald",  "Steven",  "Paul",    "Andrew",  "Joshua",
    "Kevin",  "Brian",   "George",  "Edward",  "Ronald",  "Timothy", "Jason",   "Jeffrey", "Ryan",
    "Mary",   "Patricia", "Jennifer", "Linda", "Elizabeth", "Barbara", "Susan", "Jessica", "Sarah",
    "Karen",  "Nancy",   "Lisa",    "Margaret", "Betty",  "Sandra",  "Ashley",  "Dorothy", "Kimberly",
    "Emily",  "Donna",   "Michelle", "Carol",  "Amanda",  "Melissa", "Deborah", "Stephanie", "Rebecca",
    "Laura",  "Helen",   "Anna",    "Maria",   "Jane",    "Hans",    "Klaus",   "Petra",   "Ingrid",
};

const std::vector<std::string_view> kSurnames = {
    "Smith",  "Johnson", "Williams", "Brown",  "Jones",   "Garcia",  "Miller",  "Davis",   "Rodriguez",
    "Martinez", "Hernandez", "Lopez", "Gonzalez", "Wilson", "Anderson", "Thomas", "Taylor", "Moore",
    "Jackson", "Martin", "Lee",     "Perez",   "Thompson", "White",  "Harris",  "Sanchez", "Clark",
    "Ramirez", "Lewis",  "Robinson", "Walker", "Young",   "Allen",   "King",    "Wright",  "Scott",
    "Torres", "Nguyen",  "Hill",    "Flores",  "Green",   "Adams",   "Nelson",  "Baker",   "Hall",
    "Rivera", "Campbell", "Mitchell", "Carter", "Roberts", "Doe",    "Mueller", "Schmidt", "Schneider",
    "Fischer", "Weber",  "Meyer",   "Wagner",  "Becker",  "Hoffmann",
};

}  // namespace

std::string_view to_string(EntityCategory category) noexcept {
  switch (category) {
    case EntityCategory::Name: return "NAME";
    case EntityCategory::Date: return "DATE";
    case EntityCategory::Id: return "ID";
    case EntityCategory::Location: return "LOCATION";
    case EntityCategory::Contact: return "CONTACT";
    case EntityCategory::Age: return "AGE";
    case EntityCategory::Other: return "OTHER";
  }
  return "OTHER";
}

std::vector<EntitySpan> merge_spans(std::vector<EntitySpan> spans, std::string_view document) {
  std::erase_if(spans, [&](const EntitySpan& s) { return s.start >= s.end || s.end > document.size(); });
  std::sort(spans.begin(), spans.end(), [](const EntitySpan& a, const EntitySpan& b) {
    return a.start != b.start ? a.start < b.start : a.end > b.end;
  });
  std::vector<EntitySpan> merged;
  for (auto& s : spans) {
    if (!merged.empty() && s.start < merged.back().end) {
      auto& last = merged.back();
      last.end = std::max(last.end, s.end);
      if (s.confidence > last.confidence) {
        last.confidence = s.confidence;
        last.category = s.category;
      }
    } else {
      merged.push_back(std::move(s));
    }
  }
  for (auto& s : merged) s.text = std::string(document.substr(s.start, s.end - s.start));
  return merged;
}

std::vector<EntitySpan> detect_entities(const Detector& detector, std::string_view text) {
  if (text.empty()) return {};
  return merge_spans(detector.find_spans(text), text);
}

Whitelist::Whitelist(std::vector<std::string> terms, std::filesystem::path source) : source_(std::move(source)) {
  for (auto& t : terms) {
    if (!t.empty()) terms_.insert(fold(t));
  }
}

Whitelist Whitelist::parse(std::string_view text, std::filesystem::path source) {
  std::vector<std::string> terms;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    terms.push_back(line.substr(first, last - first + 1));
  }
  Whitelist w(std::move(terms), std::move(source));
  if (w.empty()) throw Error(ErrorCode::EmptyWhitelist, w.source_.empty() ? "<inline>" : w.source_.string());
  return w;
}

Whitelist Whitelist::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

const Whitelist& Whitelist::bundled() {
  static const Whitelist w = parse(kWhitelist, "<bundled>");
  return w;
}

const char* bundled_whitelist_text() noexcept { return kWhitelist; }

bool Whitelist::contains(std::string_view token) const { return terms_.count(fold(token)) != 0; }

std::vector<EntitySpan> filter_whitelist(std::vector<EntitySpan> entities, const Whitelist& whitelist,
                                         std::string_view document) {
  if (whitelist.empty()) return entities;
  std::erase_if(entities, [&](const EntitySpan& span) {
    const auto text = document.substr(span.start, span.end - span.start);
    bool any = false;
    std::size_t i = 0;
    while (i < text.size()) {
      if (!is_alnum(text[i])) {
        ++i;
        continue;
      }
      const std::size_t start = i;
      while (i < text.size() && is_alnum(text[i])) ++i;
      if (!whitelist.contains(text.substr(start, i - start))) return false;
      any = true;
    }
    return any;
  });
  return entities;
}

std::string remove_spans(std::string_view text, const std::vector<EntitySpan>& spans) {
  std::string out;
  out.reserve(text.size());
  std::size_t cursor = 0;
  for (const auto& s : spans) {
    if (s.start < cursor || s.end > text.size()) {
      throw Error(ErrorCode::SpanOutOfBounds, "span [" + std::to_string(s.start) + "," + std::to_string(s.end) + ")");
    }
    out.append(text.substr(cursor, s.start - cursor));
    cursor = s.end;
  }
  out.append(text.substr(cursor));
  return out;
}

std::string deidentified_element_val(const Detector& detector, const Whitelist& whitelist,
                                     std::string_view element_text) {
  auto spans = filter_whitelist(detect_entities(detector, element_text), whitelist, element_text);
  if (spans.empty()) return std::string(element_text);
  return remove_spans(element_text, spans);
}

PatternDetector::PatternDetector() {
  using E = EntityCategory;
  const auto add = [this](const char* re, int group, E cat, double conf, bool icase = false) {
    auto flags = std::regex::ECMAScript | std::regex::optimize;
    if (icase) flags |= std::regex::icase;
    rules_.push_back({std::regex(re, flags), group, cat, conf});
  };
  add(R"(\b\d{1,2}[/.-]\d{1,2}[/.-](?:\d{4}|\d{2})\b)", 0, E::Date, 0.95);
  add(R"(\b\d{4}-\d{2}-\d{2}\b)", 0, E::Date, 0.95);
  add(R"(\b(?:19|20)\d{2}(?:0[1-9]|1[0-2])(?:0[1-9]|[12]\d|3[01])\b)", 0, E::Date, 0.9);
  add(R"(\(?\b\d{3}\)?[-. ]\d{3}[-.]\d{4}\b)", 0, E::Contact, 0.9);
  add(R"(\b[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+\b)", 0, E::Contact, 0.95);
  add(R"(\b\d{3}-\d{2}-\d{4}\b)", 0, E::Id, 0.9);
  add(R"(\b(?:MRN|ID|Acc|Accession)\s*[#:]?\s*([A-Za-z]{0,4}\d[A-Za-z0-9-]*))", 1, E::Id, 0.8);
  add(R"(\b\d{6,}\b)", 0, E::Id, 0.7);
  add(R"(\b(?:Dr|Mr|Mrs|Ms|Miss|Prof)\.?\s+([A-Z][A-Za-z'-]+(?:\s+[A-Z][A-Za-z'-]+){0,2}))", 1, E::Name, 0.85);
  add(R"(\b[A-Za-z][A-Za-z'-]*\^[A-Za-z][A-Za-z'-]*(?:\^[A-Za-z'-]*)*)", 0, E::Name, 0.9);
  add(R"(\b\d{1,3}\s?-?\s?(?:years?[- ]old|y/o|yo)\b)", 0, E::Age, 0.8, true);
  add(R"(\b\d{1,5}\s+(?:[A-Z][a-z]+\s+){1,3}(?:Street|St|Avenue|Ave|Road|Rd|Boulevard|Blvd|Lane|Ln|Drive)\b)", 0,
      E::Location, 0.85);
  for (auto n : kGivenNames) name_tokens_.insert(fold(n));
  for (auto n : kSurnames) name_tokens_.insert(fold(n));
}

const std::vector<std::string_view>& PatternDetector::given_names() { return kGivenNames; }
const std::vector<std::string_view>& PatternDetector::surnames() { return kSurnames; }

std::vector<EntitySpan> PatternDetector::find_spans(std::string_view text) const {
  std::vector<EntitySpan> out;
  const std::string owned(text);
  for (const auto& rule : rules_) {
    for (auto it = std::sregex_iterator(owned.begin(), owned.end(), rule.pattern); it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      if (!m[rule.group].matched || m.length(rule.group) == 0) continue;
      const auto start = static_cast<std::size_t>(m.position(rule.group));
      out.push_back({start, start + static_cast<std::size_t>(m.length(rule.group)), rule.category, rule.confidence, {}});
    }
  }

  const auto tokens = word_tokens(text);
  const auto word = [&](const Token& t) { return text.substr(t.start, t.end - t.start); };

  // Bundled names, capitalized or upper-case; adjacent hits form one span.
  for (std::size_t i = 0; i < tokens.size();) {
    const auto is_name = [&](const Token& t) {
      const auto w = word(t);
      return capitalized(w) && name_tokens_.count(fold(w)) != 0;
    };
    if (!is_name(tokens[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < tokens.size() && is_name(tokens[j + 1]) && single_space_between(text, tokens[j], tokens[j + 1])) ++j;
    out.push_back({tokens[i].start, tokens[j].end, EntityCategory::Name, 0.75, {}});
    i = j + 1;
  }

  // Runs of two or more upper-case words.
  for (std::size_t i = 0; i < tokens.size();) {
    if (!all_upper(word(tokens[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < tokens.size() && all_upper(word(tokens[j + 1])) &&
           single_space_between(text, tokens[j], tokens[j + 1])) {
      ++j;
    }
    if (j > i) out.push_back({tokens[i].start, tokens[j].end, EntityCategory::Name, 0.55, {}});
    i = j + 1;
  }
  return out;
}

}  // namespace dcmdeid
