#include "dcmdeid/dicom_validate.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>

#include <sys/wait.h>

#include <fmt/format.h>

#include "dcmdeid/codec.hpp"
#include "dcmdeid/dictionary.hpp"
#include "dcmdeid/error.hpp"

namespace dcmdeid {

namespace {

constexpr const char* kBundledProfiles = R"(# Required attribute subsets (type 1 and type 2) per SOP class
[1.2.840.10008.5.1.4.1.1.2] CT Image Storage
PatientName
PatientID
PatientBirthDate
PatientSex
StudyInstanceUID
StudyDate
StudyTime
ReferringPhysicianName
StudyID
AccessionNumber
Modality
SeriesInstanceUID
SeriesNumber
FrameOfReferenceUID
PositionReferenceIndicator
Manufacturer
ImageType
InstanceNumber
ImagePositionPatient
ImageOrientationPatient
SamplesPerPixel
PhotometricInterpretation
Rows
Columns
BitsAllocated
BitsStored
HighBit
PixelRepresentation
KVP
AcquisitionNumber
SOPClassUID
SOPInstanceUID
ClinicalTrialSubjectID

[1.2.840.10008.5.1.4.1.1.4] MR Image Storage
PatientName
PatientID
PatientBirthDate
PatientSex
StudyInstanceUID
StudyDate
StudyTime
ReferringPhysicianName
StudyID
AccessionNumber
Modality
SeriesInstanceUID
SeriesNumber
FrameOfReferenceUID
PositionReferenceIndicator
Manufacturer
ImageType
InstanceNumber
ImagePositionPatient
ImageOrientationPatient
SamplesPerPixel
PhotometricInterpretation
Rows
Columns
BitsAllocated
BitsStored
HighBit
PixelRepresentation
SliceThickness
SOPClassUID
SOPInstanceUID
ClinicalTrialSubjectID

[1.2.840.10008.5.1.4.1.1.1] Computed Radiography Image Storage
PatientName
PatientID
PatientBirthDate
PatientSex
StudyInstanceUID
StudyDate
StudyTime
ReferringPhysicianName
StudyID
AccessionNumber
Modality
SeriesInstanceUID
SeriesNumber
Manufacturer
InstanceNumber
PatientOrientation
SamplesPerPixel
PhotometricInterpretation
Rows
Columns
BitsAllocated
BitsStored
HighBit
PixelRepresentation
SOPClassUID
SOPInstanceUID
ClinicalTrialSubjectID

[1.2.840.10008.5.1.4.1.1.7] Secondary Capture Image Storage
PatientName
PatientID
PatientBirthDate
PatientSex
StudyInstanceUID
StudyDate
StudyTime
ReferringPhysicianName
StudyID
AccessionNumber
Modality
SeriesInstanceUID
SeriesNumber
InstanceNumber
PatientOrientation
ConversionType
SamplesPerPixel
PhotometricInterpretation
Rows
Columns
BitsAllocated
BitsStored
HighBit
PixelRepresentation
SOPClassUID
SOPInstanceUID
)";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = trim(line);
    if (!line.empty()) f(line_no, line);
  }
}

std::string text_of(const Bytes& b) { return std::string(b.begin(), b.end()); }

}  // namespace

const char* bundled_validation_profiles_text() noexcept { return kBundledProfiles; }

RequiredAttributeProfiles RequiredAttributeProfiles::parse(std::string_view text) {
  RequiredAttributeProfiles out;
  Profile* current = nullptr;
  std::set<Tag> seen;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos || close == 1) {
        throw Error(ErrorCode::SchemaError, fmt::format("line {}: bad section header", line_no));
      }
      const std::string uid(trim(line.substr(1, close - 1)));
      if (out.profiles_.count(uid)) throw Error(ErrorCode::SchemaError, fmt::format("line {}: duplicate SOP class {}", line_no, uid));
      current = &out.profiles_[uid];
      current->name = std::string(trim(line.substr(close + 1)));
      seen.clear();
      return;
    }
    if (!current) throw Error(ErrorCode::SchemaError, fmt::format("line {}: attribute outside a section", line_no));
    std::optional<Tag> tag;
    if (const DictionaryEntry* e = dictionary_lookup(line)) {
      tag = e->tag;
    } else {
      tag = Tag::parse(line);
    }
    if (!tag) throw Error(ErrorCode::SchemaError, fmt::format("line {}: unknown attribute '{}'", line_no, line));
    if (!seen.insert(*tag).second) {
      throw Error(ErrorCode::SchemaError, fmt::format("line {}: duplicate attribute {}", line_no, tag->str()));
    }
    current->tags.push_back(*tag);
  });
  for (auto& [uid, p] : out.profiles_) std::sort(p.tags.begin(), p.tags.end());
  return out;
}

RequiredAttributeProfiles RequiredAttributeProfiles::load(const std::filesystem::path& path) {
  return parse(text_of(read_bytes(path)));
}

const RequiredAttributeProfiles& RequiredAttributeProfiles::bundled() {
  static const RequiredAttributeProfiles p = parse(kBundledProfiles);
  return p;
}

const std::vector<Tag>* RequiredAttributeProfiles::required_for(std::string_view sop_class_uid) const {
  auto it = profiles_.find(sop_class_uid);
  return it == profiles_.end() ? nullptr : &it->second.tags;
}

std::string RequiredAttributeProfiles::name_of(std::string_view sop_class_uid) const {
  auto it = profiles_.find(sop_class_uid);
  return it == profiles_.end() ? std::string{} : it->second.name;
}

std::vector<std::string> RequiredAttributeProfiles::sop_classes() const {
  std::vector<std::string> out;
  for (const auto& [uid, p] : profiles_) out.push_back(uid);
  return out;
}

ValidationResult validate(const DataSet& ds, const RequiredAttributeProfiles& profiles) {
  ValidationResult result;
  const std::string sop = ds.get_string(tags::kSOPClassUID);
  const auto* required = profiles.required_for(sop);
  if (!required) {
    result.warnings.push_back(fmt::format("unknown SOP class '{}': not validated", sop));
    return result;
  }
  for (Tag t : *required) {
    if (ds.contains(t)) continue;
    result.issues.push_back({ValidationIssue::Kind::MissingAttribute, t, keyword_or_tag(t)});
  }
  return result;
}

IgnoreList IgnoreList::defaults() { return IgnoreList({"CodeValue", "Manufacturer", "ClinicalTrialSubjectID"}); }

IgnoreList IgnoreList::parse(std::string_view text) {
  std::set<std::string, std::less<>> kw;
  for_each_line(text, [&](std::size_t, std::string_view line) { kw.emplace(line); });
  return IgnoreList(std::move(kw));
}

IgnoreList IgnoreList::load(const std::filesystem::path& path) { return parse(text_of(read_bytes(path))); }

RepairReport repair(DataSet& ds, const std::vector<ValidationIssue>& issues, const IgnoreList& ignore) {
  RepairReport report;
  for (const auto& issue : issues) {
    if (ignore.contains(issue.keyword) || !issue.tag) {
      report.ignored.push_back(issue);
      continue;
    }
    const Tag t = *issue.tag;
    if (ds.contains(t)) continue;
    const DictionaryEntry* e = dictionary_lookup(t);
    const VR vr = e ? e->vr : VR::UN;
    ds.set(vr == VR::SQ ? DataElement::sequence(t, {}) : DataElement(t, vr));
    report.inserted.push_back(t);
  }
  return report;
}

std::vector<ValidationIssue> parse_external_validator_output(std::string_view text) {
  std::vector<ValidationIssue> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find("Error - Missing attribute") == std::string_view::npos) continue;
    // "Element=<Keyword> Module=<Module>"; older builds print only "<Keyword>".
    auto open = line.find("Element=<");
    open = open == std::string_view::npos ? line.find('<') : open + 8;
    if (open == std::string_view::npos) continue;
    const auto close = line.find('>', open);
    if (close == std::string_view::npos || close - open < 2) continue;
    const std::string keyword(line.substr(open + 1, close - open - 1));
    ValidationIssue issue;
    issue.keyword = keyword;
    if (const DictionaryEntry* e = dictionary_lookup(keyword)) issue.tag = e->tag;
    out.push_back(std::move(issue));
  }
  return out;
}

std::vector<ValidationIssue> run_external_validator(const std::filesystem::path& executable,
                                                    const std::filesystem::path& file) {
  auto quote = [](const std::string& s) {
    std::string q = "'";
    for (char c : s) {
      if (c == '\'') {
        q += "'\\''";
      } else {
        q += c;
      }
    }
    return q + "'";
  };
  const std::string cmd = quote(executable.string()) + " " + quote(file.string()) + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw Error(ErrorCode::IoError, "cannot start " + executable.string());
  std::string output;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  if (status == -1) throw Error(ErrorCode::IoError, "cannot wait for " + executable.string());
  // The shell reports 127 when the executable is missing.
  if (WIFEXITED(status) && WEXITSTATUS(status) == 127) {
    throw Error(ErrorCode::IoError, "cannot run " + executable.string());
  }
  return parse_external_validator_output(output);
}

}  // namespace dcmdeid
