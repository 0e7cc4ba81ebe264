#include "dcmdeid/dictionary.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_map>

namespace dcmdeid {

namespace {

constexpr std::array kEntries = std::to_array<DictionaryEntry>({
    {{0x0002, 0x0000}, VR::UL, "FileMetaInformationGroupLength"},
    {{0x0002, 0x0001}, VR::OB, "FileMetaInformationVersion"},
    {{0x0002, 0x0002}, VR::UI, "MediaStorageSOPClassUID"},
    {{0x0002, 0x0003}, VR::UI, "MediaStorageSOPInstanceUID"},
    {{0x0002, 0x0010}, VR::UI, "TransferSyntaxUID"},
    {{0x0002, 0x0012}, VR::UI, "ImplementationClassUID"},
    {{0x0002, 0x0013}, VR::SH, "ImplementationVersionName"},
    {{0x0002, 0x0016}, VR::AE, "SourceApplicationEntityTitle"},
    {{0x0004, 0x1500}, VR::CS, "ReferencedFileID"},
    {{0x0008, 0x0005}, VR::CS, "SpecificCharacterSet"},
    {{0x0008, 0x0008}, VR::CS, "ImageType"},
    {{0x0008, 0x0012}, VR::DA, "InstanceCreationDate"},
    {{0x0008, 0x0013}, VR::TM, "InstanceCreationTime"},
    {{0x0008, 0x0014}, VR::UI, "InstanceCreatorUID"},
    {{0x0008, 0x0016}, VR::UI, "SOPClassUID"},
    {{0x0008, 0x0018}, VR::UI, "SOPInstanceUID"},
    {{0x0008, 0x0020}, VR::DA, "StudyDate"},
    {{0x0008, 0x0021}, VR::DA, "SeriesDate"},
    {{0x0008, 0x0022}, VR::DA, "AcquisitionDate"},
    {{0x0008, 0x0023}, VR::DA, "ContentDate"},
    {{0x0008, 0x002A}, VR::DT, "AcquisitionDateTime"},
    {{0x0008, 0x0030}, VR::TM, "StudyTime"},
    {{0x0008, 0x0031}, VR::TM, "SeriesTime"},
    {{0x0008, 0x0032}, VR::TM, "AcquisitionTime"},
    {{0x0008, 0x0033}, VR::TM, "ContentTime"},
    {{0x0008, 0x0050}, VR::SH, "AccessionNumber"},
    {{0x0008, 0x0060}, VR::CS, "Modality"},
    {{0x0008, 0x0064}, VR::CS, "ConversionType"},
    {{0x0008, 0x0068}, VR::CS, "PresentationIntentType"},
    {{0x0008, 0x0070}, VR::LO, "Manufacturer"},
    {{0x0008, 0x0080}, VR::LO, "InstitutionName"},
    {{0x0008, 0x0081}, VR::ST, "InstitutionAddress"},
    {{0x0008, 0x0090}, VR::PN, "ReferringPhysicianName"},
    {{0x0008, 0x0092}, VR::ST, "ReferringPhysicianAddress"},
    {{0x0008, 0x0094}, VR::SH, "ReferringPhysicianTelephoneNumbers"},
    {{0x0008, 0x0100}, VR::SH, "CodeValue"},
    {{0x0008, 0x0102}, VR::SH, "CodingSchemeDesignator"},
    {{0x0008, 0x0104}, VR::LO, "CodeMeaning"},
    {{0x0008, 0x0201}, VR::SH, "TimezoneOffsetFromUTC"},
    {{0x0008, 0x1010}, VR::SH, "StationName"},
    {{0x0008, 0x1030}, VR::LO, "StudyDescription"},
    {{0x0008, 0x103E}, VR::LO, "SeriesDescription"},
    {{0x0008, 0x1040}, VR::LO, "InstitutionalDepartmentName"},
    {{0x0008, 0x1048}, VR::PN, "PhysiciansOfRecord"},
    {{0x0008, 0x1050}, VR::PN, "PerformingPhysicianName"},
    {{0x0008, 0x1060}, VR::PN, "NameOfPhysiciansReadingStudy"},
    {{0x0008, 0x1070}, VR::PN, "OperatorsName"},
    {{0x0008, 0x1080}, VR::LO, "AdmittingDiagnosesDescription"},
    {{0x0008, 0x1090}, VR::LO, "ManufacturerModelName"},
    {{0x0008, 0x1110}, VR::SQ, "ReferencedStudySequence"},
    {{0x0008, 0x1111}, VR::SQ, "ReferencedPerformedProcedureStepSequence"},
    {{0x0008, 0x1115}, VR::SQ, "ReferencedSeriesSequence"},
    {{0x0008, 0x1120}, VR::SQ, "ReferencedPatientSequence"},
    {{0x0008, 0x1140}, VR::SQ, "ReferencedImageSequence"},
    {{0x0008, 0x1150}, VR::UI, "ReferencedSOPClassUID"},
    {{0x0008, 0x1155}, VR::UI, "ReferencedSOPInstanceUID"},
    {{0x0008, 0x2111}, VR::ST, "DerivationDescription"},
    {{0x0008, 0x9123}, VR::UI, "CreatorVersionUID"},
    {{0x0010, 0x0010}, VR::PN, "PatientName"},
    {{0x0010, 0x0020}, VR::LO, "PatientID"},
    {{0x0010, 0x0021}, VR::LO, "IssuerOfPatientID"},
    {{0x0010, 0x0030}, VR::DA, "PatientBirthDate"},
    {{0x0010, 0x0032}, VR::TM, "PatientBirthTime"},
    {{0x0010, 0x0040}, VR::CS, "PatientSex"},
    {{0x0010, 0x1000}, VR::LO, "OtherPatientIDs"},
    {{0x0010, 0x1001}, VR::PN, "OtherPatientNames"},
    {{0x0010, 0x1002}, VR::SQ, "OtherPatientIDsSequence"},
    {{0x0010, 0x1005}, VR::PN, "PatientBirthName"},
    {{0x0010, 0x1010}, VR::AS, "PatientAge"},
    {{0x0010, 0x1020}, VR::DS, "PatientSize"},
    {{0x0010, 0x1030}, VR::DS, "PatientWeight"},
    {{0x0010, 0x1040}, VR::LO, "PatientAddress"},
    {{0x0010, 0x1060}, VR::PN, "PatientMotherBirthName"},
    {{0x0010, 0x1090}, VR::LO, "MedicalRecordLocator"},
    {{0x0010, 0x2000}, VR::LO, "MedicalAlerts"},
    {{0x0010, 0x2110}, VR::LO, "Allergies"},
    {{0x0010, 0x2150}, VR::LO, "CountryOfResidence"},
    {{0x0010, 0x2152}, VR::LO, "RegionOfResidence"},
    {{0x0010, 0x2154}, VR::SH, "PatientTelephoneNumbers"},
    {{0x0010, 0x2160}, VR::SH, "EthnicGroup"},
    {{0x0010, 0x2180}, VR::SH, "Occupation"},
    {{0x0010, 0x21A0}, VR::CS, "SmokingStatus"},
    {{0x0010, 0x21B0}, VR::LT, "AdditionalPatientHistory"},
    {{0x0010, 0x21C0}, VR::US, "PregnancyStatus"},
    {{0x0010, 0x21D0}, VR::DA, "LastMenstrualDate"},
    {{0x0010, 0x21F0}, VR::LO, "PatientReligiousPreference"},
    {{0x0010, 0x4000}, VR::LT, "PatientComments"},
    {{0x0012, 0x0010}, VR::LO, "ClinicalTrialSponsorName"},
    {{0x0012, 0x0020}, VR::LO, "ClinicalTrialProtocolID"},
    {{0x0012, 0x0030}, VR::LO, "ClinicalTrialSiteID"},
    {{0x0012, 0x0040}, VR::LO, "ClinicalTrialSubjectID"},
    {{0x0012, 0x0062}, VR::CS, "PatientIdentityRemoved"},
    {{0x0012, 0x0063}, VR::LO, "DeidentificationMethod"},
    {{0x0018, 0x0010}, VR::LO, "ContrastBolusAgent"},
    {{0x0018, 0x0015}, VR::CS, "BodyPartExamined"},
    {{0x0018, 0x0050}, VR::DS, "SliceThickness"},
    {{0x0018, 0x0060}, VR::DS, "KVP"},
    {{0x0018, 0x1000}, VR::LO, "DeviceSerialNumber"},
    {{0x0018, 0x1002}, VR::UI, "DeviceUID"},
    {{0x0018, 0x1004}, VR::LO, "PlateID"},
    {{0x0018, 0x1020}, VR::LO, "SoftwareVersions"},
    {{0x0018, 0x1030}, VR::LO, "ProtocolName"},
    {{0x0018, 0x1400}, VR::LO, "AcquisitionDeviceProcessingDescription"},
    {{0x0018, 0x5100}, VR::CS, "PatientPosition"},
    {{0x0018, 0x700A}, VR::SH, "DetectorID"},
    {{0x0020, 0x000D}, VR::UI, "StudyInstanceUID"},
    {{0x0020, 0x000E}, VR::UI, "SeriesInstanceUID"},
    {{0x0020, 0x0010}, VR::SH, "StudyID"},
    {{0x0020, 0x0011}, VR::IS, "SeriesNumber"},
    {{0x0020, 0x0012}, VR::IS, "AcquisitionNumber"},
    {{0x0020, 0x0013}, VR::IS, "InstanceNumber"},
    {{0x0020, 0x0020}, VR::CS, "PatientOrientation"},
    {{0x0020, 0x0032}, VR::DS, "ImagePositionPatient"},
    {{0x0020, 0x0037}, VR::DS, "ImageOrientationPatient"},
    {{0x0020, 0x0052}, VR::UI, "FrameOfReferenceUID"},
    {{0x0020, 0x1040}, VR::LO, "PositionReferenceIndicator"},
    {{0x0020, 0x4000}, VR::LT, "ImageComments"},
    {{0x0028, 0x0002}, VR::US, "SamplesPerPixel"},
    {{0x0028, 0x0004}, VR::CS, "PhotometricInterpretation"},
    {{0x0028, 0x0006}, VR::US, "PlanarConfiguration"},
    {{0x0028, 0x0008}, VR::IS, "NumberOfFrames"},
    {{0x0028, 0x0010}, VR::US, "Rows"},
    {{0x0028, 0x0011}, VR::US, "Columns"},
    {{0x0028, 0x0030}, VR::DS, "PixelSpacing"},
    {{0x0028, 0x0100}, VR::US, "BitsAllocated"},
    {{0x0028, 0x0101}, VR::US, "BitsStored"},
    {{0x0028, 0x0102}, VR::US, "HighBit"},
    {{0x0028, 0x0103}, VR::US, "PixelRepresentation"},
    {{0x0028, 0x0301}, VR::CS, "BurnedInAnnotation"},
    {{0x0028, 0x1050}, VR::DS, "WindowCenter"},
    {{0x0028, 0x1051}, VR::DS, "WindowWidth"},
    {{0x0028, 0x1052}, VR::DS, "RescaleIntercept"},
    {{0x0028, 0x1053}, VR::DS, "RescaleSlope"},
    {{0x0032, 0x1032}, VR::PN, "RequestingPhysician"},
    {{0x0032, 0x1033}, VR::LO, "RequestingService"},
    {{0x0032, 0x1060}, VR::LO, "RequestedProcedureDescription"},
    {{0x0032, 0x4000}, VR::LT, "StudyComments"},
    {{0x0038, 0x0010}, VR::LO, "AdmissionID"},
    {{0x0038, 0x0300}, VR::LO, "CurrentPatientLocation"},
    {{0x0038, 0x0400}, VR::LO, "PatientInstitutionResidence"},
    {{0x0038, 0x0500}, VR::LO, "PatientState"},
    {{0x0038, 0x4000}, VR::LT, "VisitComments"},
    {{0x0040, 0x0006}, VR::PN, "ScheduledPerformingPhysicianName"},
    {{0x0040, 0x0244}, VR::DA, "PerformedProcedureStepStartDate"},
    {{0x0040, 0x0245}, VR::TM, "PerformedProcedureStepStartTime"},
    {{0x0040, 0x0253}, VR::SH, "PerformedProcedureStepID"},
    {{0x0040, 0x0254}, VR::LO, "PerformedProcedureStepDescription"},
    {{0x0040, 0x0275}, VR::SQ, "RequestAttributesSequence"},
    {{0x0040, 0x0280}, VR::ST, "CommentsOnThePerformedProcedureStep"},
    {{0x0040, 0x1001}, VR::SH, "RequestedProcedureID"},
    {{0x0040, 0x1400}, VR::LT, "RequestedProcedureComments"},
    {{0x0040, 0x2400}, VR::LT, "ImagingServiceRequestComments"},
    {{0x0040, 0xA730}, VR::SQ, "ContentSequence"},
    {{0x2050, 0x0020}, VR::CS, "PresentationLUTShape"},
    {{0x7FE0, 0x0010}, VR::OW, "PixelData"},
});

static_assert(std::is_sorted(kEntries.begin(), kEntries.end(),
                             [](const auto& a, const auto& b) { return a.tag < b.tag; }));

const std::unordered_map<std::string_view, const DictionaryEntry*>& keyword_index() {
  static const auto index = [] {
    std::unordered_map<std::string_view, const DictionaryEntry*> m;
    for (const auto& e : kEntries) m.emplace(e.keyword, &e);
    return m;
  }();
  return index;
}

}  // namespace

const DictionaryEntry* dictionary_lookup(Tag tag) noexcept {
  auto it = std::lower_bound(kEntries.begin(), kEntries.end(), tag,
                             [](const DictionaryEntry& e, Tag t) { return e.tag < t; });
  if (it == kEntries.end() || it->tag != tag) return nullptr;
  return &*it;
}

const DictionaryEntry* dictionary_lookup(std::string_view keyword) noexcept {
  const auto& index = keyword_index();
  auto it = index.find(keyword);
  return it == index.end() ? nullptr : it->second;
}

VR implicit_vr_for(Tag tag) noexcept {
  if (tag.is_group_length()) return VR::UL;
  if (tag.is_private_creator()) return VR::LO;
  if (const auto* e = dictionary_lookup(tag)) return e->vr;
  return VR::UN;
}

std::string display_name(std::string_view keyword) {
  std::string out;
  out.reserve(keyword.size() + 8);
  const auto upper = [](char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; };
  const auto lower = [](char c) { return std::islower(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < keyword.size(); ++i) {
    const char c = keyword[i];
    if (i > 0 && upper(c)) {
      const char prev = keyword[i - 1];
      const bool next_lower = i + 1 < keyword.size() && lower(keyword[i + 1]);
      if (lower(prev) || std::isdigit(static_cast<unsigned char>(prev)) || (upper(prev) && next_lower)) {
        out.push_back(' ');
      }
    }
    out.push_back(c);
  }
  return out;
}

std::string keyword_or_tag(Tag tag) {
  if (const auto* e = dictionary_lookup(tag)) return std::string(e->keyword);
  return tag.str();
}

}  // namespace dcmdeid
