#include "dcmdeid/remote_detector.hpp"

#include <algorithm>
#include <cctype>

#include <httplib.h>
#include <json.hpp>

#include "dcmdeid/error.hpp"

namespace dcmdeid {

namespace {

struct SlotGuard {
  explicit SlotGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
  std::counting_semaphore<1024>& sem;
};

}  // namespace

EntityCategory category_for_label(std::string_view label) {
  std::string l(label);
  for (auto& c : l) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (l.size() > 2 && l[1] == '-' && std::string_view("BILUES").find(l[0]) != std::string_view::npos) l.erase(0, 2);
  static const std::pair<std::string_view, EntityCategory> kTable[] = {
      {"PATIENT", EntityCategory::Name},      {"DOCTOR", EntityCategory::Name},
      {"STAFF", EntityCategory::Name},        {"PERSON", EntityCategory::Name},
      {"NAME", EntityCategory::Name},         {"USERNAME", EntityCategory::Name},
      {"DATE", EntityCategory::Date},         {"AGE", EntityCategory::Age},
      {"PHONE", EntityCategory::Contact},     {"FAX", EntityCategory::Contact},
      {"EMAIL", EntityCategory::Contact},     {"URL", EntityCategory::Contact},
      {"IPADDR", EntityCategory::Contact},    {"IP", EntityCategory::Contact},
      {"MEDICALRECORD", EntityCategory::Id},  {"IDNUM", EntityCategory::Id},
      {"ID", EntityCategory::Id},             {"SSN", EntityCategory::Id},
      {"ACCOUNT", EntityCategory::Id},        {"LICENSE", EntityCategory::Id},
      {"HEALTHPLAN", EntityCategory::Id},     {"DEVICE", EntityCategory::Id},
      {"BIOID", EntityCategory::Id},          {"VEHICLE", EntityCategory::Id},
      {"HOSPITAL", EntityCategory::Location}, {"HOSP", EntityCategory::Location},
      {"LOC", EntityCategory::Location},      {"LOCATION", EntityCategory::Location},
      {"CITY", EntityCategory::Location},     {"STATE", EntityCategory::Location},
      {"STREET", EntityCategory::Location},   {"ZIP", EntityCategory::Location},
      {"COUNTRY", EntityCategory::Location},  {"ORGANIZATION", EntityCategory::Location},
      {"PATORG", EntityCategory::Location},   {"OTHERPHI", EntityCategory::Other},
  };
  for (const auto& [name, cat] : kTable) {
    if (l == name) return cat;
  }
  return EntityCategory::Other;
}

std::size_t byte_offset_from_codepoints(std::string_view text, std::size_t codepoints) {
  std::size_t bytes = 0;
  for (std::size_t cp = 0; cp < codepoints && bytes < text.size(); ++cp) {
    const auto lead = static_cast<unsigned char>(text[bytes]);
    const std::size_t width = lead < 0x80 ? 1 : (lead >> 5) == 0x6 ? 2 : (lead >> 4) == 0xE ? 3 : (lead >> 3) == 0x1E ? 4 : 1;
    bytes = std::min(text.size(), bytes + width);
  }
  return bytes;
}

RemoteDetector::RemoteDetector(RemoteDetectorOptions options)
    : options_(std::move(options)), slots_(std::clamp<std::ptrdiff_t>(options_.max_connections, 1, 1024)) {}

RemoteDetector::~RemoteDetector() = default;

std::vector<EntitySpan> RemoteDetector::parse_response(std::string_view body, std::string_view text,
                                                       double min_confidence) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::RemoteUnavailable, std::string("malformed /detect response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("entities") || !j["entities"].is_array()) {
    throw Error(ErrorCode::RemoteUnavailable, "malformed /detect response: missing entities array");
  }
  std::vector<EntitySpan> out;
  for (const auto& e : j["entities"]) {
    if (!e.is_object() || !e.contains("start") || !e.contains("end") || !e["start"].is_number_integer() ||
        !e["end"].is_number_integer()) {
      throw Error(ErrorCode::RemoteUnavailable, "malformed entity in /detect response");
    }
    const double score = e.value("score", 1.0);
    if (score < min_confidence) continue;
    const auto start_cp = e["start"].get<long long>();
    const auto end_cp = e["end"].get<long long>();
    if (start_cp < 0 || end_cp <= start_cp) {
      throw Error(ErrorCode::RemoteUnavailable, "entity span out of range in /detect response");
    }
    const auto start = byte_offset_from_codepoints(text, static_cast<std::size_t>(start_cp));
    const auto end = byte_offset_from_codepoints(text, static_cast<std::size_t>(end_cp));
    if (end <= start) throw Error(ErrorCode::RemoteUnavailable, "entity span out of range in /detect response");
    out.push_back({start, end, category_for_label(e.value("label", std::string("OTHER"))), score,
                   std::string(text.substr(start, end - start))});
  }
  return out;
}

std::vector<EntitySpan> RemoteDetector::find_spans(std::string_view text) const {
  if (text.empty()) return {};
  SlotGuard guard(slots_);
  httplib::Client client(options_.url);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  client.set_read_timeout(options_.timeout_seconds, 0);
  const std::string body =
      nlohmann::json{{"text", std::string(text)}}.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  auto res = client.Post("/detect", body, "application/json");
  if (!res) {
    throw Error(ErrorCode::RemoteUnavailable, options_.url + "/detect: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::RemoteUnavailable, options_.url + "/detect: HTTP " + std::to_string(res->status));
  }
  return parse_response(res->body, text, options_.min_confidence);
}

}  // namespace dcmdeid
