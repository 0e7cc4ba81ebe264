#include "dcmdeid/identity_store.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <vector>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include "dcmdeid/error.hpp"

namespace dcmdeid {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date (H. Hinnant's algorithm).
constexpr long long days_from_civil(long long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

struct Civil {
  long long y;
  unsigned m, d;
};

constexpr Civil civil_from_days(long long z) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long long y = static_cast<long long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

constexpr bool is_leap(long long y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr unsigned days_in_month(long long y, unsigned m) {
  constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

bool all_digits(std::string_view s) {
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return !s.empty();
}

unsigned to_uint(std::string_view s) {
  unsigned v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

[[noreturn]] void unparseable(std::string_view value) {
  throw Error(ErrorCode::UnparseableDate, "'" + std::string(value) + "'");
}

// Shifts a 4, 6 or 8 digit date prefix; returns the same precision.
std::string shift_date_digits(std::string_view digits, int offset_days, std::string_view whole) {
  if (!all_digits(digits) || (digits.size() != 4 && digits.size() != 6 && digits.size() != 8)) unparseable(whole);
  const long long y = to_uint(digits.substr(0, 4));
  const unsigned m = digits.size() >= 6 ? to_uint(digits.substr(4, 2)) : 1;
  const unsigned d = digits.size() == 8 ? to_uint(digits.substr(6, 2)) : 1;
  if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m)) unparseable(whole);
  const Civil c = civil_from_days(days_from_civil(y, m, d) + offset_days);
  if (c.y < 0 || c.y > 9999) unparseable(whole);
  std::string out = fmt::format("{:04d}{:02d}{:02d}", c.y, c.m, c.d);
  out.resize(digits.size());
  return out;
}

void validate_time(std::string_view tm) {
  // HH[MM[SS[.F{1,6}]]], tolerating the legacy "HH:MM:SS" form.
  std::string digits;
  std::size_t i = 0;
  for (; i < tm.size() && tm[i] != '.'; ++i) {
    if (tm[i] == ':') continue;
    if (tm[i] < '0' || tm[i] > '9') unparseable(tm);
    digits.push_back(tm[i]);
  }
  if (digits.size() < 2 || digits.size() > 6 || digits.size() % 2 != 0) unparseable(tm);
  if (to_uint(std::string_view(digits).substr(0, 2)) > 23) unparseable(tm);
  if (i < tm.size()) {
    const auto frac = tm.substr(i + 1);
    if (digits.size() != 6 || frac.empty() || frac.size() > 6 || !all_digits(frac)) unparseable(tm);
  }
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::vector<std::string> parse_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back().push_back(c);
    }
  }
  return fields;
}

std::string u128_to_decimal(unsigned __int128 v) {
  if (v == 0) return "0";
  std::string out;
  while (v != 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  return {out.rbegin(), out.rend()};
}

}  // namespace

bool is_valid_uid(std::string_view uid) noexcept {
  if (uid.empty() || uid.size() > 64) return false;
  std::size_t start = 0;
  while (true) {
    const auto dot = uid.find('.', start);
    const auto comp = uid.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
    if (!all_digits(comp)) return false;
    if (comp.size() > 1 && comp.front() == '0') return false;
    if (dot == std::string_view::npos) return true;
    start = dot + 1;
  }
}

std::string shift_date(std::string_view value, int offset_days, VR vr) {
  switch (vr) {
    case VR::DA:
      return shift_date_digits(value, offset_days, value);
    case VR::DT: {
      // Date part is the leading run of digits up to 8; the rest (time, fraction, zone) is kept.
      std::size_t n = 0;
      while (n < value.size() && n < 8 && value[n] >= '0' && value[n] <= '9') ++n;
      const std::size_t date_len = n >= 8 ? 8 : (n >= 6 ? 6 : (n >= 4 ? 4 : 0));
      if (date_len == 0) unparseable(value);
      if (date_len < 8 && n != date_len) unparseable(value);
      return shift_date_digits(value.substr(0, date_len), offset_days, value) + std::string(value.substr(date_len));
    }
    case VR::TM:
      validate_time(value);
      return std::string(value);
    default:
      unparseable(value);
  }
}

IdentityStore::IdentityStore(std::string salt, int date_offset_days)
    : salt_(std::move(salt)), date_offset_days_(date_offset_days) {}

std::string IdentityStore::random_salt() {
  std::random_device rd;
  std::string out;
  for (int i = 0; i < 4; ++i) out += fmt::format("{:08x}", rd());
  return out;
}

std::string IdentityStore::derive(std::string_view domain, std::string_view original) const {
  std::string message(domain);
  message.push_back('\0');
  message.append(original);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  HMAC(EVP_sha256(), salt_.data(), static_cast<int>(salt_.size()),
       reinterpret_cast<const unsigned char*>(message.data()), message.size(), digest.data(), &len);
  return std::string(reinterpret_cast<const char*>(digest.data()), len);
}

std::string IdentityStore::remap_uid(std::string_view uid) {
  if (!is_valid_uid(uid)) throw Error(ErrorCode::InvalidUID, "'" + std::string(uid) + "'");
  {
    std::shared_lock lock(mutex_);
    if (auto it = uid_map_.find(uid); it != uid_map_.end()) return it->second;
    if (uid_values_.count(uid)) return std::string(uid);
  }
  const std::string digest = derive("uid", uid);
  unsigned __int128 v = 0;
  for (int i = 0; i < 16; ++i) v = (v << 8) | static_cast<unsigned char>(digest[static_cast<std::size_t>(i)]);
  std::string replacement = "2.25." + u128_to_decimal(v);

  std::unique_lock lock(mutex_);
  auto [it, inserted] = uid_map_.try_emplace(std::string(uid), replacement);
  if (inserted && !uid_values_.insert(replacement).second) {
    uid_map_.erase(it);
    throw Error(ErrorCode::InvalidUID, "pseudonym collision for '" + std::string(uid) + "'");
  }
  return it->second;
}

std::string IdentityStore::remap_patient_id(std::string_view id) {
  if (id.empty()) throw Error(ErrorCode::EmptyID, "patient id is empty");
  {
    std::shared_lock lock(mutex_);
    if (auto it = id_map_.find(id); it != id_map_.end()) return it->second;
    if (id_values_.count(id)) return std::string(id);
  }
  const std::string digest = derive("patient-id", id);
  std::string replacement = "PSN-";
  for (int i = 0; i < 6; ++i) replacement += fmt::format("{:02x}", static_cast<unsigned char>(digest[static_cast<std::size_t>(i)]));

  std::unique_lock lock(mutex_);
  auto [it, inserted] = id_map_.try_emplace(std::string(id), replacement);
  if (inserted && !id_values_.insert(replacement).second) {
    id_map_.erase(it);
    throw Error(ErrorCode::EmptyID, "pseudonym collision for patient id '" + std::string(id) + "'");
  }
  return it->second;
}

std::map<std::string, std::string> IdentityStore::uid_map() const {
  std::shared_lock lock(mutex_);
  return {uid_map_.begin(), uid_map_.end()};
}

std::map<std::string, std::string> IdentityStore::id_map() const {
  std::shared_lock lock(mutex_);
  return {id_map_.begin(), id_map_.end()};
}

std::size_t IdentityStore::size() const {
  std::shared_lock lock(mutex_);
  return uid_map_.size() + id_map_.size();
}

std::string IdentityStore::mappings_csv() const {
  std::shared_lock lock(mutex_);
  std::string out = "kind,original,replacement\n";
  // "patient_id" sorts before "uid"; each map is already ordered by original.
  for (const auto& [orig, repl] : id_map_) out += "patient_id," + csv_field(orig) + "," + csv_field(repl) + "\n";
  for (const auto& [orig, repl] : uid_map_) out += "uid," + csv_field(orig) + "," + csv_field(repl) + "\n";
  return out;
}

void IdentityStore::export_mappings(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot create " + path.string());
  out << mappings_csv();
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

void IdentityStore::import_mappings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  import_mappings_csv(ss.str());
}

void IdentityStore::import_mappings_csv(std::string_view csv) {
  std::unique_lock lock(mutex_);
  std::size_t line_no = 0;
  while (!csv.empty()) {
    const auto nl = csv.find('\n');
    std::string_view line = csv.substr(0, nl);
    csv = nl == std::string_view::npos ? std::string_view{} : csv.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no++ == 0 || line.empty()) continue;
    const auto fields = parse_csv_line(line);
    if (fields.size() != 3) throw Error(ErrorCode::SchemaError, fmt::format("mapping csv line {}", line_no));
    if (fields[0] == "uid") {
      uid_map_.insert_or_assign(fields[1], fields[2]);
      uid_values_.insert(fields[2]);
    } else if (fields[0] == "patient_id") {
      id_map_.insert_or_assign(fields[1], fields[2]);
      id_values_.insert(fields[2]);
    } else {
      throw Error(ErrorCode::SchemaError, fmt::format("mapping csv line {}: unknown kind '{}'", line_no, fields[0]));
    }
  }
}

}  // namespace dcmdeid
