#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>

#include "dcmdeid/vr.hpp"

namespace dcmdeid {

inline constexpr int kDefaultDateOffsetDays = 120;

/// UID syntax: dot-separated decimal components, no leading zeros, at most 64 chars.
bool is_valid_uid(std::string_view uid) noexcept;

/// Shift the date part of a DA or DT value by `offset_days`. Truncated values
/// ("2023", "202304") are expanded to the first day/month, shifted and cut
/// back to their original precision. DT keeps its time and zone suffix; TM
/// values are validated and returned unchanged. Throws UnparseableDate.
std::string shift_date(std::string_view value, int offset_days, VR vr = VR::DA);

/// Pseudonym mappings for UIDs and patient IDs. Replacements are derived
/// from HMAC-SHA256(salt, original), so any number of workers sharing a store
/// (or using separate stores with the same salt) produce the same mapping
/// regardless of call order. The maps are a cache over that derivation.
class IdentityStore {
 public:
  explicit IdentityStore(std::string salt, int date_offset_days = kDefaultDateOffsetDays);

  /// Fresh 128-bit salt from std::random_device, hex encoded.
  static std::string random_salt();

  IdentityStore(const IdentityStore&) = delete;
  IdentityStore& operator=(const IdentityStore&) = delete;

  /// "2.25.<decimal of 128-bit keyed hash>". Values that are already
  /// replacements map to themselves. Throws InvalidUID.
  std::string remap_uid(std::string_view uid);

  /// "PSN-" + 12 hex digits of the keyed hash. Throws EmptyID.
  std::string remap_patient_id(std::string_view id);

  int date_offset_days() const { return date_offset_days_; }
  const std::string& salt() const { return salt_; }

  std::map<std::string, std::string> uid_map() const;
  std::map<std::string, std::string> id_map() const;
  std::size_t size() const;

  /// CSV with header "kind,original,replacement", rows sorted by (kind, original).
  std::string mappings_csv() const;
  void export_mappings(const std::filesystem::path& path) const;

  /// Load rows written by export_mappings into this store.
  void import_mappings(const std::filesystem::path& path);
  void import_mappings_csv(std::string_view csv);

 private:
  std::string derive(std::string_view domain, std::string_view original) const;

  std::string salt_;
  int date_offset_days_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::string, std::less<>> uid_map_;
  std::set<std::string, std::less<>> uid_values_;
  std::map<std::string, std::string, std::less<>> id_map_;
  std::set<std::string, std::less<>> id_values_;
};

}  // namespace dcmdeid
