#pragma once

// Independent reference implementations used as test oracles. None of these
// share code with the library.

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dcmdeid/phi_detect.hpp"

namespace oracle {

// ---- calendar ------------------------------------------------------------

struct Ymd {
  int y, m, d;
  bool operator==(const Ymd&) const = default;
};

bool is_leap(int y);
int days_in_month(int y, int m);

/// Walk the calendar one day at a time.
Ymd step_days(Ymd date, int days);

/// Days since 0001-01-01 by summing whole years, then day-of-year.
long ordinal(Ymd date);

std::string format_da(Ymd date);
Ymd parse_da(std::string_view s);

// ---- strings -------------------------------------------------------------

/// Delete every byte covered by any [start, end) span, via a byte mask.
std::string mask_remove(std::string_view text, const std::vector<std::pair<std::size_t, std::size_t>>& spans);

/// Edit distance by plain recursion with memoization on suffix pairs.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// Padding table, written out by hand.
char pad_for(std::string_view vr_code);

// ---- minimal DICOM reader ------------------------------------------------

struct FlatElement {
  int depth;
  std::uint32_t tag;
  std::string vr;  ///< "" for implicit, "SQ" when known to be a sequence
  std::vector<std::uint8_t> value;
  bool undefined;
};

/// Flatten a Part-10 file's body (after group 0002) into pre-order records.
/// Only enough to cross-check the codec: explicit/implicit little endian, SQ
/// with defined or undefined lengths. Item and delimiter tags are skipped.
std::vector<FlatElement> flatten_part10(const std::vector<std::uint8_t>& file);

/// Hand-rolled byte writer for building test files.
class Writer {
 public:
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void tag(std::uint16_t g, std::uint16_t e);
  void raw(std::string_view s);
  void raw(const std::vector<std::uint8_t>& b);
  /// Explicit-VR element with a defined length.
  void explicit_el(std::uint16_t g, std::uint16_t e, std::string_view vr, std::string_view value);
  /// Implicit-VR element.
  void implicit_el(std::uint16_t g, std::uint16_t e, std::string_view value);
  /// Preamble, magic and a minimal meta group for the given transfer syntax.
  void part10_header(std::string_view ts_uid);

  std::vector<std::uint8_t> bytes;
};

// ---- detector stubs ------------------------------------------------------

/// Flags every occurrence of each needle; counts calls.
class NeedleDetector : public dcmdeid::Detector {
 public:
  explicit NeedleDetector(std::vector<std::string> needles) : needles_(std::move(needles)) {}
  std::vector<dcmdeid::EntitySpan> find_spans(std::string_view text) const override;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::vector<std::string> needles_;
  mutable std::atomic<std::size_t> calls_{0};
};

class ThrowingDetector : public dcmdeid::Detector {
 public:
  std::vector<dcmdeid::EntitySpan> find_spans(std::string_view) const override;
};

}  // namespace oracle
