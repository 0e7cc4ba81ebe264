#pragma once

#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include "dcmdeid/phi_detect.hpp"

namespace dcmdeid {

/// Map an i2b2-style label ("PATIENT", "B-DOCTOR", "IDNUM", ...) to a category.
EntityCategory category_for_label(std::string_view label);

/// Convert a code-point offset (as produced by Python str indexing) into a
/// byte offset in UTF-8 `text`. Offsets past the end clamp to text.size().
std::size_t byte_offset_from_codepoints(std::string_view text, std::size_t codepoints);

struct RemoteDetectorOptions {
  /// Base URL, e.g. "http://127.0.0.1:8000".
  std::string url;
  /// Entities scoring below this are discarded.
  double min_confidence = 0.5;
  /// Upper bound on concurrent in-flight requests from one client.
  std::ptrdiff_t max_connections = 4;
  int timeout_seconds = 30;
};

/// Client for POST /detect:
///   request  {"text": "..."}
///   response {"entities": [{"start": int, "end": int, "label": str, "score": float}]}
/// Offsets in the response are code points. Any transport or protocol failure
/// throws Error{RemoteUnavailable}; callers decide the fail-safe policy.
class RemoteDetector : public Detector {
 public:
  explicit RemoteDetector(RemoteDetectorOptions options);
  ~RemoteDetector() override;

  std::vector<EntitySpan> find_spans(std::string_view text) const override;

  /// Parse a /detect response body for `text`. Exposed for tests.
  static std::vector<EntitySpan> parse_response(std::string_view body, std::string_view text, double min_confidence);

 private:
  RemoteDetectorOptions options_;
  mutable std::counting_semaphore<1024> slots_;
};

}  // namespace dcmdeid
