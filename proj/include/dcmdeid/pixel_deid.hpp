#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcmdeid/dataset.hpp"
#include "dcmdeid/phi_detect.hpp"

namespace dcmdeid {

/// One decoded frame. Samples are interleaved (PlanarConfiguration 0).
struct Frame {
  std::size_t index = 0;
  std::uint16_t rows = 0;
  std::uint16_t cols = 0;
  std::uint16_t bits_allocated = 8;
  std::uint16_t samples_per_pixel = 1;
  /// Little-endian sample bytes, row-major.
  Bytes pixels;

  std::size_t bytes_per_sample() const { return bits_allocated / 8u; }
  std::size_t byte_size() const { return std::size_t{rows} * cols * samples_per_pixel * bytes_per_sample(); }

  std::uint16_t at(std::size_t x, std::size_t y, std::size_t sample = 0) const;
  void set(std::size_t x, std::size_t y, std::size_t sample, std::uint16_t value);
};

/// Axis-aligned text region, half-open: [x0, x1) x [y0, y1).
struct TextBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  std::string text;
  double confidence = 1.0;

  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  std::size_t area() const { return static_cast<std::size_t>(x1 - x0) * static_cast<std::size_t>(y1 - y0); }
  bool operator==(const TextBox&) const = default;
};

/// Throws InvalidBox unless 0 <= x0 < x1 <= cols and 0 <= y0 < y1 <= rows.
void validate_box(const TextBox& box, const Frame& frame);

/// Decode PixelData per Rows/Columns/BitsAllocated/SamplesPerPixel/NumberOfFrames.
/// Throws CompressedPixelData, InconsistentDimensions.
std::vector<Frame> extract_frames(const DataSet& ds);

/// Write frames back into PixelData, keeping the element's VR and any
/// trailing padding byte.
void store_frames(DataSet& ds, const std::vector<Frame>& frames);

/// Where an OCR source should look: the file's path relative to the input
/// root and the frame index.
struct FrameRef {
  std::string file;
  std::size_t frame = 0;
};

class TextSource {
 public:
  virtual ~TextSource() = default;
  virtual std::vector<TextBox> detect_text(const FrameRef& ref, const Frame& frame) const = 0;
};

/// Pre-computed detections, JSON:
///   {"<relative path>": {"<frame index>": [{"x0":..,"y0":..,"x1":..,"y1":..,"text":"..","score":..}]}}
class DetectionsFile : public TextSource {
 public:
  /// strict: a frame with no entry throws MissingDetections instead of yielding no boxes.
  static DetectionsFile parse(std::string_view json_text, bool strict = false);
  static DetectionsFile load(const std::filesystem::path& path, bool strict = false);

  void add(const std::string& file, std::size_t frame, std::vector<TextBox> boxes);
  std::string to_json() const;

  std::vector<TextBox> detect_text(const FrameRef& ref, const Frame& frame) const override;

  bool strict() const { return strict_; }
  std::size_t file_count() const { return entries_.size(); }

 private:
  std::map<std::string, std::map<std::size_t, std::vector<TextBox>>> entries_;
  bool strict_ = false;
};

struct RemoteOcrOptions {
  std::string url;
  std::ptrdiff_t max_connections = 4;
  int timeout_seconds = 60;
};

/// Client for POST /ocr:
///   request  {"image": "<base64 PNG>", "frame_id": "<file>#<frame>"}
///   response {"boxes": [{"x0":..,"y0":..,"x1":..,"y1":..,"text":"..","score":..}]}
class RemoteOCR : public TextSource {
 public:
  explicit RemoteOCR(RemoteOcrOptions options);
  ~RemoteOCR() override;

  std::vector<TextBox> detect_text(const FrameRef& ref, const Frame& frame) const override;

  static std::vector<TextBox> parse_response(std::string_view body, const Frame& frame);

 private:
  RemoteOcrOptions options_;
  mutable std::counting_semaphore<1024> slots_;
};

/// Grayscale (8- or 16-bit) or RGB8 PNG of a frame.
Bytes encode_png(const Frame& frame);
std::string base64_encode(std::span<const std::uint8_t> bytes);

/// Fill every box with one value per sample: the nearest pixel outside all
/// boxes found scanning left from (x0-1, y0), then right from (x1, y0), then
/// up from (x0, y0-1), then down from (x0, y1); 0 when none exists. Pixels
/// outside the boxes are never written.
Frame redact_boxes(Frame frame, const std::vector<TextBox>& boxes);

struct ImageDeidOptions {
  /// Boxes below this OCR confidence are ignored.
  double min_ocr_confidence = 0.3;
  /// Redact every detected box when the PHI check itself fails.
  bool fail_safe_all = false;
};

struct ImageReportRow {
  std::size_t frame = 0;
  TextBox box;
  std::string text_hash;
  bool redacted = false;
  std::string reason;
};

struct ImageReport {
  std::vector<ImageReportRow> rows;
  std::size_t frames = 0;
  std::size_t redacted = 0;
  std::string note;
};

struct ImageDeidResult {
  DataSet dataset;
  ImageReport report;
};

/// OCR each frame, check each box's text for PHI (whitelist may be null),
/// and redact the boxes that carry PHI. Datasets without PixelData are
/// returned unchanged with a note.
ImageDeidResult deidentify_image(DataSet ds, const std::string& file, const TextSource& source,
                                 const Detector& detector, const Whitelist* whitelist,
                                 const ImageDeidOptions& options = {});

}  // namespace dcmdeid
