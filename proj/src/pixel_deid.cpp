#include "dcmdeid/pixel_deid.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <zlib.h>

#include "dcmdeid/codec.hpp"
#include "dcmdeid/error.hpp"
#include "dcmdeid/rule_engine.hpp"

namespace dcmdeid {

namespace {

struct SlotGuard {
  explicit SlotGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
  std::counting_semaphore<1024>& sem;
};

std::uint16_t require_u16(const DataSet& ds, Tag tag, std::string_view name) {
  const DataElement* e = ds.find(tag);
  auto v = e ? e->as_u16() : std::nullopt;
  if (!v) throw Error(ErrorCode::InconsistentDimensions, fmt::format("missing or malformed {}", name));
  return *v;
}

std::size_t number_of_frames(const DataSet& ds) {
  const DataElement* e = ds.find(tags::kNumberOfFrames);
  if (!e) return 1;
  const std::string s = e->string();
  if (s.empty()) return 1;
  std::size_t pos = 0;
  long long n = 0;
  try {
    n = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  while (pos < s.size() && s[pos] == ' ') ++pos;
  if (pos != s.size() || n < 1) throw Error(ErrorCode::InconsistentDimensions, fmt::format("NumberOfFrames '{}'", s));
  return static_cast<std::size_t>(n);
}

TextBox box_from_json(const nlohmann::json& b) {
  if (!b.is_object()) throw Error(ErrorCode::InvalidBox, "box is not an object");
  for (const char* k : {"x0", "y0", "x1", "y1"}) {
    if (!b.contains(k) || !b[k].is_number()) throw Error(ErrorCode::InvalidBox, fmt::format("box field '{}' missing", k));
  }
  TextBox box;
  box.x0 = b["x0"].get<int>();
  box.y0 = b["y0"].get<int>();
  box.x1 = b["x1"].get<int>();
  box.y1 = b["y1"].get<int>();
  box.text = b.value("text", std::string{});
  box.confidence = b.value("score", 1.0);
  return box;
}

nlohmann::ordered_json box_to_json(const TextBox& b) {
  return {{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}, {"text", b.text}, {"score", b.confidence}};
}

void put_u32be(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void png_chunk(Bytes& out, const char* type, const Bytes& data) {
  put_u32be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_u32be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::uint16_t Frame::at(std::size_t x, std::size_t y, std::size_t sample) const {
  const std::size_t i = ((y * cols + x) * samples_per_pixel + sample) * bytes_per_sample();
  if (bits_allocated == 8) return pixels[i];
  return static_cast<std::uint16_t>(pixels[i] | (pixels[i + 1] << 8));
}

void Frame::set(std::size_t x, std::size_t y, std::size_t sample, std::uint16_t value) {
  const std::size_t i = ((y * cols + x) * samples_per_pixel + sample) * bytes_per_sample();
  if (bits_allocated == 8) {
    pixels[i] = static_cast<std::uint8_t>(value);
  } else {
    pixels[i] = static_cast<std::uint8_t>(value & 0xFF);
    pixels[i + 1] = static_cast<std::uint8_t>(value >> 8);
  }
}

void validate_box(const TextBox& b, const Frame& f) {
  if (b.x0 < 0 || b.y0 < 0 || b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > f.cols || b.y1 > f.rows) {
    throw Error(ErrorCode::InvalidBox,
                fmt::format("({},{})-({},{}) outside {}x{} frame", b.x0, b.y0, b.x1, b.y1, f.cols, f.rows));
  }
}

std::vector<Frame> extract_frames(const DataSet& ds) {
  const std::string ts = ds.file_meta.get_string(tags::kTransferSyntaxUID);
  if (!ts.empty() && ts != kImplicitVRLittleEndianUID && ts != kExplicitVRLittleEndianUID) {
    throw Error(ErrorCode::CompressedPixelData, ts);
  }
  const DataElement* pd = ds.find(tags::kPixelData);
  if (!pd) throw Error(ErrorCode::InconsistentDimensions, "no PixelData");
  if (pd->undefined_length() || !pd->items().empty()) throw Error(ErrorCode::CompressedPixelData, "encapsulated PixelData");

  Frame proto;
  proto.rows = require_u16(ds, tags::kRows, "Rows");
  proto.cols = require_u16(ds, tags::kColumns, "Columns");
  proto.bits_allocated = require_u16(ds, tags::kBitsAllocated, "BitsAllocated");
  proto.samples_per_pixel = ds.contains(tags::kSamplesPerPixel) ? require_u16(ds, tags::kSamplesPerPixel, "SamplesPerPixel") : 1;
  if (proto.rows == 0 || proto.cols == 0) throw Error(ErrorCode::InconsistentDimensions, "zero Rows or Columns");
  if (proto.bits_allocated != 8 && proto.bits_allocated != 16) {
    throw Error(ErrorCode::InconsistentDimensions, fmt::format("BitsAllocated {}", proto.bits_allocated));
  }
  if (proto.samples_per_pixel != 1 && proto.samples_per_pixel != 3) {
    throw Error(ErrorCode::InconsistentDimensions, fmt::format("SamplesPerPixel {}", proto.samples_per_pixel));
  }
  if (proto.samples_per_pixel == 3) {
    const DataElement* pc = ds.find(Tag{0x0028, 0x0006});
    if (pc && pc->as_u16().value_or(0) != 0) throw Error(ErrorCode::InconsistentDimensions, "planar configuration 1");
  }
  const std::size_t n = number_of_frames(ds);
  const std::size_t frame_bytes = proto.byte_size();
  const Bytes& raw = pd->raw();
  const std::size_t need = frame_bytes * n;
  if (raw.size() != need && raw.size() != need + 1) {
    throw Error(ErrorCode::InconsistentDimensions,
                fmt::format("PixelData has {} bytes, expected {} ({} frames)", raw.size(), need, n));
  }
  std::vector<Frame> frames;
  frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Frame f = proto;
    f.index = i;
    f.pixels.assign(raw.begin() + static_cast<std::ptrdiff_t>(i * frame_bytes),
                    raw.begin() + static_cast<std::ptrdiff_t>((i + 1) * frame_bytes));
    frames.push_back(std::move(f));
  }
  return frames;
}

void store_frames(DataSet& ds, const std::vector<Frame>& frames) {
  DataElement* pd = ds.find(tags::kPixelData);
  if (!pd) throw Error(ErrorCode::InconsistentDimensions, "no PixelData");
  Bytes raw = pd->raw();
  std::size_t at = 0;
  for (const auto& f : frames) {
    if (at + f.pixels.size() > raw.size()) throw Error(ErrorCode::InconsistentDimensions, "frames exceed PixelData");
    std::copy(f.pixels.begin(), f.pixels.end(), raw.begin() + static_cast<std::ptrdiff_t>(at));
    at += f.pixels.size();
  }
  pd->set_raw(std::move(raw));
}

DetectionsFile DetectionsFile::parse(std::string_view json_text, bool strict) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("detections file: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "detections file: top level must be an object");
  DetectionsFile out;
  out.strict_ = strict;
  for (const auto& [file, frames] : j.items()) {
    if (!frames.is_object()) throw Error(ErrorCode::SchemaError, fmt::format("detections file: entry '{}'", file));
    auto& per_file = out.entries_[file];
    for (const auto& [idx, boxes] : frames.items()) {
      std::size_t pos = 0;
      unsigned long frame = 0;
      try {
        frame = std::stoul(idx, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != idx.size() || !boxes.is_array()) {
        throw Error(ErrorCode::SchemaError, fmt::format("detections file: '{}' frame '{}'", file, idx));
      }
      auto& list = per_file[frame];
      for (const auto& b : boxes) list.push_back(box_from_json(b));
    }
  }
  return out;
}

DetectionsFile DetectionsFile::load(const std::filesystem::path& path, bool strict) {
  const Bytes b = read_bytes(path);
  return parse(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()), strict);
}

void DetectionsFile::add(const std::string& file, std::size_t frame, std::vector<TextBox> boxes) {
  auto& list = entries_[file][frame];
  list.insert(list.end(), std::make_move_iterator(boxes.begin()), std::make_move_iterator(boxes.end()));
}

std::string DetectionsFile::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [file, frames] : entries_) {
    nlohmann::ordered_json jf = nlohmann::ordered_json::object();
    for (const auto& [idx, boxes] : frames) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& b : boxes) arr.push_back(box_to_json(b));
      jf[std::to_string(idx)] = std::move(arr);
    }
    j[file] = std::move(jf);
  }
  return j.dump(1) + "\n";
}

std::vector<TextBox> DetectionsFile::detect_text(const FrameRef& ref, const Frame& frame) const {
  auto fit = entries_.find(ref.file);
  if (fit == entries_.end() || !fit->second.count(ref.frame)) {
    if (strict_) throw Error(ErrorCode::MissingDetections, fmt::format("{} frame {}", ref.file, ref.frame));
    return {};
  }
  const auto& boxes = fit->second.at(ref.frame);
  for (const auto& b : boxes) validate_box(b, frame);
  return boxes;
}

RemoteOCR::RemoteOCR(RemoteOcrOptions options)
    : options_(std::move(options)), slots_(std::clamp<std::ptrdiff_t>(options_.max_connections, 1, 1024)) {}

RemoteOCR::~RemoteOCR() = default;

std::vector<TextBox> RemoteOCR::parse_response(std::string_view body, const Frame& frame) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::RemoteUnavailable, std::string("malformed /ocr response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("boxes") || !j["boxes"].is_array()) {
    throw Error(ErrorCode::RemoteUnavailable, "malformed /ocr response: missing boxes array");
  }
  std::vector<TextBox> out;
  for (const auto& b : j["boxes"]) {
    TextBox box = box_from_json(b);
    validate_box(box, frame);
    out.push_back(std::move(box));
  }
  return out;
}

std::vector<TextBox> RemoteOCR::detect_text(const FrameRef& ref, const Frame& frame) const {
  const Bytes png = encode_png(frame);
  const std::string body = nlohmann::json{{"image", base64_encode(png)},
                                          {"frame_id", fmt::format("{}#{}", ref.file, ref.frame)}}
                               .dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  SlotGuard guard(slots_);
  httplib::Client client(options_.url);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  client.set_read_timeout(options_.timeout_seconds, 0);
  auto res = client.Post("/ocr", body, "application/json");
  if (!res) throw Error(ErrorCode::RemoteUnavailable, options_.url + "/ocr: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw Error(ErrorCode::RemoteUnavailable, options_.url + "/ocr: HTTP " + std::to_string(res->status));
  }
  return parse_response(res->body, frame);
}

Bytes encode_png(const Frame& f) {
  const std::size_t bps = f.bytes_per_sample();
  const std::size_t row_bytes = std::size_t{f.cols} * f.samples_per_pixel * bps;
  Bytes scan;
  scan.reserve((row_bytes + 1) * f.rows);
  for (std::size_t y = 0; y < f.rows; ++y) {
    scan.push_back(0);
    const std::uint8_t* row = f.pixels.data() + y * row_bytes;
    if (bps == 1) {
      scan.insert(scan.end(), row, row + row_bytes);
    } else {
      for (std::size_t i = 0; i < row_bytes; i += 2) {
        scan.push_back(row[i + 1]);
        scan.push_back(row[i]);
      }
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(scan.size()));
  Bytes z(zlen);
  if (compress2(z.data(), &zlen, scan.data(), static_cast<uLong>(scan.size()), Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw Error(ErrorCode::IoError, "png deflate failed");
  }
  z.resize(zlen);

  Bytes out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  Bytes ihdr;
  put_u32be(ihdr, f.cols);
  put_u32be(ihdr, f.rows);
  ihdr.push_back(static_cast<std::uint8_t>(f.bits_allocated));
  ihdr.push_back(f.samples_per_pixel == 3 ? 2 : 0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", z);
  png_chunk(out, "IEND", {});
  return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Frame redact_boxes(Frame frame, const std::vector<TextBox>& boxes) {
  if (boxes.empty()) return frame;
  for (const auto& b : boxes) validate_box(b, frame);
  const int cols = frame.cols;
  const int rows = frame.rows;
  std::vector<std::uint8_t> covered(static_cast<std::size_t>(rows) * cols, 0);
  for (const auto& b : boxes) {
    for (int y = b.y0; y < b.y1; ++y) {
      std::fill(covered.begin() + y * cols + b.x0, covered.begin() + y * cols + b.x1, 1);
    }
  }
  auto outside = [&](int x, int y) { return covered[static_cast<std::size_t>(y) * cols + x] == 0; };

  // Sample every fill value before writing anything.
  std::vector<std::optional<std::pair<int, int>>> sources;
  sources.reserve(boxes.size());
  for (const auto& b : boxes) {
    std::optional<std::pair<int, int>> src;
    for (int x = b.x0 - 1; !src && x >= 0; --x) {
      if (outside(x, b.y0)) src = {x, b.y0};
    }
    for (int x = b.x1; !src && x < cols; ++x) {
      if (outside(x, b.y0)) src = {x, b.y0};
    }
    for (int y = b.y0 - 1; !src && y >= 0; --y) {
      if (outside(b.x0, y)) src = {b.x0, y};
    }
    for (int y = b.y1; !src && y < rows; ++y) {
      if (outside(b.x0, y)) src = {b.x0, y};
    }
    sources.push_back(src);
  }
  const Frame original = frame;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    for (std::size_t s = 0; s < frame.samples_per_pixel; ++s) {
      const std::uint16_t v = sources[i] ? original.at(sources[i]->first, sources[i]->second, s) : 0;
      for (int y = b.y0; y < b.y1; ++y) {
        for (int x = b.x0; x < b.x1; ++x) frame.set(x, y, s, v);
      }
    }
  }
  return frame;
}

ImageDeidResult deidentify_image(DataSet ds, const std::string& file, const TextSource& source,
                                 const Detector& detector, const Whitelist* whitelist,
                                 const ImageDeidOptions& options) {
  ImageReport report;
  if (!ds.contains(tags::kPixelData)) {
    report.note = "no pixel data";
    return {std::move(ds), std::move(report)};
  }
  std::vector<Frame> frames = extract_frames(ds);
  report.frames = frames.size();
  bool changed = false;
  for (auto& frame : frames) {
    const auto boxes = source.detect_text(FrameRef{file, frame.index}, frame);
    std::vector<TextBox> to_redact;
    for (const auto& box : boxes) {
      ImageReportRow row;
      row.frame = frame.index;
      row.box = box;
      row.text_hash = value_hash(std::span(reinterpret_cast<const std::uint8_t*>(box.text.data()), box.text.size()));
      if (box.confidence < options.min_ocr_confidence) {
        row.reason = "below ocr confidence";
      } else {
        try {
          auto spans = detect_entities(detector, box.text);
          if (whitelist) spans = filter_whitelist(std::move(spans), *whitelist, box.text);
          row.redacted = !spans.empty();
          row.reason = row.redacted ? "phi" : "no phi";
        } catch (const Error& e) {
          if (!options.fail_safe_all) throw;
          row.redacted = true;
          row.reason = fmt::format("fail-safe: {}", e.what());
        }
      }
      if (row.redacted) to_redact.push_back(box);
      report.rows.push_back(std::move(row));
    }
    if (!to_redact.empty()) {
      frame = redact_boxes(std::move(frame), to_redact);
      report.redacted += to_redact.size();
      changed = true;
    }
  }
  if (changed) store_frames(ds, frames);
  return {std::move(ds), std::move(report)};
}

}  // namespace dcmdeid
