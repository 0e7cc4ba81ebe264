#include "dcmdeid/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "dcmdeid/codec.hpp"
#include "dcmdeid/dicom_validate.hpp"
#include "dcmdeid/error.hpp"
#include "dcmdeid/identity_store.hpp"
#include "dcmdeid/phi_detect.hpp"
#include "dcmdeid/pixel_deid.hpp"
#include "dcmdeid/private_deid.hpp"
#include "dcmdeid/remote_detector.hpp"
#include "dcmdeid/rule_engine.hpp"

namespace fs = std::filesystem;

namespace dcmdeid {

namespace {

class NullDetector : public Detector {
 public:
  std::vector<EntitySpan> find_spans(std::string_view) const override { return {}; }
};

bool is_url(std::string_view s) { return s.starts_with("http://") || s.starts_with("https://"); }

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

bool file_has_magic(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::array<char, 132> head{};
  in.read(head.data(), head.size());
  if (in.gcount() != static_cast<std::streamsize>(head.size())) return false;
  return has_dicm_magic(std::span(reinterpret_cast<const std::uint8_t*>(head.data()), head.size()));
}

bool is_within(const fs::path& child, const fs::path& parent) {
  auto c = fs::weakly_canonical(child);
  auto p = fs::weakly_canonical(parent);
  auto [pe, ce] = std::mismatch(p.begin(), p.end(), c.begin(), c.end());
  return pe == p.end();
}

std::string read_text(const fs::path& p) {
  const Bytes b = read_bytes(p);
  return std::string(b.begin(), b.end());
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

struct Resources {
  RuleConfig rules;
  std::optional<PrivateDict> private_dict;
  std::optional<Whitelist> whitelist;
  std::unique_ptr<Detector> detector;
  NullDetector null_detector;
  std::unique_ptr<TextSource> ocr;
  RequiredAttributeProfiles profiles;
  IgnoreList ignore;
  std::unique_ptr<IdentityStore> identity;
};

Resources build_resources(const RunConfig& cfg) {
  Resources r;
  r.rules = cfg.rules_path ? load_rule_config_file(*cfg.rules_path) : bundled_rule_config(cfg.profile, false);
  if (!cfg.custom_rules) {
    r.rules.custom = {};
  } else if (cfg.custom_rules_path) {
    r.rules.custom = load_rule_config("@custom\n" + read_text(*cfg.custom_rules_path)).custom;
  } else if (r.rules.custom.overrides.empty()) {
    r.rules.custom = load_rule_config(bundled_custom_rules_text()).custom;
  }

  if (cfg.private_dict) {
    r.private_dict = cfg.private_dict_path ? PrivateDict::load(*cfg.private_dict_path) : PrivateDict::bundled();
  }
  if (cfg.whitelist) r.whitelist = cfg.whitelist_path ? Whitelist::load(*cfg.whitelist_path) : Whitelist::bundled();

  if (cfg.detector == "pattern") {
    r.detector = std::make_unique<PatternDetector>();
  } else if (cfg.detector == "none") {
    r.detector = nullptr;
  } else if (is_url(cfg.detector)) {
    RemoteDetectorOptions o;
    o.url = cfg.detector;
    o.min_confidence = cfg.detector_threshold;
    o.max_connections = std::max<std::ptrdiff_t>(1, cfg.workers);
    r.detector = std::make_unique<RemoteDetector>(o);
  } else {
    throw Error(ErrorCode::InvalidConfig, fmt::format("detector '{}': expected pattern, none or a URL", cfg.detector));
  }

  if (cfg.ocr == "off") {
    r.ocr = nullptr;
  } else if (is_url(cfg.ocr)) {
    RemoteOcrOptions o;
    o.url = cfg.ocr;
    o.max_connections = std::max<std::ptrdiff_t>(1, cfg.workers);
    r.ocr = std::make_unique<RemoteOCR>(o);
  } else if (cfg.ocr == "remote") {
    throw Error(ErrorCode::InvalidConfig, fmt::format("ocr remote: set {}", kOcrUrlEnv));
  } else {
    r.ocr = std::make_unique<DetectionsFile>(DetectionsFile::load(cfg.ocr, cfg.ocr_strict));
  }

  r.profiles = cfg.validation_profiles_path ? RequiredAttributeProfiles::load(*cfg.validation_profiles_path)
                                            : RequiredAttributeProfiles::bundled();
  r.ignore = cfg.ignore_list_path ? IgnoreList::load(*cfg.ignore_list_path) : IgnoreList::defaults();
  r.identity = std::make_unique<IdentityStore>(cfg.salt ? *cfg.salt : IdentityStore::random_salt(), cfg.date_offset_days);
  return r;
}

FileRecord process_file(const RunConfig& cfg, Resources& res, const std::string& rel) {
  FileRecord rec;
  rec.path = rel;
  try {
    auto t = std::chrono::steady_clock::now();
    DataSet ds = read_file(cfg.input_dir / fs::path(rel));
    rec.timings_ms["read"] = ms_since(t);

    t = std::chrono::steady_clock::now();
    DeidContext ctx;
    ctx.identity = res.identity.get();
    ctx.detector = res.detector.get();
    ctx.whitelist = res.whitelist ? &*res.whitelist : nullptr;
    ctx.private_dict = res.private_dict ? &*res.private_dict : nullptr;
    DeidResult meta = deidentify_dataset(std::move(ds), res.rules, ctx);
    rec.actions = meta.report.action_counts();
    rec.degraded = meta.report.degraded;
    rec.detector_calls = meta.report.detector_calls;
    for (const auto& row : meta.report.rows) {
      if (row.path.tag.is_private()) ++rec.private_rows;
    }
    ds = std::move(meta.dataset);
    rec.timings_ms["metadata"] = ms_since(t);

    if (res.ocr) {
      t = std::chrono::steady_clock::now();
      ImageDeidOptions opt;
      opt.min_ocr_confidence = cfg.ocr_min_confidence;
      opt.fail_safe_all = cfg.fail_safe_all;
      const Detector& det = res.detector ? *res.detector : static_cast<const Detector&>(res.null_detector);
      ImageDeidResult img = deidentify_image(std::move(ds), rel, *res.ocr, det, ctx.whitelist, opt);
      rec.pixel_boxes = img.report.rows.size();
      rec.pixel_redactions = img.report.redacted;
      if (!img.report.note.empty()) rec.notes.push_back(img.report.note);
      ds = std::move(img.dataset);
      rec.timings_ms["image"] = ms_since(t);
    }

    if (cfg.validate) {
      t = std::chrono::steady_clock::now();
      ValidationResult v = validate(ds, res.profiles);
      for (auto& w : v.warnings) rec.notes.push_back(std::move(w));
      RepairReport rep = repair(ds, v.issues, res.ignore);
      rec.repairs = rep.inserted.size();
      rec.ignored_issues = rep.ignored.size();
      rec.timings_ms["validate"] = ms_since(t);
    }

    t = std::chrono::steady_clock::now();
    const fs::path out = cfg.output_dir / fs::path(rel);
    fs::create_directories(out.parent_path());
    if (cfg.validate && cfg.external_validator) {
      write_file(out, ds);
      const auto ext = run_external_validator(*cfg.external_validator, out);
      const RepairReport rep = repair(ds, ext, res.ignore);
      rec.repairs += rep.inserted.size();
      if (!rep.inserted.empty()) write_file(out, ds);
    } else {
      write_file(out, ds);
    }
    rec.timings_ms["export"] = ms_since(t);
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

nlohmann::ordered_json action_json(const std::map<ActionKind, std::size_t>& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m) j[std::string(to_string(k))] = v;
  return j;
}

}  // namespace

fs::path RunConfig::mapping_csv_path() const {
  if (mapping_csv) return *mapping_csv;
  fs::path p = output_dir;
  if (!p.has_filename()) p = p.parent_path();
  return p.parent_path() / (p.filename().string() + ".mappings.csv");
}

fs::path RunConfig::report_file_path() const {
  if (report_path) return *report_path;
  fs::path p = output_dir;
  if (!p.has_filename()) p = p.parent_path();
  return p.parent_path() / (p.filename().string() + ".report.jsonl");
}

void apply_environment(RunConfig& config) {
  const char* det = std::getenv(kDetectorUrlEnv);
  if (det && *det && (config.detector == "remote" || is_url(config.detector))) config.detector = det;
  const char* ocr = std::getenv(kOcrUrlEnv);
  if (ocr && *ocr && (config.ocr == "remote" || is_url(config.ocr))) config.ocr = ocr;
}

DiscoveredFiles discover_files(const fs::path& input_dir, const std::optional<fs::path>& exclude) {
  DiscoveredFiles out;
  std::error_code ec;
  if (!fs::is_directory(input_dir, ec)) throw Error(ErrorCode::IoError, "not a directory: " + input_dir.string());
  fs::recursive_directory_iterator it(input_dir, fs::directory_options::skip_permission_denied, ec);
  if (ec) throw Error(ErrorCode::IoError, input_dir.string() + ": " + ec.message());
  for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) throw Error(ErrorCode::IoError, input_dir.string() + ": " + ec.message());
    const fs::path& p = it->path();
    if (it->is_directory()) {
      if (exclude && is_within(p, *exclude)) it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file()) continue;
    const std::string rel = fs::relative(p, input_dir).generic_string();
    const std::string ext = lower_ext(p);
    if (ext == ".dcm") {
      out.files.push_back(rel);
    } else if (ext.empty() && file_has_magic(p)) {
      out.files.push_back(rel);
    } else {
      out.skipped.emplace_back(rel, ext.empty() ? "no DICM magic" : "not a DICOM file extension");
    }
  }
  std::sort(out.files.begin(), out.files.end());
  std::sort(out.skipped.begin(), out.skipped.end());
  return out;
}

std::string RunReport::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["path"] = r.path;
    j["status"] = r.ok ? "ok" : "failed";
    if (!r.ok) j["error"] = r.error;
    j["actions"] = action_json(r.actions);
    j["degraded"] = r.degraded;
    j["private_rows"] = r.private_rows;
    j["detector_calls"] = r.detector_calls;
    j["pixel_boxes"] = r.pixel_boxes;
    j["pixel_redactions"] = r.pixel_redactions;
    j["repairs"] = r.repairs;
    j["ignored_issues"] = r.ignored_issues;
    if (!r.notes.empty()) j["notes"] = r.notes;
    j["timings"] = r.timings_ms;
    out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
  }
  for (const auto& [path, reason] : skipped) {
    nlohmann::ordered_json j;
    j["path"] = path;
    j["status"] = "skipped";
    j["reason"] = reason;
    out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
  }
  nlohmann::ordered_json s;
  s["summary"] = {{"files", records.size()},  {"succeeded", succeeded}, {"failed", failed},
                  {"skipped", skipped.size()}, {"pixel_redactions", pixel_redactions},
                  {"repairs", repairs},          {"degraded", degraded}, {"actions", action_json(actions)}};
  s["timings"] = {{"wall_seconds", wall_seconds}};
  out += s.dump() + "\n";
  return out;
}

std::string RunReport::summary() const {
  std::string out = fmt::format("files: {}  ok: {}  failed: {}  skipped: {}\n", records.size(), succeeded, failed,
                                skipped.size());
  out += fmt::format("pixel redactions: {}  repairs: {}  degraded elements: {}\n", pixel_redactions, repairs, degraded);
  for (const auto& [k, v] : actions) out += fmt::format("  {:<13} {}\n", to_string(k), v);
  for (const auto& r : records) {
    if (!r.ok) out += fmt::format("FAILED {}: {}\n", r.path, r.error);
  }
  out += fmt::format("wall clock: {:.2f} s\n", wall_seconds);
  return out;
}

RunReport run(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  std::error_code ec;
  if (!fs::is_directory(cfg.input_dir, ec)) {
    throw Error(ErrorCode::InvalidConfig, "input directory does not exist: " + cfg.input_dir.string());
  }
  if (cfg.output_dir.empty()) throw Error(ErrorCode::InvalidConfig, "no output directory");
  if (fs::weakly_canonical(cfg.output_dir) == fs::weakly_canonical(cfg.input_dir)) {
    throw Error(ErrorCode::InvalidConfig, "output directory equals input directory");
  }
  if (cfg.workers == 0) throw Error(ErrorCode::InvalidConfig, "workers must be at least 1");

  Resources res = build_resources(cfg);
  const DiscoveredFiles found = discover_files(cfg.input_dir, cfg.output_dir);
  fs::create_directories(cfg.output_dir);

  RunReport report;
  report.skipped = found.skipped;
  report.records.resize(found.files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < found.files.size(); i = next++) {
      report.records[i] = process_file(cfg, res, found.files[i]);
    }
  };
  const unsigned n = std::min<std::size_t>(cfg.workers, std::max<std::size_t>(1, found.files.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  }

  for (const auto& r : report.records) {
    if (r.ok) {
      ++report.succeeded;
    } else {
      ++report.failed;
    }
    report.pixel_redactions += r.pixel_redactions;
    report.repairs += r.repairs;
    report.degraded += r.degraded;
    for (const auto& [k, v] : r.actions) report.actions[k] += v;
  }

  res.identity->export_mappings(cfg.mapping_csv_path());
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string jsonl = report.to_jsonl();
  write_bytes(cfg.report_file_path(), std::span(reinterpret_cast<const std::uint8_t*>(jsonl.data()), jsonl.size()));
  return report;
}

}  // namespace dcmdeid
