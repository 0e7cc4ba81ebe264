// Acceptance checks. One PASS/FAIL line per check; exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <fmt/format.h>

#include "dcmdeid/codec.hpp"
#include "dcmdeid/dicom_validate.hpp"
#include "dcmdeid/dictionary.hpp"
#include "dcmdeid/error.hpp"
#include "dcmdeid/eval_harness.hpp"
#include "dcmdeid/identity_store.hpp"
#include "dcmdeid/pipeline.hpp"
#include "dcmdeid/pixel_deid.hpp"
#include "dcmdeid/private_deid.hpp"
#include "dcmdeid/rule_engine.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace dcmdeid;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const char* id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void check(const char* id, const char* name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    auto [ok, detail] = body();
    report(id, name, ok, detail);
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = oracle::read_text(e.path());
  }
  return out;
}

struct Written {
  fs::path root;
  AnswerKey key;
  fs::path dicom() const { return root / "dicom"; }
  fs::path detections() const { return root / "detections.json"; }
};

Written make_corpus(const fs::path& root, std::size_t n, std::uint64_t seed, double pixel_rate = 0.2) {
  CorpusSpec spec;
  spec.n_files = n;
  spec.seed = seed;
  spec.pixel_text_rate = pixel_rate;
  auto corpus = generate_corpus(spec);
  write_corpus(corpus, root);
  return {root, corpus.key};
}

RunConfig base_config(const Written& c, const fs::path& out) {
  RunConfig cfg;
  cfg.input_dir = c.dicom();
  cfg.output_dir = out;
  cfg.salt = "acceptance";
  cfg.ocr = c.detections().string();
  return cfg;
}

Tag tag_of(std::string_view keyword) { return dictionary_lookup(keyword)->tag; }

}  // namespace

int main() {
  oracle::TempDir tmp;
  const Written big = make_corpus(tmp / "c1000", 1000, 101);
  const Written c500 = make_corpus(tmp / "c500", 500, 202);

  check("C1", "codec round-trip", [&] {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(big.dicom())) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::size_t identical = 0;
    const auto t0 = Clock::now();
    for (const auto& p : files) {
      const Bytes in = read_bytes(p);
      if (serialize_file(parse_file(in)) == in) ++identical;
    }
    const double s = seconds_since(t0);
    return std::pair{files.size() == 1000 && identical == files.size() && s < 5.0,
                     fmt::format("{}/{} byte-identical in {:.2f} s (limit 5 s)", identical, files.size(), s)};
  });

  check("C2", "end-to-end accuracy", [&] {
    auto cfg = base_config(c500, tmp / "c2_out");
    run(cfg);
    auto r = score_run(c500.key, cfg.output_dir, c500.dicom());
    return std::pair{r.accuracy() >= 99.0,
                     fmt::format("{:.3f}% ({} / {}) on 500 files (floor 99.0%)", r.accuracy(), r.matched, r.total)};
  });

  check("C3", "ablation monotone", [&] {
    struct Step {
      const char* name;
      bool custom, priv, validate;
    };
    const Step steps[] = {{"tcia", false, false, false},
                          {"+custom", true, false, false},
                          {"+private", true, true, false},
                          {"+validator", true, true, true}};
    std::vector<double> acc;
    std::string detail;
    for (const auto& s : steps) {
      auto cfg = base_config(c500, tmp / fmt::format("c3_{}", acc.size()));
      cfg.custom_rules = s.custom;
      cfg.private_dict = s.priv;
      cfg.validate = s.validate;
      run(cfg);
      acc.push_back(score_run(c500.key, cfg.output_dir, c500.dicom()).accuracy());
      detail += fmt::format("{}{} {:.3f}%", detail.empty() ? "" : " < ", s.name, acc.back());
    }
    bool ok = true;
    for (std::size_t i = 1; i < acc.size(); ++i) ok = ok && acc[i - 1] < acc[i];
    return std::pair{ok, detail};
  });

  check("C4", "date shifting", [&] {
    std::mt19937_64 rng(404);
    std::size_t oracle_miss = 0;
    std::size_t interval_miss = 0;
    oracle::Ymd prev{2000, 1, 1};
    for (int i = 0; i < 10000; ++i) {
      oracle::Ymd d{std::uniform_int_distribution<int>(1901, 2099)(rng), std::uniform_int_distribution<int>(1, 12)(rng), 1};
      d.d = std::uniform_int_distribution<int>(1, oracle::days_in_month(d.y, d.m))(rng);
      const int off = std::uniform_int_distribution<int>(-365, 365)(rng);
      const std::string shifted = shift_date(oracle::format_da(d), off);
      const auto got = oracle::parse_da(shifted);
      if (!(got == oracle::step_days(d, off)) || oracle::ordinal(got) - oracle::ordinal(d) != off) ++oracle_miss;
      // same offset applied to a second date keeps the gap
      const std::string other = shift_date(oracle::format_da(prev), off);
      if (oracle::ordinal(oracle::parse_da(shifted)) - oracle::ordinal(oracle::parse_da(other)) !=
          oracle::ordinal(d) - oracle::ordinal(prev)) {
        ++interval_miss;
      }
      prev = d;
    }
    const int def_store = IdentityStore("x").date_offset_days();
    const int def_cfg = RunConfig{}.date_offset_days;
    return std::pair{oracle_miss == 0 && interval_miss == 0 && def_store == 120 && def_cfg == 120,
                     fmt::format("10000 values: {} oracle mismatches, {} interval mismatches; default offset {}/{}",
                                 oracle_miss, interval_miss, def_store, def_cfg)};
  });

  check("C5", "UID consistency", [&] {
    const Written c = make_corpus(tmp / "c5", 200, 505, 0.0);
    auto cfg = base_config(c, tmp / "c5_out");
    run(cfg);
    std::map<std::string, std::set<std::string>> fwd;
    std::map<std::string, std::set<std::string>> rev;
    const auto rules = bundled_rule_config("tcia", true);
    std::size_t kept = 0;
    std::size_t links = 0;
    std::size_t broken_links = 0;
    std::map<std::string, std::string> sop_out;  // source SOPInstanceUID -> output
    std::vector<std::pair<std::string, std::string>> refs;  // (source ref, output ref)
    for (const auto& fk : c.key.files) {
      const DataSet src = read_file(c.dicom() / fk.path);
      const DataSet dst = read_file(cfg.output_dir / fk.path);
      std::map<TagPath, std::string> out_uids;
      walk(dst, [&](const TagPath& p, const DataElement& e) {
        if (e.vr() == VR::UI) out_uids[p] = e.string();
      });
      walk(src, [&](const TagPath& p, const DataElement& e) {
        if (e.vr() != VR::UI || !out_uids.count(p)) return;
        if (resolve_action(rules.table, rules.custom, p.tag, VR::UI) != ActionKind::RemapUID) {
          kept += out_uids[p] == e.string();
          return;
        }
        const auto& o = out_uids[p];
        fwd[e.string()].insert(o);
        rev[o].insert(e.string());
        if (p.tag == Tag{0x0008, 0x1155}) refs.emplace_back(e.string(), o);
        if (p.tag == tags::kSOPInstanceUID && !p.is_nested()) sop_out[e.string()] = o;
      });
    }
    for (const auto& [src_ref, out_ref] : refs) {
      if (!sop_out.count(src_ref)) continue;
      ++links;
      if (sop_out[src_ref] != out_ref) ++broken_links;
    }
    std::size_t split = 0;
    std::size_t merged = 0;
    for (const auto& [k, v] : fwd) split += v.size() != 1;
    for (const auto& [k, v] : rev) merged += v.size() != 1;

    IdentityStore ids("collision-check");
    const std::regex pattern(R"(^2\.25\.(0|[1-9][0-9]*)$)");
    std::mt19937_64 rng(55);
    std::unordered_set<std::string> seen;
    std::size_t collisions = 0;
    std::size_t bad_form = 0;
    for (int i = 0; i < 100000; ++i) {
      std::string uid = fmt::format("1.2.{}.{}.{}", 1 + rng() % 999999, rng() % 1000000000, i);
      const auto out = ids.remap_uid(uid);
      if (!seen.insert(out).second) ++collisions;
      if (out.size() > 64 || !std::regex_match(out, pattern) || !is_valid_uid(out)) ++bad_form;
    }
    for (const auto& [k, v] : rev) {
      if (k.size() > 64 || !std::regex_match(k, pattern)) ++bad_form;
    }
    return std::pair{split == 0 && merged == 0 && links > 0 && broken_links == 0 && collisions == 0 && bad_form == 0,
                     fmt::format("{} classes, {} split, {} merged, {} configured keeps; {} cross-file links, {} broken; "
                                 "1e5 random: {} collisions, {} malformed or >64 chars",
                                 fwd.size(), split, merged, kept, links, broken_links, collisions, bad_form)};
  });

  check("C6", "private key construction", [] {
    const auto s = build_private_key(Tag(0x0009, 0x102b), "gems_petd_01", VR::SL).render();
    return std::pair{s == "(0009,gems_petd_01,2b)_SL", "\"" + s + "\""};
  });

  check("C7", "whitelist regression", [&] {
    const fs::path in = tmp / "c7_in";
    fs::create_directories(in);
    DataSet ds;
    ds.make_file_meta("1.2.840.10008.5.1.4.1.1.4", "1.2.826.0.1.7");
    ds.set(DataElement::from_string(tags::kSOPClassUID, VR::UI, "1.2.840.10008.5.1.4.1.1.4"));
    ds.set(DataElement::from_string(tags::kSOPInstanceUID, VR::UI, "1.2.826.0.1.7"));
    ds.set(DataElement::from_string(tag_of("SeriesDescription"), VR::LO, "MR BREAST"));
    write_file(in / "one.dcm", ds);
    std::string got[2];
    for (int w = 0; w < 2; ++w) {
      RunConfig cfg;
      cfg.input_dir = in;
      cfg.output_dir = tmp / fmt::format("c7_out{}", w);
      cfg.salt = "s";
      cfg.whitelist = w == 0;
      run(cfg);
      const auto out = read_file(cfg.output_dir / "one.dcm");
      const auto* e = out.find(tag_of("SeriesDescription"));
      got[w] = e ? e->string() : "<absent>";
      while (!got[w].empty() && got[w].back() == ' ') got[w].pop_back();
    }
    return std::pair{got[0] == "MR BREAST" && got[1].empty(),
                     fmt::format("whitelist on: \"{}\", off: \"{}\"", got[0], got[1])};
  });

  check("C8", "validator repair", [] {
    constexpr std::string_view kCT = "1.2.840.10008.5.1.4.1.1.2";
    const auto& profiles = RequiredAttributeProfiles::bundled();
    DataSet ds;
    ds.make_file_meta(kCT, "1.2.3");
    for (Tag t : *profiles.required_for(kCT)) {
      const auto* entry = dictionary_lookup(t);
      ds.set(DataElement::from_string(t, entry->vr, entry->vr == VR::US ? "" : "1"));
    }
    ds.set(DataElement::from_string(tags::kSOPClassUID, VR::UI, kCT));
    const auto ignore = IgnoreList::defaults();
    std::size_t ignored_stripped = 0;
    for (const char* k : {"PatientBirthDate", "ReferringPhysicianName", "StudyID", "Manufacturer",
                          "ClinicalTrialSubjectID"}) {
      ds.remove(tag_of(k));
      ignored_stripped += ignore.contains(k);
    }
    const auto first = validate(ds, profiles);
    const auto before = ds.size();
    const auto rep = repair(ds, first.issues, ignore);
    std::size_t zero_len = 0;
    for (Tag t : rep.inserted) zero_len += ds.find(t) && ds.find(t)->raw().empty();
    const auto again = validate(ds, profiles);
    bool only_ignored = again.issues.size() == 2;
    for (const auto& i : again.issues) only_ignored = only_ignored && ignore.contains(i.keyword);
    const bool ok = first.issues.size() == 5 && ignored_stripped == 2 && ignore.contains("Manufacturer") &&
                    ds.size() - before == 3 && zero_len == 3 && only_ignored;
    return std::pair{ok, fmt::format("{} issues, {} inserted ({} zero-length), re-validation {} issues{}",
                                     first.issues.size(), ds.size() - before, zero_len, again.issues.size(),
                                     only_ignored ? " all ignored" : "")};
  });

  check("C9", "pixel redaction", [&] {
    const Written c = make_corpus(tmp / "c9", 40, 909, 1.0);
    auto cfg = base_config(c, tmp / "c9_out");
    cfg.ocr_strict = true;
    run(cfg);
    std::size_t box_px = 0;
    std::size_t box_changed = 0;
    std::size_t outside_changed = 0;
    std::size_t frames = 0;
    std::size_t not_idempotent = 0;
    for (const auto& fk : c.key.files) {
      if (fk.frames.empty()) continue;
      const auto before = extract_frames(read_file(c.dicom() / fk.path));
      const auto after = extract_frames(read_file(cfg.output_dir / fk.path));
      for (const auto& [idx, boxes] : fk.frames) {
        ++frames;
        const auto& b = before.at(idx);
        const auto& a = after.at(idx);
        std::vector<TextBox> phi;
        for (const auto& kb : boxes) {
          if (kb.phi) phi.push_back(kb.box);
        }
        for (int y = 0; y < b.rows; ++y) {
          for (int x = 0; x < b.cols; ++x) {
            bool in = false;
            for (const auto& box : phi) in = in || box.contains(x, y);
            bool changed = false;
            for (std::size_t s = 0; s < b.samples_per_pixel; ++s) changed = changed || b.at(x, y, s) != a.at(x, y, s);
            if (in) {
              ++box_px;
              box_changed += changed;
            } else {
              outside_changed += changed;
            }
          }
        }
        if (redact_boxes(a, phi).pixels != a.pixels) ++not_idempotent;
      }
    }
    const double frac = box_px ? static_cast<double>(box_changed) / static_cast<double>(box_px) : 0.0;
    return std::pair{frames > 0 && frac >= 0.95 && outside_changed == 0 && not_idempotent == 0,
                     fmt::format("{} frames: {:.2f}% of {} box pixels changed, {} outside changed, {} non-idempotent",
                                 frames, 100.0 * frac, box_px, outside_changed, not_idempotent)};
  });

  check("C10", "throughput", [&] {
    auto cfg = base_config(c500, tmp / "c10_out");
    cfg.ocr = "off";
    cfg.workers = 1;
    const auto t0 = Clock::now();
    const auto r = run(cfg);
    const double s = seconds_since(t0);
    const double rate = static_cast<double>(r.succeeded) / s;
    return std::pair{r.failed == 0 && rate >= 50.0,
                     fmt::format("{} files in {:.2f} s = {:.0f} files/s, one worker (floor 50)", r.succeeded, s, rate)};
  });

  check("C11", "parallel determinism", [&] {
    auto one = base_config(c500, tmp / "c11_w1");
    auto eight = base_config(c500, tmp / "c11_w8");
    eight.workers = 8;
    run(one);
    run(eight);
    const auto t1 = tree(one.output_dir);
    const auto t8 = tree(eight.output_dir);
    const bool same_tree = t1 == t8;
    const bool same_csv = oracle::read_text(one.mapping_csv_path()) == oracle::read_text(eight.mapping_csv_path());
    return std::pair{same_tree && same_csv && t1.size() == 500,
                     fmt::format("{} files, trees {}, mapping CSVs {}", t1.size(), same_tree ? "identical" : "differ",
                                 same_csv ? "identical" : "differ")};
  });

  std::printf("%s: %d failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
