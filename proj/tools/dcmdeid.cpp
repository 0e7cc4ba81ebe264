#include <cstdio>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "dcmdeid/codec.hpp"
#include "dcmdeid/dicom_validate.hpp"
#include "dcmdeid/dictionary.hpp"
#include "dcmdeid/error.hpp"
#include "dcmdeid/eval_harness.hpp"
#include "dcmdeid/phi_detect.hpp"
#include "dcmdeid/pipeline.hpp"
#include "dcmdeid/private_deid.hpp"
#include "dcmdeid/rule_engine.hpp"

namespace fs = std::filesystem;
using namespace dcmdeid;

namespace {

void print_elements(const ElementMap& map, int depth) {
  for (const auto& [tag, e] : map) {
    const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
    if (e.is_sequence()) {
      fmt::print("{}{} {} {} ({} items)\n", indent, tag.str(), e.stored_vr_code(), keyword_or_tag(tag), e.items().size());
      for (std::size_t i = 0; i < e.items().size(); ++i) {
        fmt::print("{}  [{}]\n", indent, i);
        print_elements(e.items()[i], depth + 2);
      }
      continue;
    }
    std::string value = render_value(e);
    if (value.size() > 64) value = value.substr(0, 61) + "...";
    fmt::print("{}{} {} {:<32} [{}]\n", indent, tag.str(), e.stored_vr_code(), keyword_or_tag(tag), value);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DICOM de-identification toolkit"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string rules, custom, private_dict, whitelist, profiles, ignore, validator, mapping, report;
  bool no_custom = false, no_private = false, no_whitelist = false, no_validate = false;
  auto* run_cmd = app.add_subcommand("run", "De-identify a directory tree");
  run_cmd->add_option("input", cfg.input_dir, "Input directory")->required()->check(CLI::ExistingDirectory);
  run_cmd->add_option("output", cfg.output_dir, "Output directory")->required();
  run_cmd->add_option("--profile", cfg.profile, "Bundled profile: tcia or ps315")->capture_default_str();
  run_cmd->add_option("--rules", rules, "Rule document replacing the bundled profile");
  run_cmd->add_option("--custom-rules", custom, "Custom override rules (default: bundled overlay)");
  run_cmd->add_flag("--no-custom-rules", no_custom);
  run_cmd->add_option("--private-dict", private_dict, "Private tag dictionary (default: bundled)");
  run_cmd->add_flag("--no-private-dict", no_private);
  run_cmd->add_option("--whitelist", whitelist, "Whitelist file (default: bundled)");
  run_cmd->add_flag("--no-whitelist", no_whitelist);
  run_cmd->add_option("--date-offset", cfg.date_offset_days, "Date shift in days")->capture_default_str();
  run_cmd->add_option("--salt", cfg.salt, "Pseudonymization salt (default: random)");
  run_cmd->add_option("--detector", cfg.detector, "pattern, none, remote or a base URL")->capture_default_str();
  run_cmd->add_option("--detector-threshold", cfg.detector_threshold)->capture_default_str();
  run_cmd->add_option("--ocr", cfg.ocr, "off, remote, a base URL or a detections file")->capture_default_str();
  run_cmd->add_flag("--ocr-strict", cfg.ocr_strict, "Fail files with frames missing from the detections file");
  run_cmd->add_option("--ocr-min-confidence", cfg.ocr_min_confidence)->capture_default_str();
  run_cmd->add_flag("--fail-safe-all", cfg.fail_safe_all, "Redact every box when the PHI check fails");
  run_cmd->add_flag("--no-validate", no_validate);
  run_cmd->add_option("--validation-profiles", profiles, "Required-attribute profile file");
  run_cmd->add_option("--ignore-list", ignore, "Validator ignore list (keyword per line)");
  run_cmd->add_option("--external-validator", validator, "dciodvfy-compatible executable");
  run_cmd->add_option("-j,--workers", cfg.workers, "Worker threads")->capture_default_str();
  run_cmd->add_option("--mapping-csv", mapping);
  run_cmd->add_option("--report", report);

  CorpusSpec spec;
  fs::path corpus_dir;
  std::vector<std::string> mix;
  auto* gen_cmd = app.add_subcommand("generate-corpus", "Write a synthetic corpus with answer key");
  gen_cmd->add_option("output", corpus_dir, "Corpus directory")->required();
  gen_cmd->add_option("-n,--files", spec.n_files)->capture_default_str();
  gen_cmd->add_option("--seed", spec.seed)->capture_default_str();
  gen_cmd->add_option("--phi", mix, "PHI families: name date id location contact age");
  gen_cmd->add_option("--pixel-text-rate", spec.pixel_text_rate)->capture_default_str();
  gen_cmd->add_option("--date-offset", spec.date_offset_days)->capture_default_str();

  fs::path key_path, score_out, score_src, score_json;
  auto* score_cmd = app.add_subcommand("score", "Score a run against an answer key");
  score_cmd->add_option("key", key_path, "answer_key.json")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("output", score_out, "De-identified output directory")->required();
  score_cmd->add_option("source", score_src, "Original corpus directory (for pixel scoring)")->required();
  score_cmd->add_option("--json", score_json, "Write the machine-readable report here");

  std::string what;
  auto* dump_cmd = app.add_subcommand("dump-defaults", "Print a bundled configuration file");
  dump_cmd->add_option("what", what, "tcia, ps315, custom, private-dict, whitelist, validation-profiles, ignore-list")
      ->required();

  fs::path inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print the elements of a DICOM file");
  inspect_cmd->add_option("file", inspect_path)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      if (!rules.empty()) cfg.rules_path = rules;
      if (!custom.empty()) cfg.custom_rules_path = custom;
      if (!private_dict.empty()) cfg.private_dict_path = private_dict;
      if (!whitelist.empty()) cfg.whitelist_path = whitelist;
      if (!profiles.empty()) cfg.validation_profiles_path = profiles;
      if (!ignore.empty()) cfg.ignore_list_path = ignore;
      if (!validator.empty()) cfg.external_validator = validator;
      if (!mapping.empty()) cfg.mapping_csv = mapping;
      if (!report.empty()) cfg.report_path = report;
      cfg.custom_rules = !no_custom;
      cfg.private_dict = !no_private;
      cfg.whitelist = !no_whitelist;
      cfg.validate = !no_validate;
      apply_environment(cfg);
      const RunReport r = run(cfg);
      std::cout << r.summary();
      fmt::print("mappings: {}\nreport: {}\n", cfg.mapping_csv_path().string(), cfg.report_file_path().string());
      return r.exit_code();
    }
    if (*gen_cmd) {
      if (!mix.empty()) {
        spec.phi_mix.clear();
        for (const auto& m : mix) {
          auto f = parse_phi_family(m);
          if (!f) throw Error(ErrorCode::SpecError, "unknown PHI family '" + m + "'");
          spec.phi_mix.insert(*f);
        }
      }
      const Corpus c = generate_corpus(spec);
      write_corpus(c, corpus_dir);
      fmt::print("{} files, {} key entries -> {}\n", c.files.size(), c.key.entry_count(), corpus_dir.string());
      return 0;
    }
    if (*score_cmd) {
      const ScoreReport r = score_run(AnswerKey::load(key_path), score_out, score_src);
      std::cout << r.table();
      if (!score_json.empty()) {
        const std::string j = r.to_json();
        write_bytes(score_json, std::span(reinterpret_cast<const std::uint8_t*>(j.data()), j.size()));
      }
      return 0;
    }
    if (*dump_cmd) {
      if (what == "tcia" || what == "ps315") {
        std::cout << bundled_profile_text(what);
      } else if (what == "custom") {
        std::cout << bundled_custom_rules_text();
      } else if (what == "private-dict") {
        std::cout << bundled_private_dict_text();
      } else if (what == "whitelist") {
        std::cout << bundled_whitelist_text();
      } else if (what == "validation-profiles") {
        std::cout << bundled_validation_profiles_text();
      } else if (what == "ignore-list") {
        const auto ignore_defaults = IgnoreList::defaults();
        for (const auto& k : ignore_defaults.keywords()) std::cout << k << "\n";
      } else {
        throw Error(ErrorCode::InvalidConfig, "nothing named '" + what + "'");
      }
      return 0;
    }
    if (*inspect_cmd) {
      const DataSet ds = read_file(inspect_path, ParseOptions{true});
      fmt::print("transfer syntax: {}\n", transfer_syntax_uid(ds.transfer_syntax));
      print_elements(ds.file_meta, 0);
      print_elements(ds, 0);
      return 0;
    }
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}
