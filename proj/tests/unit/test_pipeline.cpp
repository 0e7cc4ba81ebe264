#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dcmdeid/codec.hpp"
#include "dcmdeid/error.hpp"
#include "dcmdeid/eval_harness.hpp"
#include "dcmdeid/pipeline.hpp"
#include "support/tempdir.hpp"

using namespace dcmdeid;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_small_corpus(const fs::path& dir, std::size_t n, std::uint64_t seed = 5) {
  CorpusSpec spec;
  spec.n_files = n;
  spec.seed = seed;
  write_corpus(generate_corpus(spec), dir);
}

RunConfig config_for(const oracle::TempDir& t) {
  RunConfig c;
  c.input_dir = t / "in/dicom";
  c.output_dir = t / "out";
  c.salt = "fixed-salt";
  return c;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = oracle::read_text(e.path());
  }
  return out;
}

std::vector<json> jsonl(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(oracle::read_text(p));
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

class EnvGuard {
 public:
  EnvGuard(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value, 1);
  }
  ~EnvGuard() {
    if (old_) {
      ::setenv(name_, old_->c_str(), 1);
    } else {
      ::unsetenv(name_);
    }
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace

TEST(Discovery, OrderMagicAndExclusion) {
  oracle::TempDir t;
  DataSet ds;
  ds.make_file_meta("1.2.840.10008.5.1.4.1.1.7", "1.2.3");
  fs::create_directories(t / "in/b");
  fs::create_directories(t / "in/out");
  write_file(t / "in/b/z.dcm", ds);
  write_file(t / "in/a.DCM", ds);
  write_file(t / "in/noext", ds);
  write_file(t / "in/out/inside.dcm", ds);
  oracle::write_text(t / "in/readme.txt", "hello");
  oracle::write_text(t / "in/plain", "no magic here");

  auto found = discover_files(t / "in", t / "in/out");
  EXPECT_EQ(found.files, (std::vector<std::string>{"a.DCM", "b/z.dcm", "noext"}));
  ASSERT_EQ(found.skipped.size(), 2u);
  EXPECT_EQ(found.skipped[0].first, "plain");
  EXPECT_EQ(found.skipped[1].first, "readme.txt");
  EXPECT_THROW(discover_files(t / "missing"), Error);
}

TEST(Environment, OverridesOnlyRemoteModes) {
  EnvGuard det(kDetectorUrlEnv, "http://127.0.0.1:9/");
  EnvGuard ocr(kOcrUrlEnv, "http://127.0.0.1:10/");
  RunConfig c;
  apply_environment(c);
  EXPECT_EQ(c.detector, "pattern");
  EXPECT_EQ(c.ocr, "off");
  c.detector = "remote";
  c.ocr = "http://elsewhere:1";
  apply_environment(c);
  EXPECT_EQ(c.detector, "http://127.0.0.1:9/");
  EXPECT_EQ(c.ocr, "http://127.0.0.1:10/");
}

TEST(Run, InvalidConfigurations) {
  oracle::TempDir t;
  fs::create_directories(t / "in/dicom");
  auto code = [](const RunConfig& c) {
    try {
      run(c);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  auto c = config_for(t);
  c.workers = 0;
  EXPECT_EQ(code(c), ErrorCode::InvalidConfig);
  c = config_for(t);
  c.output_dir = c.input_dir;
  EXPECT_EQ(code(c), ErrorCode::InvalidConfig);
  c = config_for(t);
  c.detector = "telepathy";
  EXPECT_EQ(code(c), ErrorCode::InvalidConfig);
  c = config_for(t);
  c.input_dir = t / "nowhere";
  EXPECT_EQ(code(c), ErrorCode::InvalidConfig);
}

TEST(Run, EmptyInputSucceeds) {
  oracle::TempDir t;
  fs::create_directories(t / "in/dicom");
  auto report = run(config_for(t));
  EXPECT_EQ(report.exit_code(), 0);
  EXPECT_TRUE(report.records.empty());
  auto lines = jsonl(config_for(t).report_file_path());
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0]["summary"]["files"], 0);
}

TEST(Run, CorruptFileIsIsolated) {
  oracle::TempDir t;
  write_small_corpus(t / "in", 4);
  oracle::write_text(t / "in/dicom/broken.dcm", std::string(128, '\0') + "DICM" + "\x02\x00\x10");
  auto c = config_for(t);
  auto report = run(c);
  EXPECT_EQ(report.failed, 1u);
  EXPECT_EQ(report.succeeded, 4u);
  EXPECT_NE(report.exit_code(), 0);
  EXPECT_FALSE(fs::exists(c.output_dir / "broken.dcm"));

  auto lines = jsonl(c.report_file_path());
  ASSERT_EQ(lines.size(), 6u);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_TRUE(lines[i].contains("timings"));
    if (lines[i]["status"] == "failed") {
      ++failed;
      EXPECT_EQ(lines[i]["path"], "broken.dcm");
      EXPECT_FALSE(lines[i]["error"].get<std::string>().empty());
    }
  }
  EXPECT_EQ(failed, 1u);
  EXPECT_EQ(lines[5]["summary"]["failed"], 1);
}

TEST(Run, WritesMappingsAndSkipsNonDicom) {
  oracle::TempDir t;
  write_small_corpus(t / "in", 3);
  oracle::write_text(t / "in/dicom/notes.txt", "x");
  auto c = config_for(t);
  auto report = run(c);
  EXPECT_EQ(report.exit_code(), 0);
  ASSERT_EQ(report.skipped.size(), 1u);
  const auto csv = oracle::read_text(c.mapping_csv_path());
  EXPECT_EQ(csv.rfind("kind,original,replacement\n", 0), 0u);
  EXPECT_NE(csv.find("\nuid,"), std::string::npos);
  EXPECT_NE(csv.find("\npatient_id,"), std::string::npos);
  EXPECT_EQ(c.mapping_csv_path().parent_path(), c.output_dir.parent_path());

  // every output parses and carries no source patient name
  auto in = tree(c.input_dir);
  auto out = tree(c.output_dir);
  EXPECT_EQ(out.size(), 3u);
  for (const auto& [rel, bytes] : out) {
    ASSERT_TRUE(in.count(rel)) << rel;
    DataSet src = parse_file(std::vector<std::uint8_t>(in[rel].begin(), in[rel].end()));
    DataSet dst = parse_file(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
    const auto name = src.get_string(tags::kPatientName);
    if (!name.empty()) {
      EXPECT_NE(dst.get_string(tags::kPatientName), name);
    }
  }
}

TEST(Run, WorkerCountDoesNotChangeOutput) {
  oracle::TempDir t;
  write_small_corpus(t / "in", 24, 9);
  auto one = config_for(t);
  one.output_dir = t / "out1";
  one.ocr = (t / "in/detections.json").string();
  auto eight = one;
  eight.output_dir = t / "out8";
  eight.workers = 8;
  run(one);
  run(eight);
  EXPECT_EQ(tree(one.output_dir), tree(eight.output_dir));
  EXPECT_EQ(oracle::read_text(one.mapping_csv_path()), oracle::read_text(eight.mapping_csv_path()));
}
