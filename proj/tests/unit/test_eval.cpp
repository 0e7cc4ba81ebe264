#include <gtest/gtest.h>

#include <random>

#include "dcmdeid/codec.hpp"
#include "dcmdeid/error.hpp"
#include "dcmdeid/eval_harness.hpp"
#include "dcmdeid/pipeline.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace dcmdeid;
namespace fs = std::filesystem;

namespace {

double oracle_score(std::string a, std::string b) {
  auto trim = [](std::string& s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  };
  trim(a);
  trim(b);
  const auto m = std::max(a.size(), b.size());
  if (m == 0) return 1.0;
  return 1.0 - static_cast<double>(oracle::levenshtein(a, b)) / static_cast<double>(m);
}

struct Deidentified {
  oracle::TempDir dir;
  AnswerKey key;
  fs::path src() const { return dir / "corpus/dicom"; }
  fs::path out() const { return dir / "out"; }
};

void build(Deidentified& d, std::size_t n, std::uint64_t seed, const std::function<void(RunConfig&)>& tweak) {
  CorpusSpec spec;
  spec.n_files = n;
  spec.seed = seed;
  auto corpus = generate_corpus(spec);
  write_corpus(corpus, d.dir / "corpus");
  d.key = corpus.key;
  RunConfig c;
  c.input_dir = d.src();
  c.output_dir = d.out();
  c.salt = "s";
  c.ocr = (d.dir / "corpus/detections.json").string();
  tweak(c);
  run(c);
}

}  // namespace

TEST(CheckScore, Examples) {
  EXPECT_DOUBLE_EQ(check_score("", ""), 1.0);
  EXPECT_DOUBLE_EQ(check_score("ABC ", "ABC\0"), 1.0);
  EXPECT_DOUBLE_EQ(check_score("kitten", "sitting"), 1.0 - 3.0 / 7.0);
  EXPECT_DOUBLE_EQ(check_score("abcd", ""), 0.0);
}

TEST(CheckScore, MatchesBruteForce) {
  std::mt19937 rng(11);
  for (int i = 0; i < 400; ++i) {
    std::string a(rng() % 9, 'a');
    std::string b(rng() % 9, 'a');
    for (auto& c : a) c = "abc "[rng() % 4];
    for (auto& c : b) c = "abc "[rng() % 4];
    EXPECT_DOUBLE_EQ(check_score(a, b), oracle_score(a, b)) << a << "|" << b;
  }
}

TEST(Buckets, Boundaries) {
  EXPECT_EQ(score_bucket(1.0), 0u);
  EXPECT_EQ(score_bucket(0.0), 1u);
  EXPECT_EQ(score_bucket(0.1), 2u);
  EXPECT_EQ(score_bucket(0.25), 3u);
  EXPECT_EQ(score_bucket(0.45), 4u);
  EXPECT_EQ(score_bucket(0.5), 5u);
  EXPECT_EQ(score_bucket(0.79), 6u);
  EXPECT_EQ(score_bucket(0.8), 7u);
  EXPECT_EQ(category_for(KeyEntry::Label::Standard), "PHI detection");
  EXPECT_EQ(category_for(KeyEntry::Label::Private), "private tags");
}

TEST(Corpus, Deterministic) {
  CorpusSpec spec;
  spec.n_files = 6;
  spec.seed = 42;
  auto a = generate_corpus(spec);
  auto b = generate_corpus(spec);
  ASSERT_EQ(a.files.size(), 6u);
  for (std::size_t i = 0; i < a.files.size(); ++i) {
    EXPECT_EQ(a.files[i].path, b.files[i].path);
    EXPECT_EQ(serialize_file(a.files[i].dataset), serialize_file(b.files[i].dataset));
  }
  EXPECT_EQ(a.key.to_json(), b.key.to_json());
  spec.seed = 43;
  EXPECT_NE(generate_corpus(spec).key.to_json(), a.key.to_json());
}

TEST(Corpus, EdgeSpecs) {
  CorpusSpec spec;
  spec.n_files = 0;
  auto empty = generate_corpus(spec);
  EXPECT_TRUE(empty.files.empty());
  EXPECT_EQ(empty.key.entry_count(), 0u);

  spec.n_files = 3;
  spec.pixel_text_rate = 0.0;
  spec.phi_mix = {PhiFamily::Date};
  auto dates = generate_corpus(spec);
  for (const auto& f : dates.key.files) EXPECT_TRUE(f.frames.empty());

  for (double rate : {-0.1, 1.5}) {
    CorpusSpec bad;
    bad.pixel_text_rate = rate;
    try {
      generate_corpus(bad);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::SpecError);
    }
  }
}

TEST(AnswerKeyTest, JsonRoundTrip) {
  CorpusSpec spec;
  spec.n_files = 4;
  spec.pixel_text_rate = 1.0;
  auto key = generate_corpus(spec).key;
  auto back = AnswerKey::parse(key.to_json());
  EXPECT_EQ(back.to_json(), key.to_json());
  EXPECT_EQ(back.entry_count(), key.entry_count());
  oracle::TempDir t;
  key.save(t / "k.json");
  EXPECT_EQ(AnswerKey::load(t / "k.json").to_json(), key.to_json());
  EXPECT_THROW(AnswerKey::parse("{"), Error);
}

TEST(Scoring, FullPipelineIsExact) {
  Deidentified d;
  build(d, 20, 3, [](RunConfig&) {});
  auto r = score_run(d.key, d.out(), d.src());
  EXPECT_EQ(r.total, d.key.entry_count());
  EXPECT_EQ(r.matched, r.total) << r.table();
}

TEST(Scoring, DisabledPrivateDictionaryShowsUp) {
  Deidentified d;
  build(d, 20, 3, [](RunConfig& c) { c.private_dict = false; });
  auto r = score_run(d.key, d.out(), d.src());
  EXPECT_LT(r.matched, r.total);
  EXPECT_GT(r.categories["private tags"], 0u);
  EXPECT_EQ(r.categories["validation"], 0u);
  std::size_t hist = 0;
  for (auto n : r.histogram) hist += n;
  EXPECT_EQ(hist, r.mismatches.size());
}

TEST(Scoring, WhitelistOffLosesDescriptions) {
  Deidentified d;
  build(d, 20, 3, [](RunConfig& c) { c.whitelist = false; });
  auto r = score_run(d.key, d.out(), d.src());
  EXPECT_LT(r.matched, r.total);
}

TEST(Scoring, UntouchedCopyScoresPoorly) {
  Deidentified d;
  CorpusSpec spec;
  spec.n_files = 10;
  auto corpus = generate_corpus(spec);
  write_corpus(corpus, d.dir / "corpus");
  fs::copy(d.src(), d.out(), fs::copy_options::recursive);
  auto r = score_run(corpus.key, d.out(), d.src());
  EXPECT_GT(r.matched, 0u);
  EXPECT_LT(r.accuracy(), 90.0);
  for (const auto& m : r.mismatches) {
    if (m.expected.rfind("<pseudonym", 0) == 0) {
      EXPECT_EQ(m.score, 0.0);
    }
  }
}

TEST(Scoring, MissingOutputFile) {
  Deidentified d;
  CorpusSpec spec;
  spec.n_files = 2;
  auto corpus = generate_corpus(spec);
  fs::create_directories(d.out());
  try {
    score_run(corpus.key, d.out(), d.src());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingOutputFile);
  }
}
