#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "test_util.hpp"

using namespace clipstop;
using clipstop::testing::make_study;

namespace {

std::string dataset_text(int D, const std::vector<std::string>& lines) {
  std::string s = "{\"format\":\"clipstop-v1\",\"D\":" + std::to_string(D) + "}\n";
  for (const auto& l : lines) s += l + "\n";
  return s;
}

std::string study_line(const std::string& id, int label, int n_values) {
  std::string emb;
  for (int i = 0; i < n_values; ++i) emb += (i ? "," : "") + std::to_string(0.25 * i);
  return "{\"study_id\":\"" + id + "\",\"label\":" + std::to_string(label) +
         ",\"clips\":[{\"clip_id\":\"c0\",\"view\":\"A4C\",\"embedding\":[" + emb + "]}]}";
}

// Mann-Whitney U / (n1 n0), computed pairwise.
double pairwise_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double u = 0;
  for (double p : pos)
    for (double n : neg) u += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return u / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace

TEST(Views, NamesRoundTrip) {
  for (auto v : kAllViews) EXPECT_EQ(parse_view(to_string(v)), v);
  EXPECT_FALSE(parse_view("a4c").has_value());
  EXPECT_EQ(action_name(kStopAction), "Stop");
}

TEST(LoadDataset, SymmetricPrior) {
  std::istringstream in(dataset_text(4, {study_line("a", 1, 4), study_line("b", 0, 4)}));
  const auto m = read_dataset(in);
  EXPECT_EQ(m.D, 4);
  EXPECT_EQ(m.studies.size(), 2u);
  EXPECT_EQ(m.class_prior.p0, 0.5);
  EXPECT_EQ(m.class_prior.p1, 0.5);
}

TEST(LoadDataset, EmbeddingLengthMismatchNamesStudy) {
  std::istringstream in(dataset_text(4, {study_line("fine", 1, 4), study_line("short_one", 0, 3)}));
  try {
    read_dataset(in);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("short_one"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, PaperTrainingComposition) {
  std::vector<StudyRecord> studies;
  for (int i = 0; i < 1720; ++i) studies.push_back(make_study("s" + std::to_string(i), i < 338 ? 1 : 0, {1, 0, 0}, 2));
  const auto m = make_manifest(2, std::move(studies));
  EXPECT_DOUBLE_EQ(m.class_prior.p1, 338.0 / 1720.0);
  EXPECT_NEAR(m.class_prior.p1, 0.19651, 1e-5);
  EXPECT_EQ(m.class_prior.p0 + m.class_prior.p1, 1.0);
}

TEST(LoadDataset, MalformedRecordNamesLine) {
  std::istringstream in(dataset_text(2, {study_line("a", 1, 2), "{\"study_id\":\"b\",\"label\":0}"}));
  try {
    read_dataset(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::istringstream bad_json(dataset_text(2, {"{not json"}));
  EXPECT_THROW(read_dataset(bad_json), ParseError);
}

TEST(LoadDataset, EmptyAndHeaderOnlyRejected) {
  std::istringstream empty("");
  EXPECT_THROW(read_dataset(empty), ParseError);
  std::istringstream header_only(dataset_text(3, {}));
  EXPECT_THROW(read_dataset(header_only), ValidationError);
  std::istringstream wrong_header("{\"format\":\"other\",\"D\":3}\n");
  EXPECT_THROW(read_dataset(wrong_header), ParseError);
}

TEST(LoadDataset, FieldValidation) {
  auto s = make_study("x", 1, {2, 0, 0}, 3);
  s.clips[0].clip_score = 1.5;
  EXPECT_THROW(validate_study(s, 3), ValidationError);
  s = make_study("x", 1, {2, 0, 0}, 3);
  s.clips[1].view_probs = std::array<double, 3>{0.5, 0.5, 0.5};
  EXPECT_THROW(validate_study(s, 3), ValidationError);
  s = make_study("x", 2, {2, 0, 0}, 3);
  EXPECT_THROW(validate_study(s, 3), ValidationError);
  StudyRecord no_clips;
  no_clips.study_id = "none";
  EXPECT_THROW(validate_study(no_clips, 3), ValidationError);
}

TEST(LoadDataset, OptionalFieldsMayBeAbsent) {
  std::istringstream in(dataset_text(2, {study_line("a", 1, 2)}));
  const auto m = read_dataset(in);
  EXPECT_FALSE(m.studies[0].clips[0].clip_score.has_value());
  EXPECT_FALSE(m.studies[0].has_view_probs());
}

TEST(Dataset, WriteReadRoundTripIsExact) {
  SynthConfig cfg;
  cfg.D = 6;
  cfg.n_studies = 40;
  cfg.seed = 3;
  cfg.poor_quality_fraction = 0.2;
  const auto m = generate_synthetic(cfg);
  std::stringstream ss;
  write_dataset(ss, m);
  const auto back = read_dataset(ss);
  EXPECT_EQ(back.D, m.D);
  ASSERT_EQ(back.studies.size(), m.studies.size());
  for (std::size_t i = 0; i < m.studies.size(); ++i) EXPECT_EQ(back.studies[i], m.studies[i]) << m.studies[i].study_id;
}

TEST(Synthetic, DeterministicGivenSeed) {
  SynthConfig cfg;
  cfg.D = 8;
  cfg.n_studies = 50;
  cfg.seed = 11;
  std::stringstream a, b;
  write_dataset(a, generate_synthetic(cfg));
  write_dataset(b, generate_synthetic(cfg));
  EXPECT_EQ(a.str(), b.str());
  cfg.seed = 12;
  std::stringstream c;
  write_dataset(c, generate_synthetic(cfg));
  EXPECT_NE(a.str(), c.str());
}

TEST(Synthetic, PositiveCountWithinBinomialBound) {
  SynthConfig cfg;
  cfg.D = 4;
  cfg.n_studies = 1000;
  cfg.disease_fraction = 0.5;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    cfg.seed = seed;
    const auto m = generate_synthetic(cfg);
    // 99% interval of Binomial(1000, 0.5): 500 +- 2.576 * sqrt(250).
    EXPECT_NEAR(m.count_label(1), 500, 2.576 * std::sqrt(250.0) + 1);
  }
}

TEST(Synthetic, OnlyInformativeViewSeparatesClasses) {
  SynthConfig cfg;
  cfg.D = 16;
  cfg.n_studies = 600;
  cfg.seed = 5;
  cfg.informativeness = {2.0, 0.0, 0.0};
  const auto m = generate_synthetic(cfg);
  std::array<std::vector<double>, 3> pos, neg;
  for (const auto& s : m.studies)
    for (const auto& c : s.clips) (s.label ? pos : neg)[static_cast<std::size_t>(view_index(c.view))].push_back(*c.clip_score);
  EXPECT_GT(pairwise_auc(pos[0], neg[0]), 0.85);
  for (int v : {1, 2}) {
    // Null AUC has sd ~ sqrt((n1+n0+1)/(12 n1 n0)) ~ 0.007 here; allow 4 sd.
    EXPECT_NEAR(pairwise_auc(pos[static_cast<std::size_t>(v)], neg[static_cast<std::size_t>(v)]), 0.5, 0.03);
  }
}

TEST(Synthetic, ClipCountsAndOptionalFields) {
  SynthConfig cfg;
  cfg.D = 10;
  cfg.n_studies = 200;
  cfg.clips_min = {3, 0, 1};
  cfg.clips_max = {5, 0, 2};
  const auto m = generate_synthetic(cfg);
  for (const auto& s : m.studies) {
    EXPECT_GE(s.count_view(ViewLabel::A4C), 3);
    EXPECT_LE(s.count_view(ViewLabel::A4C), 5);
    EXPECT_EQ(s.count_view(ViewLabel::PLAX), 0);
    EXPECT_TRUE(s.has_scores());
    EXPECT_TRUE(s.has_view_probs());
  }
  EXPECT_NO_THROW(validate_manifest(m));
}

TEST(Synthetic, IdenticalClipsShareOneEmbedding) {
  SynthConfig cfg;
  cfg.D = 8;
  cfg.n_studies = 20;
  cfg.identical_clips = true;
  cfg.informativeness = {1.0, 1.0, 1.0};
  const auto m = generate_synthetic(cfg);
  for (const auto& s : m.studies)
    for (const auto& c : s.clips) EXPECT_EQ(c.embedding, s.clips[0].embedding);
}

TEST(Synthetic, ConfigValidation) {
  SynthConfig cfg;
  EXPECT_THROW(cfg.validate(), ConfigError);  // D missing
  cfg.D = 4;
  EXPECT_NO_THROW(cfg.validate());
  cfg.clips_min[1] = 5;
  cfg.clips_max[1] = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.clips_max[1] = 6;
  cfg.noise[2] = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.noise[2] = 1.0;
  cfg.disease_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Shuffle, SingleStudySingleClipUnchanged) {
  const auto m = make_manifest(3, {make_study("only", 1, {1, 0, 0}, 3)});
  const auto s = shuffle_dataset(m, 99);
  EXPECT_EQ(s.studies, m.studies);
}

TEST(Shuffle, PermutesStudiesAndClips) {
  std::vector<StudyRecord> studies;
  for (int i = 0; i < 100; ++i) studies.push_back(make_study("s" + std::to_string(i), i % 2, {3, 3, 3}, 2));
  const auto m = make_manifest(2, studies);
  const auto a = shuffle_dataset(m, 1);
  const auto b = shuffle_dataset(m, 2);
  const auto a2 = shuffle_dataset(m, 1);
  EXPECT_EQ(a.studies, a2.studies);

  std::multiset<std::string> orig, shuf;
  for (const auto& s : m.studies) orig.insert(s.study_id);
  for (const auto& s : a.studies) shuf.insert(s.study_id);
  EXPECT_EQ(orig, shuf);

  std::vector<std::string> oa, ob;
  for (const auto& s : a.studies) oa.push_back(s.study_id);
  for (const auto& s : b.studies) ob.push_back(s.study_id);
  EXPECT_NE(oa, ob);

  bool some_clip_moved = false;
  for (const auto& s : a.studies) {
    const auto& o = *std::find_if(m.studies.begin(), m.studies.end(), [&](const auto& x) { return x.study_id == s.study_id; });
    std::multiset<std::string> c1, c2;
    for (const auto& c : s.clips) c1.insert(c.clip_id);
    for (const auto& c : o.clips) c2.insert(c.clip_id);
    EXPECT_EQ(c1, c2);
    some_clip_moved |= s.clips[0].clip_id != o.clips[0].clip_id;
  }
  EXPECT_TRUE(some_clip_moved);
}

TEST(Truncate, KeepsFirstClipsAndWarns) {
  auto m = make_manifest(2, {make_study("big", 1, {4, 4, 4}, 2), make_study("small", 0, {1, 1, 0}, 2)});
  std::ostringstream log;
  const auto original = m;
  EXPECT_EQ(truncate_studies(m, 5, &log), 1u);
  EXPECT_EQ(m.studies[0].clips.size(), 5u);
  EXPECT_EQ(m.studies[0].clips[4].clip_id, original.studies[0].clips[4].clip_id);
  EXPECT_EQ(m.studies[1].clips.size(), 2u);
  EXPECT_NE(log.str().find("warning"), std::string::npos);
}
