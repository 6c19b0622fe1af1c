#ifndef CLIPSTOP_DATA_MODEL_HPP
#define CLIPSTOP_DATA_MODEL_HPP

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "clipstop/errors.hpp"
#include "clipstop/rng.hpp"

namespace clipstop {

inline constexpr int kNumViews = 3;
inline constexpr int kNumActions = 4;  // three views + Stop
inline constexpr int kStopAction = 3;
inline constexpr int kDefaultMaxClips = 200;

enum class ViewLabel : int { A4C = 0, PLAX = 1, PSAX = 2 };

inline constexpr std::array<ViewLabel, kNumViews> kAllViews = {ViewLabel::A4C, ViewLabel::PLAX,
                                                               ViewLabel::PSAX};

inline std::string_view to_string(ViewLabel v) {
  switch (v) {
    case ViewLabel::A4C: return "A4C";
    case ViewLabel::PLAX: return "PLAX";
    case ViewLabel::PSAX: return "PSAX";
  }
  return "?";
}

/// Case-sensitive. Returns nullopt for anything but the three canonical names.
inline std::optional<ViewLabel> parse_view(std::string_view s) {
  if (s == "A4C") return ViewLabel::A4C;
  if (s == "PLAX") return ViewLabel::PLAX;
  if (s == "PSAX") return ViewLabel::PSAX;
  return std::nullopt;
}

inline int view_index(ViewLabel v) { return static_cast<int>(v); }

/// Name of an action index: the three views or "Stop".
inline std::string_view action_name(int action) {
  return action == kStopAction ? std::string_view("Stop") : to_string(static_cast<ViewLabel>(action));
}

struct ClipRecord {
  std::string clip_id;
  ViewLabel view = ViewLabel::A4C;
  Eigen::VectorXd embedding;
  std::optional<double> clip_score;
  std::optional<std::array<double, kNumViews>> view_probs;

  bool operator==(const ClipRecord& o) const {
    return clip_id == o.clip_id && view == o.view && embedding.size() == o.embedding.size() &&
           embedding == o.embedding && clip_score == o.clip_score && view_probs == o.view_probs;
  }
};

struct StudyRecord {
  std::string study_id;
  int label = 0;  // 1 = disease
  std::vector<ClipRecord> clips;

  bool operator==(const StudyRecord&) const = default;

  int count_view(ViewLabel v) const {
    return static_cast<int>(std::count_if(clips.begin(), clips.end(),
                                          [v](const ClipRecord& c) { return c.view == v; }));
  }
  bool has_scores() const {
    return std::all_of(clips.begin(), clips.end(), [](const ClipRecord& c) { return c.clip_score.has_value(); });
  }
  bool has_view_probs() const {
    return std::all_of(clips.begin(), clips.end(), [](const ClipRecord& c) { return c.view_probs.has_value(); });
  }
};

struct ClassPrior {
  double p0 = 0.5;
  double p1 = 0.5;
  double operator[](int y) const { return y == 1 ? p1 : p0; }
};

struct DatasetManifest {
  int D = 0;
  std::vector<StudyRecord> studies;
  ClassPrior class_prior;

  std::size_t total_clips() const {
    std::size_t n = 0;
    for (const auto& s : studies) n += s.clips.size();
    return n;
  }
  int count_label(int y) const {
    return static_cast<int>(std::count_if(studies.begin(), studies.end(),
                                          [y](const StudyRecord& s) { return s.label == y; }));
  }
};

/// Prior from study counts. p0 is derived as 1 - p1 so the pair sums to one.
inline ClassPrior compute_class_prior(const std::vector<StudyRecord>& studies) {
  if (studies.empty()) throw ValidationError("cannot compute class prior of an empty dataset");
  const auto n1 = std::count_if(studies.begin(), studies.end(), [](const StudyRecord& s) { return s.label == 1; });
  ClassPrior p;
  p.p1 = static_cast<double>(n1) / static_cast<double>(studies.size());
  p.p0 = 1.0 - p.p1;
  return p;
}

inline void validate_study(const StudyRecord& s, int D) {
  if (s.label != 0 && s.label != 1)
    throw ValidationError("study '" + s.study_id + "': label must be 0 or 1");
  if (s.clips.empty()) throw ValidationError("study '" + s.study_id + "' has no clips");
  for (const auto& c : s.clips) {
    if (c.embedding.size() != D)
      throw ValidationError("study '" + s.study_id + "', clip '" + c.clip_id + "': embedding has " +
                            std::to_string(c.embedding.size()) + " values, expected D=" + std::to_string(D));
    if (!c.embedding.allFinite())
      throw ValidationError("study '" + s.study_id + "', clip '" + c.clip_id + "': non-finite embedding");
    if (c.clip_score && !(*c.clip_score >= 0.0 && *c.clip_score <= 1.0))
      throw ValidationError("study '" + s.study_id + "', clip '" + c.clip_id + "': clip_score outside [0,1]");
    if (c.view_probs) {
      double sum = 0.0;
      for (double p : *c.view_probs) {
        if (!(p >= 0.0)) throw ValidationError("study '" + s.study_id + "', clip '" + c.clip_id + "': negative view_probs");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-6)
        throw ValidationError("study '" + s.study_id + "', clip '" + c.clip_id + "': view_probs do not sum to 1");
    }
  }
}

inline void validate_manifest(const DatasetManifest& m) {
  if (m.D <= 0) throw ValidationError("dataset dimension D must be positive");
  if (m.studies.empty()) throw ValidationError("dataset contains no studies");
  for (const auto& s : m.studies) validate_study(s, m.D);
}

inline DatasetManifest make_manifest(int D, std::vector<StudyRecord> studies) {
  DatasetManifest m;
  m.D = D;
  m.studies = std::move(studies);
  validate_manifest(m);
  m.class_prior = compute_class_prior(m.studies);
  return m;
}

// ---------------------------------------------------------------------------
// File format: JSON lines, header {"format":"clipstop-v1","D":n} then one study
// object per line.

inline constexpr std::string_view kDatasetFormat = "clipstop-v1";

namespace detail {

inline StudyRecord study_from_json(const nlohmann::json& j, int D, std::size_t line_no) {
  auto fail = [line_no](const std::string& what) {
    return ParseError("line " + std::to_string(line_no) + ": " + what);
  };
  if (!j.is_object()) throw fail("study record is not an object");
  StudyRecord s;
  try {
    s.study_id = j.at("study_id").get<std::string>();
    s.label = j.at("label").get<int>();
    const auto& clips = j.at("clips");
    if (!clips.is_array()) throw fail("'clips' must be an array");
    for (const auto& jc : clips) {
      ClipRecord c;
      c.clip_id = jc.at("clip_id").get<std::string>();
      const auto vname = jc.at("view").get<std::string>();
      auto v = parse_view(vname);
      if (!v) throw fail("unknown view '" + vname + "' in study '" + s.study_id + "'");
      c.view = *v;
      const auto emb = jc.at("embedding").get<std::vector<double>>();
      c.embedding = Eigen::Map<const Eigen::VectorXd>(emb.data(), static_cast<Eigen::Index>(emb.size()));
      if (auto it = jc.find("clip_score"); it != jc.end() && !it->is_null()) c.clip_score = it->get<double>();
      if (auto it = jc.find("view_probs"); it != jc.end() && !it->is_null()) {
        const auto vp = it->get<std::vector<double>>();
        if (vp.size() != kNumViews) throw fail("view_probs must have 3 entries in study '" + s.study_id + "'");
        c.view_probs = std::array<double, kNumViews>{vp[0], vp[1], vp[2]};
      }
      s.clips.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed study record: ") + e.what());
  }
  validate_study(s, D);
  return s;
}

inline nlohmann::json study_to_json(const StudyRecord& s) {
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& c : s.clips) {
    nlohmann::json jc;
    jc["clip_id"] = c.clip_id;
    jc["view"] = std::string(to_string(c.view));
    jc["embedding"] = std::vector<double>(c.embedding.data(), c.embedding.data() + c.embedding.size());
    if (c.clip_score) jc["clip_score"] = *c.clip_score;
    if (c.view_probs) jc["view_probs"] = std::vector<double>(c.view_probs->begin(), c.view_probs->end());
    clips.push_back(std::move(jc));
  }
  nlohmann::json j;
  j["study_id"] = s.study_id;
  j["label"] = s.label;
  j["clips"] = std::move(clips);
  return j;
}

}  // namespace detail

inline DatasetManifest read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  int D = 0;
  bool have_header = false;
  std::vector<StudyRecord> studies;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || j.value("format", "") != kDatasetFormat || !j.contains("D") ||
          !j["D"].is_number_integer())
        throw ParseError("line " + std::to_string(line_no) + ": expected header {\"format\":\"clipstop-v1\",\"D\":<int>}");
      D = j["D"].get<int>();
      if (D <= 0) throw ParseError("line " + std::to_string(line_no) + ": D must be positive");
      have_header = true;
      continue;
    }
    studies.push_back(detail::study_from_json(j, D, line_no));
  }
  if (!have_header) throw ParseError("dataset is empty (missing header)");
  if (studies.empty()) throw ValidationError("dataset contains no studies");
  return make_manifest(D, std::move(studies));
}

inline DatasetManifest load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");
  return read_dataset(in);
}

inline void write_dataset(std::ostream& out, const DatasetManifest& m) {
  nlohmann::json header;
  header["format"] = std::string(kDatasetFormat);
  header["D"] = m.D;
  out << header.dump() << '\n';
  for (const auto& s : m.studies) out << detail::study_to_json(s).dump() << '\n';
}

inline void write_dataset(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write dataset file '" + path + "'");
  write_dataset(out, m);
}

// ---------------------------------------------------------------------------
// Synthetic studies.
//
// Embedding layout (dimensions beyond D are dropped):
//   [0, signal_dims)                      class-separating direction u
//   signal_dims + v                       view signature of view v
//   signal_dims + 3                       quality marker (poor clips)
//   rest                                  pure noise
// Every dimension gets N(0, noise_v^2). Disease clips of view v are shifted by
// informativeness_v * u unless the clip is poor quality.

struct SynthConfig {
  int D = 0;
  int n_studies = 1000;
  double disease_fraction = 0.5;
  std::array<double, kNumViews> informativeness = {2.0, 0.0, 0.0};
  std::array<double, kNumViews> noise = {1.0, 1.0, 1.0};
  std::array<int, kNumViews> clips_min = {3, 3, 3};
  std::array<int, kNumViews> clips_max = {10, 10, 10};
  std::uint64_t seed = 0;

  int signal_dims = 4;
  double view_signature = 3.0;
  double poor_quality_fraction = 0.0;
  double quality_marker = 3.0;
  double poor_quality_noise = 1.0;  // noise multiplier on poor clips
  bool identical_clips = false;  // every clip in a study shares one draw
  double score_gain = 2.0;
  double score_noise = 0.5;
  double view_confidence = 4.0;
  double view_prob_noise = 0.5;
  std::string id_prefix = "s";

  void validate() const {
    if (D <= 0) throw ConfigError("synth: D must be a positive integer");
    if (n_studies <= 0) throw ConfigError("synth: n_studies must be positive");
    if (!(disease_fraction > 0.0 && disease_fraction < 1.0))
      throw ConfigError("synth: disease_fraction must lie in (0,1)");
    if (signal_dims <= 0) throw ConfigError("synth: signal_dims must be positive");
    if (!(poor_quality_fraction >= 0.0 && poor_quality_fraction < 1.0))
      throw ConfigError("synth: poor_quality_fraction must lie in [0,1)");
    for (int v = 0; v < kNumViews; ++v) {
      if (clips_min[v] < 0 || clips_min[v] > clips_max[v])
        throw ConfigError("synth: clip count range for " + std::string(to_string(kAllViews[v])) + " needs 0 <= min <= max");
      if (!(noise[v] > 0.0)) throw ConfigError("synth: noise scales must be > 0");
    }
    if (!(poor_quality_noise > 0.0)) throw ConfigError("synth: poor_quality_noise must be > 0");
    if (std::all_of(clips_max.begin(), clips_max.end(), [](int n) { return n == 0; }))
      throw ConfigError("synth: at least one view needs a positive max clip count");
  }
};

/// Class-separating unit direction used by the generator (exposed for tests).
inline Eigen::VectorXd synth_signal_direction(const SynthConfig& cfg) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(cfg.D);
  const int k = std::min(cfg.signal_dims, cfg.D);
  u.head(k).setConstant(1.0 / std::sqrt(static_cast<double>(k)));
  return u;
}

inline DatasetManifest generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const Eigen::VectorXd u = synth_signal_direction(cfg);
  const int width = static_cast<int>(std::to_string(cfg.n_studies - 1).size());

  auto pad = [](int i, int w) {
    std::string s = std::to_string(i);
    return std::string(static_cast<std::size_t>(std::max(0, w - static_cast<int>(s.size()))), '0') + s;
  };

  std::vector<StudyRecord> studies;
  studies.reserve(static_cast<std::size_t>(cfg.n_studies));
  for (int i = 0; i < cfg.n_studies; ++i) {
    StudyRecord st;
    st.study_id = cfg.id_prefix + pad(i, width);
    st.label = uniform01(rng) < cfg.disease_fraction ? 1 : 0;

    std::array<int, kNumViews> counts{};
    for (int v = 0; v < kNumViews; ++v)
      counts[v] = std::uniform_int_distribution<int>(cfg.clips_min[v], cfg.clips_max[v])(rng);
    if (counts[0] + counts[1] + counts[2] == 0) {
      int v;
      do { v = static_cast<int>(uniform_index(rng, kNumViews)); } while (cfg.clips_max[v] == 0);
      counts[v] = 1;
    }

    Eigen::VectorXd shared_noise;
    if (cfg.identical_clips) {
      shared_noise.resize(cfg.D);
      for (int k = 0; k < cfg.D; ++k) shared_noise[k] = standard_normal(rng);
    }

    int clip_no = 0;
    for (int v = 0; v < kNumViews; ++v) {
      for (int c = 0; c < counts[v]; ++c) {
        ClipRecord clip;
        clip.clip_id = st.study_id + "_c" + std::to_string(clip_no++);
        clip.view = kAllViews[v];

        const bool poor = cfg.poor_quality_fraction > 0.0 && uniform01(rng) < cfg.poor_quality_fraction;
        Eigen::VectorXd h(cfg.D);
        for (int k = 0; k < cfg.D; ++k)
          h[k] = cfg.noise[v] * (poor ? cfg.poor_quality_noise : 1.0) * (cfg.identical_clips ? shared_noise[k] : standard_normal(rng));
        if (st.label == 1 && !poor) h += cfg.informativeness[v] * u;
        if (!cfg.identical_clips && cfg.signal_dims + v < cfg.D) h[cfg.signal_dims + v] += cfg.view_signature;
        if (poor && cfg.signal_dims + kNumViews < cfg.D) h[cfg.signal_dims + kNumViews] += cfg.quality_marker;
        clip.embedding = std::move(h);

        // Logistic score on the projection, centred between the class means
        // of this view so uninformative views hover around 0.5.
        const double proj = clip.embedding.dot(u) - 0.5 * cfg.informativeness[v];
        const double z = cfg.score_gain * proj + cfg.score_noise * standard_normal(rng);
        clip.clip_score = 1.0 / (1.0 + std::exp(-z));

        std::array<double, kNumViews> logits{};
        for (int j = 0; j < kNumViews; ++j)
          logits[j] = (j == v ? cfg.view_confidence : 0.0) + cfg.view_prob_noise * standard_normal(rng);
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z_sum = 0.0;
        for (double& l : logits) z_sum += (l = std::exp(l - mx));
        for (double& l : logits) l /= z_sum;
        clip.view_probs = logits;

        st.clips.push_back(std::move(clip));
      }
    }
    studies.push_back(std::move(st));
  }
  DatasetManifest m;
  m.D = cfg.D;
  m.studies = std::move(studies);
  m.class_prior = compute_class_prior(m.studies);
  return m;
}

/// Permutes the study order and each study's clip order.
inline DatasetManifest shuffle_dataset(DatasetManifest m, std::uint64_t seed) {
  Rng rng(seed);
  std::shuffle(m.studies.begin(), m.studies.end(), rng);
  for (auto& s : m.studies) std::shuffle(s.clips.begin(), s.clips.end(), rng);
  return m;
}

/// Keeps the first max_clips clips of over-long studies. Returns how many
/// studies were cut and warns once on `log` if any were.
inline std::size_t truncate_studies(DatasetManifest& m, int max_clips, std::ostream* log = &std::cerr) {
  std::size_t cut = 0;
  for (auto& s : m.studies) {
    if (static_cast<int>(s.clips.size()) > max_clips) {
      s.clips.resize(static_cast<std::size_t>(max_clips));
      ++cut;
    }
  }
  if (cut > 0 && log)
    *log << "warning: " << cut << " studies exceeded " << max_clips << " clips and were truncated\n";
  return cut;
}

}  // namespace clipstop

#endif  // CLIPSTOP_DATA_MODEL_HPP
