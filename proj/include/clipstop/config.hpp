#ifndef CLIPSTOP_CONFIG_HPP
#define CLIPSTOP_CONFIG_HPP

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "clipstop/eval.hpp"
#include "clipstop/ppo.hpp"

namespace clipstop {

/// Everything a run needs. Sections: [run] [synth] [ppo] [reward] [eval].
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  std::string dataset;       // training data (train) or evaluation data (eval)
  std::string checkpoint;    // full-mode agent
  std::string ab1_checkpoint;
  std::string ab2_checkpoint;

  SynthConfig synth;
  TrainConfig train;
  EvalConfig eval;
};

namespace config_detail {

inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* b = text.data();
  const char* e = b + text.size();
  std::from_chars_result r;
  if constexpr (std::is_floating_point_v<T>) r = std::from_chars(b, e, v, std::chars_format::general);
  else r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e) throw ConfigError("config: '" + key + "' expects a number, got '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + text + "'");
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

struct Binding {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Table = std::map<std::string, Binding>;  // "section.key", ordered for the snapshot

template <class T, class Get>
Binding number(Get get) {
  return {[get](RunConfig& c, const std::string& v) { get(c) = parse_number<T>("", v); },
          [get](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt(get(const_cast<RunConfig&>(c)));
            else return std::to_string(get(const_cast<RunConfig&>(c)));
          }};
}

template <class Get>
Binding boolean(Get get) {
  return {[get](RunConfig& c, const std::string& v) { get(c) = parse_bool("", v); },
          [get](const RunConfig& c) { return std::string(get(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <class Get>
Binding text(Get get) {
  return {[get](RunConfig& c, const std::string& v) { get(c) = v; },
          [get](const RunConfig& c) { return get(const_cast<RunConfig&>(c)); }};
}

inline const Table& table() {
  static const Table t = [] {
    Table t;
    t["run.seed"] = number<std::uint64_t>([](RunConfig& c) -> auto& { return c.seed; });
    t["run.out_dir"] = text([](RunConfig& c) -> auto& { return c.out_dir; });
    t["run.dataset"] = text([](RunConfig& c) -> auto& { return c.dataset; });
    t["run.checkpoint"] = text([](RunConfig& c) -> auto& { return c.checkpoint; });
    t["run.ab1_checkpoint"] = text([](RunConfig& c) -> auto& { return c.ab1_checkpoint; });
    t["run.ab2_checkpoint"] = text([](RunConfig& c) -> auto& { return c.ab2_checkpoint; });

    t["synth.D"] = number<int>([](RunConfig& c) -> auto& { return c.synth.D; });
    t["synth.n_studies"] = number<int>([](RunConfig& c) -> auto& { return c.synth.n_studies; });
    t["synth.disease_fraction"] = number<double>([](RunConfig& c) -> auto& { return c.synth.disease_fraction; });
    t["synth.seed"] = number<std::uint64_t>([](RunConfig& c) -> auto& { return c.synth.seed; });
    const char* views[] = {"a4c", "plax", "psax"};
    for (int v = 0; v < kNumViews; ++v) {
      const std::string s = views[v];
      t["synth.informativeness_" + s] = number<double>([v](RunConfig& c) -> auto& { return c.synth.informativeness[v]; });
      t["synth.noise_" + s] = number<double>([v](RunConfig& c) -> auto& { return c.synth.noise[v]; });
      t["synth.clips_min_" + s] = number<int>([v](RunConfig& c) -> auto& { return c.synth.clips_min[v]; });
      t["synth.clips_max_" + s] = number<int>([v](RunConfig& c) -> auto& { return c.synth.clips_max[v]; });
    }
    t["synth.signal_dims"] = number<int>([](RunConfig& c) -> auto& { return c.synth.signal_dims; });
    t["synth.view_signature"] = number<double>([](RunConfig& c) -> auto& { return c.synth.view_signature; });
    t["synth.poor_quality_fraction"] = number<double>([](RunConfig& c) -> auto& { return c.synth.poor_quality_fraction; });
    t["synth.poor_quality_noise"] = number<double>([](RunConfig& c) -> auto& { return c.synth.poor_quality_noise; });
    t["synth.quality_marker"] = number<double>([](RunConfig& c) -> auto& { return c.synth.quality_marker; });
    t["synth.identical_clips"] = boolean([](RunConfig& c) -> auto& { return c.synth.identical_clips; });
    t["synth.score_gain"] = number<double>([](RunConfig& c) -> auto& { return c.synth.score_gain; });
    t["synth.score_noise"] = number<double>([](RunConfig& c) -> auto& { return c.synth.score_noise; });
    t["synth.view_confidence"] = number<double>([](RunConfig& c) -> auto& { return c.synth.view_confidence; });
    t["synth.view_prob_noise"] = number<double>([](RunConfig& c) -> auto& { return c.synth.view_prob_noise; });
    t["synth.id_prefix"] = text([](RunConfig& c) -> auto& { return c.synth.id_prefix; });

    t["ppo.total_timesteps"] = number<long>([](RunConfig& c) -> auto& { return c.train.ppo.total_timesteps; });
    t["ppo.num_envs"] = number<int>([](RunConfig& c) -> auto& { return c.train.ppo.num_envs; });
    t["ppo.rollout_length"] = number<int>([](RunConfig& c) -> auto& { return c.train.ppo.rollout_length; });
    t["ppo.epochs"] = number<int>([](RunConfig& c) -> auto& { return c.train.ppo.epochs; });
    t["ppo.minibatches"] = number<int>([](RunConfig& c) -> auto& { return c.train.ppo.minibatches; });
    t["ppo.minibatch_size"] = number<int>([](RunConfig& c) -> auto& { return c.train.ppo.minibatch_size; });
    t["ppo.clip_eps"] = number<double>([](RunConfig& c) -> auto& { return c.train.ppo.clip_eps; });
    t["ppo.gamma"] = number<double>([](RunConfig& c) -> auto& { return c.train.ppo.gamma; });
    t["ppo.gae_lambda"] = number<double>([](RunConfig& c) -> auto& { return c.train.ppo.gae_lambda; });
    t["ppo.value_coef"] = number<double>([](RunConfig& c) -> auto& { return c.train.ppo.value_coef; });
    t["ppo.entropy_coef"] = number<double>([](RunConfig& c) -> auto& { return c.train.ppo.entropy_coef; });
    t["ppo.lr"] = number<double>([](RunConfig& c) -> auto& { return c.train.ppo.lr; });
    t["ppo.adam_eps"] = number<double>([](RunConfig& c) -> auto& { return c.train.ppo.adam_eps; });
    t["ppo.critic_weight_decay"] = number<double>([](RunConfig& c) -> auto& { return c.train.ppo.critic_weight_decay; });
    t["ppo.max_grad_norm"] = number<double>([](RunConfig& c) -> auto& { return c.train.ppo.max_grad_norm; });
    t["ppo.normalize_advantages"] = boolean([](RunConfig& c) -> auto& { return c.train.ppo.normalize_advantages; });
    t["ppo.mode"] = {[](RunConfig& c, const std::string& v) { c.train.mode = parse_agent_mode(v); },
                     [](const RunConfig& c) { return std::string(to_string(c.train.mode)); }};
    t["ppo.hidden"] = number<int>([](RunConfig& c) -> auto& { return c.train.hidden; });
    t["ppo.activation"] = {[](RunConfig& c, const std::string& v) {
                             if (v != "tanh" && v != "relu") throw ConfigError("config: activation must be tanh or relu");
                             c.train.activation = v == "tanh" ? Activation::Tanh : Activation::Relu;
                           },
                           [](const RunConfig& c) { return std::string(to_string(c.train.activation)); }};
    t["ppo.policy_updates_pooler"] = boolean([](RunConfig& c) -> auto& { return c.train.policy_updates_pooler; });
    t["ppo.keep_init_slot"] = boolean([](RunConfig& c) -> auto& { return c.train.keep_init_slot; });
    t["ppo.sequential_clips"] = boolean([](RunConfig& c) -> auto& { return c.train.sequential_clips; });
    t["ppo.max_clips"] = number<int>([](RunConfig& c) -> auto& { return c.train.max_clips; });

    t["reward.lambda_cost"] = number<double>([](RunConfig& c) -> auto& { return c.train.lambda_cost; });
    t["reward.clip_cost"] = number<double>([](RunConfig& c) -> auto& { return c.train.clip_cost; });

    t["eval.policies"] = {[](RunConfig& c, const std::string& v) { c.eval.policies = split_list(v); },
                          [](const RunConfig& c) {
                            std::string s;
                            for (const auto& p : c.eval.policies) s += (s.empty() ? "" : ",") + p;
                            return s;
                          }};
    t["eval.n_seeds"] = number<int>([](RunConfig& c) -> auto& { return c.eval.n_seeds; });
    t["eval.master_seed"] = number<std::uint64_t>([](RunConfig& c) -> auto& { return c.eval.master_seed; });
    t["eval.std_threshold"] = number<double>([](RunConfig& c) -> auto& { return c.eval.std_threshold; });
    t["eval.uncertain_quantile"] = number<double>([](RunConfig& c) -> auto& { return c.eval.uncertain.quantile; });
    t["eval.weight_rule"] = {[](RunConfig& c, const std::string& v) {
                               if (v == "max_prob") c.eval.weight_rule = ViewWeightRule::MaxProbability;
                               else if (v == "true_view") c.eval.weight_rule = ViewWeightRule::TrueViewProbability;
                               else throw ConfigError("config: weight_rule must be max_prob or true_view");
                             },
                             [](const RunConfig& c) {
                               return std::string(c.eval.weight_rule == ViewWeightRule::MaxProbability ? "max_prob" : "true_view");
                             }};
    t["eval.greedy"] = boolean([](RunConfig& c) -> auto& { return c.eval.greedy; });
    return t;
  }();
  return t;
}

}  // namespace config_detail

/// Sets one "section.key" entry from text. Unknown keys are rejected.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  const auto& t = config_detail::table();
  const auto it = t.find(key);
  if (it == t.end()) throw ConfigError("config: unknown key '" + key + "'");
  try {
    it->second.set(c, value);
  } catch (const ConfigError& e) {
    throw ConfigError("config: bad value for '" + key + "': '" + value + "'");
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: bad value for '" + key + "': '" + value + "'");
  }
}

inline std::string get_config_value(const RunConfig& c, const std::string& key) {
  const auto& t = config_detail::table();
  const auto it = t.find(key);
  if (it == t.end()) throw ConfigError("config: unknown key '" + key + "'");
  return it->second.get(c);
}

/// Applies an INI document on top of `c`.
inline void apply_ini(RunConfig& c, std::istream& in, const std::string& origin = "config") {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : pt) {
    if (body.empty() && !body.data().empty()) throw ConfigError(origin + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set_config_value(c, section + "." + key, value.data());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  RunConfig c;
  apply_ini(c, in, path);
  return c;
}

/// Every key with its resolved value; reading it back yields the same config.
inline void write_config_snapshot(std::ostream& os, const RunConfig& c) {
  std::string section;
  for (const auto& [key, b] : config_detail::table()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) os << '\n';
      os << '[' << s << "]\n";
      section = s;
    }
    os << key.substr(dot + 1) << " = " << b.get(c) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Named synthetic tasks

/// Informative-A4C task: only A4C carries the disease signal; a share of
/// clips is poor quality (no signal, inflated noise, flagged by a marker
/// dimension).
inline SynthConfig informative_a4c_task(int n_studies, std::uint64_t seed) {
  SynthConfig s;
  s.D = 16;
  s.n_studies = n_studies;
  s.informativeness = {3.0, 0.0, 0.0};
  s.clips_min = {3, 3, 3};
  s.clips_max = {10, 10, 10};
  s.poor_quality_fraction = 0.2;
  s.poor_quality_noise = 3.0;
  s.score_noise = 2.5;  // per-clip scores are a weak classifier
  s.seed = seed;
  return s;
}

/// Every clip of a study is the same draw: a second clip never adds
/// information.
inline SynthConfig identical_views_task(int n_studies, std::uint64_t seed) {
  SynthConfig s = informative_a4c_task(n_studies, seed);
  s.identical_clips = true;
  s.informativeness = {2.0, 2.0, 2.0};
  s.poor_quality_fraction = 0.0;
  return s;
}

inline SynthConfig synth_preset(const std::string& name, int n_studies, std::uint64_t seed) {
  if (name == "informative-a4c") return informative_a4c_task(n_studies, seed);
  if (name == "identical-views") return identical_views_task(n_studies, seed);
  throw ConfigError("unknown synthetic preset '" + name + "' (informative-a4c, identical-views)");
}

/// Splits a manifest into the first `n_first` studies and the rest.
inline std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& m, std::size_t n_first) {
  if (n_first > m.studies.size()) throw ConfigError("split larger than the dataset");
  std::vector<StudyRecord> a(m.studies.begin(), m.studies.begin() + static_cast<std::ptrdiff_t>(n_first));
  std::vector<StudyRecord> b(m.studies.begin() + static_cast<std::ptrdiff_t>(n_first), m.studies.end());
  return {make_manifest(m.D, std::move(a)), make_manifest(m.D, std::move(b))};
}

}  // namespace clipstop

#endif  // CLIPSTOP_CONFIG_HPP
