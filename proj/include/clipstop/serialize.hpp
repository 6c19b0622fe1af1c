#ifndef CLIPSTOP_SERIALIZE_HPP
#define CLIPSTOP_SERIALIZE_HPP

#include <nlohmann/json.hpp>

#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "clipstop/agent_nets.hpp"
#include "clipstop/episode_env.hpp"

namespace clipstop {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
    throw ParseError("matrix record has inconsistent shape");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

inline void load_param(ParamTensor& p, const json& j, const std::string& where) {
  Matrix m = matrix_from_json(j);
  if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
    throw ValidationError("checkpoint shape mismatch for " + where + ": expected " + std::to_string(p.value.rows()) + "x" +
                          std::to_string(p.value.cols()) + ", found " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()));
  p.value = std::move(m);
  p.zero_grad();
}

inline json mlp_spec_to_json(const MLPSpec& s) {
  return {{"widths", s.widths}, {"activation", to_string(s.hidden)}, {"output", to_string(s.output)}};
}

inline json mlp_to_json(const Mlp& m) {
  json layers = json::array();
  for (std::size_t l = 0; l < m.num_layers(); ++l)
    layers.push_back({{"W", matrix_to_json(m.weight(l).value)}, {"b", matrix_to_json(m.bias(l).value)}});
  return {{"spec", mlp_spec_to_json(m.spec())}, {"layers", layers}};
}

inline void mlp_from_json(Mlp& m, const json& j, const std::string& name) {
  const auto widths = j.at("spec").at("widths").get<std::vector<int>>();
  if (widths != m.spec().widths) throw ValidationError("checkpoint shape mismatch: " + name + " widths differ");
  const auto& layers = j.at("layers");
  if (layers.size() != m.num_layers()) throw ValidationError("checkpoint shape mismatch: " + name + " layer count");
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    load_param(m.weight(l), layers[l].at("W"), name + ".W" + std::to_string(l));
    load_param(m.bias(l), layers[l].at("b"), name + ".b" + std::to_string(l));
  }
}

inline json net_config_to_json(const NetConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"feature_dim", c.feature_dim},
          {"hidden", c.hidden},
          {"activation", to_string(c.activation)},
          {"policy_updates_pooler", c.policy_updates_pooler},
          {"keep_init_slot", c.keep_init_slot}};
}

inline NetConfig net_config_from_json(const json& j) {
  NetConfig c;
  c.mode = parse_agent_mode(j.at("mode").get<std::string>());
  c.feature_dim = j.at("feature_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  const auto act = j.at("activation").get<std::string>();
  if (act != "tanh" && act != "relu") throw ParseError("unknown activation '" + act + "'");
  c.activation = act == "tanh" ? Activation::Tanh : Activation::Relu;
  c.policy_updates_pooler = j.at("policy_updates_pooler").get<bool>();
  c.keep_init_slot = j.at("keep_init_slot").get<bool>();
  return c;
}

inline json nets_to_json(const AgentNets& n) {
  json j;
  j["config"] = net_config_to_json(n.config());
  if (n.pooler().uses_attention())
    j["pooler"] = {{"W", matrix_to_json(n.pooler().weight().value)}, {"b", matrix_to_json(n.pooler().bias().value)}};
  j["critic"] = mlp_to_json(n.critic());
  j["actor"] = mlp_to_json(n.actor());
  if (n.has_predictor()) j["predictor"] = mlp_to_json(n.predictor());
  return j;
}

inline AgentNets nets_from_json(const json& j) {
  const NetConfig cfg = net_config_from_json(j.at("config"));
  Rng scratch(0);
  AgentNets n(cfg, scratch);
  if (n.pooler().uses_attention()) {
    if (!j.contains("pooler")) throw ValidationError("checkpoint lacks attention parameters for mode " + to_string(cfg.mode));
    load_param(n.pooler().weight(), j["pooler"].at("W"), "pooler.W");
    load_param(n.pooler().bias(), j["pooler"].at("b"), "pooler.b");
  } else if (j.contains("pooler")) {
    throw ValidationError("checkpoint has attention parameters but mode " + to_string(cfg.mode) + " uses mean pooling");
  }
  mlp_from_json(n.critic(), j.at("critic"), "critic");
  mlp_from_json(n.actor(), j.at("actor"), "actor");
  if (n.has_predictor()) mlp_from_json(n.predictor(), j.at("predictor"), "predictor");
  return n;
}

inline json gaussian_to_json(const GaussianInit& g) { return {{"mean", matrix_to_json(g.mean)}, {"var", matrix_to_json(g.var)}}; }

inline GaussianInit gaussian_from_json(const json& j) {
  GaussianInit g;
  g.mean = matrix_from_json(j.at("mean")).col(0);
  g.var = matrix_from_json(j.at("var")).col(0);
  if (g.mean.size() != g.var.size()) throw ValidationError("initial-state Gaussian has mismatched mean/var");
  return g;
}

inline void write_cbor_file(const std::string& path, const json& j) {
  const auto bytes = json::to_cbor(j);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline json read_cbor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return json::from_cbor(bytes);
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "' is not a valid checkpoint: " + e.what());
  }
}

}  // namespace clipstop

#endif  // CLIPSTOP_SERIALIZE_HPP
