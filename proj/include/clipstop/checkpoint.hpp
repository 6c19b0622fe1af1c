#ifndef CLIPSTOP_CHECKPOINT_HPP
#define CLIPSTOP_CHECKPOINT_HPP

#include <optional>
#include <string>
#include <string_view>

#include "clipstop/serialize.hpp"

namespace clipstop {

inline constexpr std::string_view kCheckpointFormat = "clipstop-ckpt-v1";

/// Everything evaluation needs, plus (optionally) the full trainer state for
/// resuming. Stored as CBOR.
struct Checkpoint {
  int D = 0;
  AgentNets nets;
  GaussianInit init;
  ClassPrior prior;
  int max_clips = kDefaultMaxClips;
  std::optional<json> trainer_state;

  AgentMode mode() const { return nets.config().mode; }
};

inline json checkpoint_to_json(const Checkpoint& c) {
  json j;
  j["format"] = std::string(kCheckpointFormat);
  j["D"] = c.D;
  j["max_clips"] = c.max_clips;
  j["prior"] = {c.prior.p0, c.prior.p1};
  j["nets"] = nets_to_json(c.nets);
  j["init"] = gaussian_to_json(c.init);
  if (c.trainer_state) j["trainer_state"] = *c.trainer_state;
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
    throw ParseError("not a " + std::string(kCheckpointFormat) + " checkpoint");
  try {
    Checkpoint c;
    c.D = j.at("D").get<int>();
    c.max_clips = j.at("max_clips").get<int>();
    c.prior.p0 = j.at("prior")[0].get<double>();
    c.prior.p1 = j.at("prior")[1].get<double>();
    c.nets = nets_from_json(j.at("nets"));
    c.init = gaussian_from_json(j.at("init"));
    if (c.init.mean.size() != c.nets.config().feature_dim)
      throw ValidationError("checkpoint shape mismatch: initial-state Gaussian does not match the feature dimension");
    if (c.nets.config().feature_dim != feature_dim_for(c.nets.config().mode, c.D))
      throw ValidationError("checkpoint shape mismatch: feature dimension inconsistent with D and mode");
    if (j.contains("trainer_state")) c.trainer_state = j["trainer_state"];
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) { write_cbor_file(path, checkpoint_to_json(c)); }

inline Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_cbor_file(path)); }

}  // namespace clipstop

#endif  // CLIPSTOP_CHECKPOINT_HPP
