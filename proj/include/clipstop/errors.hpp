#ifndef CLIPSTOP_ERRORS_HPP
#define CLIPSTOP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace clipstop {

/// Malformed input file (dataset, checkpoint, config). Carries the offending
/// line or record in its message.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input parsed but violates a data invariant (dimension, range, class mix).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration value.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A policy needs per-clip data (clip_score, view_probs) the dataset lacks.
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller broke a precondition: masked action, missing forward cache,
/// all-false mask and similar.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace clipstop

#endif  // CLIPSTOP_ERRORS_HPP
