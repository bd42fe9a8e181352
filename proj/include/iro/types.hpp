#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace iro {

/// Token index in [0, vocab_size) of the owning MdpSpec.
using TokenId = std::int32_t;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transition requested from a terminal state (step > horizon, or EOS hit).
class StepOverflow : public Error {
 public:
  using Error::Error;
};

/// Reward requested for a trajectory that has not finished generating.
class IncompleteTrajectory : public Error {
 public:
  using Error::Error;
};

/// Instance exceeds the exact-enumeration node cap.
class TooLarge : public Error {
 public:
  using Error::Error;
};

/// A policy row is not a probability distribution.
class InvalidPolicy : public Error {
 public:
  using Error::Error;
};

/// Base policy assigns zero visitation where the target policy has mass.
class NoCoverage : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
};

/// Rank-deficient least-squares system with no ridge term.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

/// Beta schedule evaluated outside its domain (e.g. auto scaling with
/// concentrability 1, where the schedule is undefined).
class ScheduleDomain : public Error {
 public:
  using Error::Error;
};

/// Chunk length does not divide the horizon.
class IndivisibleChunk : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent experiment configuration file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// States and trajectories
// ---------------------------------------------------------------------------

/**
 * A generation state: the prompt it grew from plus the tokens generated so
 * far. Two prefixes are equal iff prompt and token sequence are equal, so
 * states at different depths never collide.
 */
struct Prefix {
  std::int32_t prompt_id = 0;
  std::vector<TokenId> tokens;

  /// 1-based step index h; a fresh prompt is at step 1.
  int step() const { return static_cast<int>(tokens.size()) + 1; }

  bool operator==(const Prefix&) const = default;
  auto operator<=>(const Prefix&) const = default;
};

/**
 * A complete or in-progress generation. `complete` holds iff the token list
 * reached the horizon or ended with the terminal token of the owning spec.
 */
struct Trajectory {
  std::int32_t prompt_id = 0;
  std::vector<TokenId> tokens;
  bool complete = false;

  bool operator==(const Trajectory&) const = default;
  auto operator<=>(const Trajectory&) const = default;

  Prefix as_prefix() const { return Prefix{prompt_id, tokens}; }
};

/// A trajectory paired with its evaluated reward.
struct ScoredTrajectory {
  Trajectory trajectory;
  double reward = 0.0;
};

/// Renders tokens as a space-separated string ("" for the empty sequence).
std::string token_string(const std::vector<TokenId>& tokens);

/// Parses a space-separated token string; throws IoError on junk.
std::vector<TokenId> parse_token_string(const std::string& text);

}  // namespace iro
