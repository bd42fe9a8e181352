#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <variant>
#include <vector>

#include "iro/types.hpp"

namespace iro {

/// Node budget used by exact-enumeration routines before giving up.
inline constexpr std::int64_t kDefaultNodeCap = 2'000'000;

/// A policy as a callable: full next-token distribution at an interior
/// prefix. Rows must be nonnegative and sum to 1.
using PolicyFn = std::function<std::vector<double>(const Prefix&)>;

/**
 * A finite-horizon token-generation MDP. States are prefixes, actions are
 * tokens, and the transition deterministically appends the chosen token.
 * Prompt tokens (the content behind each prompt_id) do not count toward the
 * horizon; generation always starts from an empty prefix at step 1.
 */
struct MdpSpec {
  std::int32_t vocab_size = 2;
  std::int32_t horizon = 1;
  /// Prompt contents by prompt_id; the initial state is drawn uniformly.
  std::vector<std::vector<TokenId>> prompts = {{}};
  /// Optional early-stop token; absent means fixed-length generation.
  std::optional<TokenId> terminal_token;
  /// Upper bound all reward families are clamped into.
  double r_max = 1.0;

  /// Throws InvalidConfig if any field is out of range.
  void validate() const;

  int num_prompts() const { return static_cast<int>(prompts.size()); }

  /// True iff this token list can no longer be extended.
  bool is_complete(const std::vector<TokenId>& tokens) const {
    if (static_cast<std::int32_t>(tokens.size()) >= horizon) return true;
    return terminal_token && !tokens.empty() &&
           tokens.back() == *terminal_token;
  }

  bool is_terminal(const Prefix& p) const { return is_complete(p.tokens); }

  Prefix initial_state(std::int32_t prompt_id) const {
    return Prefix{prompt_id, {}};
  }
};

// ---------------------------------------------------------------------------
// Reward families
// ---------------------------------------------------------------------------

/// Pseudo-random leaf reward: uniform in [0, scale] as a pure hash of the
/// trajectory, so every leaf has an i.i.d.-looking but reproducible value.
struct HashLeafReward {
  std::uint64_t seed = 0;
  double scale = 1.0;
};

/// All-or-nothing reward for matching one target trajectory exactly.
struct NeedleReward {
  Trajectory target;
  double hit_value = 1.0;
  double miss_value = 0.0;
};

/// Position-wise token weights summed over the trajectory, then clamped to
/// [0, r_max]; weights[h][a] scores token a at step h (0-based).
struct TokenPreferenceReward {
  std::vector<std::vector<double>> weights;
};

/// Explicit lookup keyed by (prompt_id, token string). Missing entries fall
/// back to default_value.
struct ExplicitTableReward {
  std::map<std::pair<std::int32_t, std::vector<TokenId>>, double> table;
  double default_value = 0.0;
};

struct RewardSpec {
  std::variant<HashLeafReward, NeedleReward, TokenPreferenceReward,
               ExplicitTableReward>
      family = HashLeafReward{};

  /// Clamps family parameters into [0, r_max]; construction-time operation
  /// so that evaluation stays a pure lookup.
  void clamp_to(double r_max);
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Appends a token. Throws StepOverflow from a terminal state, and
/// InvalidConfig for a token outside the vocabulary.
Prefix transition(const MdpSpec& spec, const Prefix& s, TokenId a);

/// Builds a trajectory from tokens, computing the `complete` flag.
Trajectory make_trajectory(const MdpSpec& spec, std::int32_t prompt_id,
                           std::vector<TokenId> tokens);

/// Terminal reward of a complete trajectory. Throws IncompleteTrajectory
/// if generation has not finished; always returns a value in [0, r_max].
double evaluate_reward(const MdpSpec& spec, const RewardSpec& reward,
                       const Trajectory& tau);

/// Calls fn for every complete trajectory of the prompt, in lexicographic
/// token order. Throws TooLarge if the tree exceeds node_cap visited nodes.
void for_each_trajectory(const MdpSpec& spec, std::int32_t prompt_id,
                         const std::function<void(const Trajectory&)>& fn,
                         std::int64_t node_cap = kDefaultNodeCap);

/// Materialized variant of for_each_trajectory.
std::vector<Trajectory> enumerate_trajectories(
    const MdpSpec& spec, std::int32_t prompt_id,
    std::int64_t node_cap = kDefaultNodeCap);

/// Number of non-root nodes in one prompt's generation tree (every prefix a
/// generator could materialize). Throws TooLarge beyond node_cap.
std::int64_t count_tree_nodes(const MdpSpec& spec, std::int32_t prompt_id,
                              std::int64_t node_cap = kDefaultNodeCap);

}  // namespace iro
