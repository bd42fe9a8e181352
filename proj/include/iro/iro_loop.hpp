#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "iro/ledger.hpp"
#include "iro/mdp.hpp"
#include "iro/policy.hpp"
#include "iro/search.hpp"
#include "iro/value_fn.hpp"

namespace iro {

// ---------------------------------------------------------------------------
// Beta schedules
// ---------------------------------------------------------------------------

struct BetaSchedule {
  enum class Kind { Constant, Sqrt, Explicit };
  Kind kind = Kind::Constant;
  /// Constant schedule value.
  double beta = 1.0;
  /// Sqrt schedule scale: beta_t = sqrt(t + 1) / omega. Zero means derive
  /// omega from the run context.
  double omega = 0.0;
  /// Explicit per-iteration values.
  std::vector<double> betas;
};

/// Inputs the derived Sqrt scale depends on.
struct ScheduleContext {
  int iterations = 1;
  double c_st = 0.0;
  double r_max = 1.0;
};

/**
 * omega = sqrt(2 log(c_st) / (r_max^2 log(iterations))). Throws
 * ScheduleDomain unless iterations >= 2 and c_st > 1, where the expression
 * is positive and finite.
 */
double derive_omega(const ScheduleContext& ctx);

/// Beta attached to the value function with 0-based index t. Throws
/// InvalidConfig for non-positive or missing entries.
double schedule_beta(const BetaSchedule& schedule, int t,
                     const ScheduleContext& ctx);

// ---------------------------------------------------------------------------
// Run configuration and records
// ---------------------------------------------------------------------------

struct IroConfig {
  int iterations = 1;
  int samples_per_iter = 32;
  /// Prompts drawn per iteration for training data; 0 means all prompts.
  int prompt_subset_size = 0;
  search::SearchConfig search;
  bool include_base_logprob = false;
  ValueReprKind value_repr = ValueReprKind::Tabular;
  double ridge_lambda = 1e-6;
  BetaSchedule schedule;
  std::uint64_t master_seed = 0;
  /// Monte-Carlo evaluation rollouts per iteration (0 skips MC eval).
  int eval_rollouts = 0;
  /// Evaluate the exact return and gap when the tree fits the node cap.
  bool oracle_eval = true;
  /// Replace sampling with expected fits and exact reweighting: the
  /// infinite-sample limit, which reproduces the exact update chain.
  bool exact_mode = false;
  int workers = 1;
  std::int64_t node_cap = kDefaultNodeCap;

  void validate(const MdpSpec& spec) const;
};

struct IterationRecord {
  int iteration = 0;  // 1-based
  double beta = 0.0;  // weight attached to this iteration's value function
  double mean_training_reward = 0.0;
  /// Monte-Carlo estimate of the guided return (NaN when skipped).
  double mc_return_mean = 0.0;
  double mc_return_stderr = 0.0;
  /// Exact return of the reweighted policy and its gap to optimal (NaN
  /// when oracle evaluation is off or the tree is too large).
  double exact_return = 0.0;
  double exact_gap = 0.0;
  /// Training-side cost totals since iteration 1. Evaluation rollouts are
  /// instrumentation and are not charged here.
  CostLedger cumulative;
};

/// Everything the loop carries across iterations; serializable, so a run
/// can stop after any iteration and resume bit-identically.
struct IroState {
  GuidanceStack stack;
  std::vector<IterationRecord> records;
};

/**
 * The iterative reweight-then-optimize loop. Iteration t fits a value
 * function to fresh trajectories from the current guided policy, then
 * pushes it onto the stack with schedule_beta(t - 1), sharpening the
 * reweighted policy for the next round. Resuming from a prior state
 * continues at records.size() + 1 and yields the same records a single
 * uninterrupted run would have produced.
 */
IroState run_iro(const MdpSpec& spec, const RewardSpec& reward,
                 const BasePolicy& base, const IroConfig& cfg,
                 IroState resume = {});

/**
 * Monte-Carlo return of the guided policy: n generations (plain base
 * rollouts when the stack is empty, guided search otherwise), prompts
 * cycled round-robin. Returns (mean, standard error).
 */
std::pair<double, double> evaluate_policy_mc(
    const MdpSpec& spec, const RewardSpec& reward, const BasePolicy& base,
    const GuidanceStack& stack, const search::SearchConfig& search_cfg,
    int n, std::uint64_t master_seed, std::string_view purpose,
    int workers = 1);

}  // namespace iro
