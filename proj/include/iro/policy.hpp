#pragma once

#include <memory>
#include <variant>
#include <vector>

#include "iro/ledger.hpp"
#include "iro/mdp.hpp"
#include "iro/prefix_map.hpp"
#include "iro/rng.hpp"
#include "iro/value_fn.hpp"

namespace iro {

// ---------------------------------------------------------------------------
// Base policies
// ---------------------------------------------------------------------------

struct UniformBase {};

/// Frozen pseudo-random policy: per-state logits are hashed standard
/// normals, turned into a softmax at the given temperature.
struct SeededLogitsBase {
  std::uint64_t seed = 0;
  double temperature = 1.0;
};

/// Fully explicit rows keyed by prefix; missing rows are an error.
struct ExplicitTableBase {
  PrefixMap<std::vector<double>> rows;
};

struct BasePolicy {
  std::variant<UniformBase, SeededLogitsBase, ExplicitTableBase> kind =
      UniformBase{};
};

/// Next-token distribution of the base policy at an interior prefix.
std::vector<double> base_dist(const MdpSpec& spec, const BasePolicy& base,
                              const Prefix& s);

PolicyFn as_policy_fn(const MdpSpec& spec, const BasePolicy& base);

// ---------------------------------------------------------------------------
// Guidance stacks
// ---------------------------------------------------------------------------

struct GuidanceEntry {
  std::shared_ptr<const ValueFn> value_fn;
  double beta = 1.0;
};

/**
 * The accumulated guidance of an iterative run: one fitted value function
 * per completed iteration with its inverse weight. An empty stack leaves
 * the base policy untouched.
 */
struct GuidanceStack {
  std::vector<GuidanceEntry> entries;
  /// When set, candidate scoring in search adds the candidate's cumulative
  /// base log-probability; the exact reweighting below always includes it.
  bool include_base_logprob = false;

  /// Guidance potential sum_i V_i(s) / beta_i (0 for an empty stack).
  double score(const Prefix& s, CostLedger* ledger = nullptr) const;

  /// Appends an entry; beta must be positive.
  void push(std::shared_ptr<const ValueFn> fn, double beta);

  bool empty() const { return entries.empty(); }
  int size() const { return static_cast<int>(entries.size()); }
};

/**
 * The exact reweighted policy row at s: proportional to
 * base(a|s) * exp(sum_i V_i(s + a) / beta_i), computed with max-subtracted
 * softmax. Tokens with zero base probability keep zero probability.
 */
std::vector<double> reweighted_dist(const MdpSpec& spec,
                                    const BasePolicy& base,
                                    const GuidanceStack& stack,
                                    const Prefix& s,
                                    CostLedger* ledger = nullptr);

/// The reweighted policy as a closure (no cost accounting).
PolicyFn reweighted_policy_fn(const MdpSpec& spec, const BasePolicy& base,
                              const GuidanceStack& stack);

// ---------------------------------------------------------------------------
// Exact natural-policy-gradient step
// ---------------------------------------------------------------------------

/// Explicit policy rows for every interior node of every prompt tree.
using ExplicitPolicy = PrefixMap<std::vector<double>>;

/// One row of the KL-regularized closed form: proportional to
/// ref_row[a] * exp(q_row[a] / beta).
std::vector<double> reweight_row(const std::vector<double>& ref_row,
                                 const std::vector<double>& q_row,
                                 double beta);

/**
 * The exact KL-regularized policy update: at every interior node the new
 * row is proportional to pi(a|s) * exp(Q^pi(s,a) / beta). This is the
 * optimizer of <Q^pi, p> - beta KL(p || pi) row by row.
 */
ExplicitPolicy exact_npg_step(const MdpSpec& spec, const RewardSpec& reward,
                              const PolicyFn& pi, double beta,
                              std::int64_t node_cap = kDefaultNodeCap);

PolicyFn as_policy_fn(std::shared_ptr<const ExplicitPolicy> rows);

// ---------------------------------------------------------------------------
// Optimality check for the closed form
// ---------------------------------------------------------------------------

struct KlCheckResult {
  double closed_form_objective = 0.0;
  double best_candidate_objective = 0.0;
  /// How far the best candidate got above the closed form (<= 0 when the
  /// closed form really is the maximizer).
  double max_violation = 0.0;
  bool ok = false;
};

/**
 * Verifies that reweight_row maximizes p -> <q, p> - beta KL(p || ref) over
 * the simplex by pitting it against a numeric maximizer (projected gradient
 * ascent with restarts) plus random and perturbed candidates.
 */
KlCheckResult kl_objective_optimality_check(const std::vector<double>& ref_row,
                                            const std::vector<double>& q_row,
                                            double beta, int n_candidates,
                                            RngStream& rng, double tol = 1e-6);

/// Inverse-CDF token draw from a distribution row.
TokenId sample_token(const std::vector<double>& dist, RngStream& rng);

}  // namespace iro
