#pragma once

#include <memory>
#include <vector>

#include "iro/mdp.hpp"
#include "iro/prefix_map.hpp"

namespace iro {

/// Exact state values keyed by prefix.
struct ValueTable {
  PrefixMap<double> values;

  double at(const Prefix& p) const {
    auto it = values.find(p);
    if (it == values.end())
      throw Error("ValueTable::at: prefix not in table");
    return it->second;
  }
  bool contains(const Prefix& p) const { return values.count(p) > 0; }
};

namespace oracle {

/// Policy rows must sum to 1 within this tolerance.
inline constexpr double kPolicyRowTol = 1e-9;

/// Fetches pi's row at s and validates it is a distribution over the
/// vocabulary; throws InvalidPolicy otherwise.
std::vector<double> policy_row(const MdpSpec& spec, const PolicyFn& pi,
                               const Prefix& s);

/// Exact optimal values V* for every node of every prompt tree (terminal
/// nodes carry their reward). Throws TooLarge beyond the node cap.
ValueTable optimal_values(const MdpSpec& spec, const RewardSpec& reward,
                          std::int64_t node_cap = kDefaultNodeCap);

/// On-policy values: v covers every node, q maps each interior node to its
/// row of action values (which equal the child state values).
struct PolicyEvaluation {
  ValueTable v;
  PrefixMap<std::vector<double>> q;
};
PolicyEvaluation policy_values(const MdpSpec& spec, const RewardSpec& reward,
                               const PolicyFn& pi,
                               std::int64_t node_cap = kDefaultNodeCap);

/**
 * State-action occupancy by step. levels[h-1] maps an interior prefix at
 * step h to its row d_h(s, a) over tokens. For fixed-length instances every
 * level sums to 1; with a terminal token mass retires early.
 */
struct VisitationMeasure {
  std::vector<PrefixMap<std::vector<double>>> levels;

  /// Marginal state mass (row sum); 0 if the state never occurs.
  double state_mass(int step, const Prefix& s) const;
  /// d at (s, a); 0 if the pair never occurs.
  double at(int step, const Prefix& s, TokenId a) const;
};
VisitationMeasure visitation(const MdpSpec& spec, const PolicyFn& pi,
                             std::int64_t node_cap = kDefaultNodeCap);

/// Exact expected terminal reward of pi (prompts weighted uniformly).
double exact_return(const MdpSpec& spec, const RewardSpec& reward,
                    const PolicyFn& pi,
                    std::int64_t node_cap = kDefaultNodeCap);

/// Mean of V* over prompt roots: the best achievable return.
double optimal_return(const MdpSpec& spec, const RewardSpec& reward,
                      std::int64_t node_cap = kDefaultNodeCap);

/**
 * Exact J(pi_new) - J(pi_ref) computed as the advantage of pi_new against
 * pi_ref's action values under pi_new's own visitation, i.e. the
 * performance-difference identity rather than two return evaluations.
 */
double performance_difference(const MdpSpec& spec, const RewardSpec& reward,
                              const PolicyFn& pi_new, const PolicyFn& pi_ref,
                              std::int64_t node_cap = kDefaultNodeCap);

/**
 * First-order improvement proxy: sum over steps of
 * E_{s ~ d^{pi_ref}} <Q^{pi_ref}(s,.), pi_new(.|s) - pi_ref(.|s)>.
 * States are weighted by the reference visitation, so this differs from
 * performance_difference whenever the two occupancies diverge.
 */
double surrogate_gap(const MdpSpec& spec, const RewardSpec& reward,
                     const PolicyFn& pi_new, const PolicyFn& pi_ref,
                     std::int64_t node_cap = kDefaultNodeCap);

/**
 * Worst-case occupancy ratio max d^{pi_star} / d^{pi_base} over all step,
 * state, action triples where pi_star has mass. Throws NoCoverage if the
 * base assigns zero mass to any such triple.
 */
double concentrability(const MdpSpec& spec, const PolicyFn& pi_star,
                       const PolicyFn& pi_base,
                       std::int64_t node_cap = kDefaultNodeCap);

/**
 * Sum over steps of E_{s ~ d^{pi_weight}} KL(pi_p(.|s) || pi_q(.|s)).
 * Returns +infinity if pi_q lacks support somewhere pi_p has mass.
 */
double kl_visitation_sum(const MdpSpec& spec, const PolicyFn& pi_p,
                         const PolicyFn& pi_q, const PolicyFn& pi_weight,
                         std::int64_t node_cap = kDefaultNodeCap);

/// Deterministic policy that at each state picks the child with the highest
/// table value, breaking ties toward the lowest token id.
PolicyFn greedy_policy(const MdpSpec& spec, std::shared_ptr<const ValueTable> v);

PolicyFn uniform_policy(const MdpSpec& spec);

}  // namespace oracle
}  // namespace iro
