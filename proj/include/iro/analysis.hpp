#pragma once

#include <cstdint>

#include "iro/ledger.hpp"
#include "iro/mdp.hpp"
#include "iro/value_fn.hpp"

namespace iro::analysis {

/**
 * Probability that best-of-n sampling under a uniform base draws the unique
 * best leaf of a depth-H, branching-|A| tree. The exact form is
 * 1 - (1 - |A|^-H)^n; the approximation n / |A|^H is the first-order
 * expansion, sensible only while n is far below |A|^H.
 */
double bon_success_prob(int vocab_size, int horizon, std::int64_t n,
                        bool exact = true);

/**
 * Probability that chunked value-guided sampling draws the unique best leaf:
 * the chunk alphabet has |A|^L entries, each of the H/L chunk steps draws u
 * uniform candidates and keeps the best, so the chance is
 * (1 - (1 - |A|^-L)^u)^(H/L). Throws IndivisibleChunk when chunk_length does
 * not divide horizon.
 */
double iro_success_prob(int vocab_size, int horizon, int chunk_length,
                        std::int64_t u);

/**
 * The best-of-n budget whose success probability equals guided sampling with
 * u candidates per chunk: n = u^(H/L). Throws IndivisibleChunk, TooLarge on
 * 64-bit overflow.
 */
std::int64_t match_budget(std::int64_t u, int horizon, int chunk_length);

/// Cost quotients of budget-matched best-of-n over guided search.
struct CostRatios {
  /// BoN tokens over guided tokens: (beam_width * successors)^(H/L - 1).
  double token_ratio = 0.0;
  /// BoN reward queries over guided value queries: token_ratio * L / (H * I).
  double query_ratio = 0.0;
};

CostRatios cost_ratios(int horizon, int chunk_length, int iterations,
                       int beam_width, int successors);

/// Closed-form cost model of a budget-matched pair of runs.
struct CostComparison {
  struct BonSide {
    std::int64_t n = 0;
    double query_cost = 0.0;  // reward queries: n
    double token_cost = 0.0;  // n * H
  };
  struct GuidedSide {
    std::int64_t u = 0;  // candidate pool: beam_width * successors
    int beam_width = 0;
    int successors = 0;
    int chunk_length = 0;
    int iterations = 0;
    double query_cost = 0.0;  // value queries: u * I * H/L
    double token_cost = 0.0;  // u * H
  };
  BonSide bon;
  GuidedSide guided;
  CostRatios ratios;  // quotients of the stored costs
};

CostComparison budget_matched_costs(int horizon, int chunk_length,
                                    int iterations, int beam_width,
                                    int successors);

/// Inputs to the high-probability suboptimality bound of the iterative loop.
struct ConvergenceBoundInputs {
  double r_max = 1.0;
  int horizon = 1;
  int iterations = 2;          // T, the number of loop iterations
  double concentrability = 2.0;  // worst-case occupancy ratio, > 1
  std::int64_t samples = 1;    // m, regression samples per iteration
  double fn_class_size = 1.0;  // |F|, cells or parameters of the value class
  double delta = 0.1;          // confidence level, in (0,1)
};

/// The bound comes in two published shapes that differ only in the
/// estimation addend's constants.
enum class BoundForm {
  /// Drops the measurable-deviation constant and the union-bound factor:
  /// 2H sqrt(C r_max^2 / m * log(T|F|/delta)).
  Simplified,
  /// Keeps them: 2H sqrt(C * 256 r_max^2 / m * log(2T|F|/delta)).
  FullConstants,
};

struct ConvergenceBound {
  double optimization_term = 0.0;  // 2 sqrt(r_max^2 H^2 log T log C / T)
  double estimation_term = 0.0;
  double total = 0.0;
};

ConvergenceBound convergence_bound(const ConvergenceBoundInputs& in,
                                   BoundForm form = BoundForm::FullConstants);

/**
 * Split of the exact return gap J(pi_star) - J(pi_hat) into the part visible
 * to a fitted value function and the part it mis-estimates. With
 * Qhat(s,a) = v_hat(s + a) and expectations over pi_star's visitation:
 *   fitted_advantage      = sum_h E<Qhat, pi_star - pi_hat>,
 *   estimation_residual   = sum_h E<Q_pihat - Qhat, pi_star - pi_hat>,
 * and the two always add up to the gap.
 */
struct GapDecomposition {
  double fitted_advantage = 0.0;
  double estimation_residual = 0.0;
  double gap = 0.0;
};

GapDecomposition gap_decomposition(const MdpSpec& spec,
                                   const RewardSpec& reward,
                                   const PolicyFn& pi_star,
                                   const PolicyFn& pi_hat,
                                   const ValueFn& v_hat,
                                   std::int64_t node_cap = kDefaultNodeCap);

/// Monte-Carlo success-rate estimate with the summed cost ledger.
struct SuccessEstimate {
  double rate = 0.0;
  double std_error = 0.0;
  std::int64_t trials = 0;
  CostLedger ledger;
};

/**
 * Empirical counterpart of bon_success_prob: each trial draws n uniform
 * rollouts and succeeds when the best of them attains the optimal return.
 * Charges n * H tokens and n reward queries per trial.
 */
SuccessEstimate estimate_bon_success(const MdpSpec& spec,
                                     const RewardSpec& reward, std::int64_t n,
                                     std::int64_t trials, std::uint64_t seed,
                                     int workers = 1);

/**
 * Empirical counterpart of iro_success_prob, mirroring its probabilistic
 * model exactly: at each of the H/L chunk steps the trial draws u uniform
 * chunks with replacement and keeps the one whose successor state has the
 * highest exact optimal value. Charges u * L tokens and u * iterations value
 * queries per step and no reward queries. Fixed-length instances only.
 */
SuccessEstimate estimate_guided_success(const MdpSpec& spec,
                                        const RewardSpec& reward,
                                        int chunk_length, std::int64_t u,
                                        int iterations, std::int64_t trials,
                                        std::uint64_t seed, int workers = 1);

}  // namespace iro::analysis
