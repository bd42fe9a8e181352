#pragma once

#include <cstdint>
#include <vector>

#include "iro/ledger.hpp"
#include "iro/mdp.hpp"
#include "iro/policy.hpp"
#include "iro/rng.hpp"

namespace iro::search {

enum class SelectionRule {
  /// Cluster identical candidates and take the best of each cluster in
  /// round-robin order, so duplicated sequences cannot monopolize the beam.
  DiversityFirstBeam,
  /// Plain top-K by score.
  PlainBeam,
  /// K softmax(score / temperature) draws without replacement.
  StochasticSoftmax,
};

enum class FinalPick {
  /// Evaluate the reward of every finished candidate and return the best.
  ByReward,
  /// Return the candidate with the best guidance score; the reward oracle
  /// is queried once, for the returned trajectory only.
  ByValueScore,
};

enum class ExpansionMode {
  /// Chunks are sampled from the base policy.
  SampleBase,
  /// Every possible chunk is materialized (single-beam demos only).
  EnumerateAll,
};

struct SearchConfig {
  int beam_width = 2;    // parents kept per round
  int successors = 2;    // chunks grown per expanded parent
  int chunk_length = 1;  // tokens per chunk
  SelectionRule selection = SelectionRule::DiversityFirstBeam;
  double softmax_temperature = 1.0;
  FinalPick final_pick = FinalPick::ByReward;
  ExpansionMode expansion = ExpansionMode::SampleBase;

  /// Working set size: the candidate pool is rebuilt to this size each round.
  int candidates() const { return beam_width * successors; }

  void validate(const MdpSpec& spec) const;
};

struct Candidate {
  Prefix prefix;
  double score = 0.0;
  bool complete = false;
  /// Cumulative base log-probability of the generated tokens; added to the
  /// score only when the stack asks for it.
  double base_logprob = 0.0;
};

/// One scoring round as recorded in an optional trace.
struct RoundRecord {
  int round = 0;
  std::vector<Candidate> candidates;
  std::vector<int> selected;
  CostLedger ledger;
};

struct SearchTrace {
  std::vector<RoundRecord> rounds;
};

struct SearchResult {
  ScoredTrajectory best;
  CostLedger ledger;
};

/// Top-K selection used by DiversityFirstBeam; exposed for direct testing.
/// Ties order by lexicographic tokens, then original candidate index.
std::vector<int> diversity_first_select(const std::vector<Candidate>& cs,
                                        int k);

std::vector<int> plain_beam_select(const std::vector<Candidate>& cs, int k);

std::vector<int> stochastic_select(const std::vector<Candidate>& cs, int k,
                                   double temperature, RngStream& rng);

/**
 * Value-guided chunked beam search over one prompt's generation tree.
 *
 * The pool starts as beam_width * successors chunks grown from the prompt.
 * Each round scores every candidate with the guidance stack, keeps
 * beam_width parents per the selection rule, and regrows the pool by
 * extending each kept parent chunk_length tokens at a time. Finished
 * candidates are frozen rather than extended; their share of the pool is
 * redistributed round-robin over the unfinished parents. The pool is
 * replaced wholesale every round, so its size never drifts.
 */
SearchResult guided_generate(const MdpSpec& spec, const RewardSpec& reward,
                             const BasePolicy& base,
                             const GuidanceStack& stack,
                             const SearchConfig& cfg, std::int32_t prompt_id,
                             RngStream& rng, SearchTrace* trace = nullptr);

/**
 * Best-of-N: n independent base rollouts, best terminal reward, ties to the
 * lexicographically smallest token sequence. With exhaustive = true the
 * whole tree is enumerated instead (n is ignored), which is the budget
 * model's limit of sampling without replacement.
 */
SearchResult bon_generate(const MdpSpec& spec, const RewardSpec& reward,
                          const BasePolicy& base, int n,
                          std::int32_t prompt_id, RngStream& rng,
                          bool exhaustive = false,
                          std::int64_t node_cap = kDefaultNodeCap);

}  // namespace iro::search
