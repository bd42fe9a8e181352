#include "iro/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "iro/oracle.hpp"
#include "iro/parallel.hpp"
#include "iro/rng.hpp"

namespace iro::analysis {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw InvalidConfig(msg);
}

int chunk_steps(int horizon, int chunk_length, const char* who) {
  if (horizon < 1 || chunk_length < 1)
    throw InvalidConfig(std::string(who) + ": horizon and chunk_length must be positive");
  if (horizon % chunk_length != 0)
    throw IndivisibleChunk(std::string(who) + ": chunk_length " +
                           std::to_string(chunk_length) +
                           " does not divide horizon " +
                           std::to_string(horizon));
  return horizon / chunk_length;
}

/// Deterministic iteration order over a prefix-keyed map.
template <typename V>
std::vector<const Prefix*> sorted_keys(const PrefixMap<V>& m) {
  std::vector<const Prefix*> keys;
  keys.reserve(m.size());
  for (const auto& [k, v] : m) keys.push_back(&k);
  std::sort(keys.begin(), keys.end(), [](const Prefix* a, const Prefix* b) {
    if (a->prompt_id != b->prompt_id) return a->prompt_id < b->prompt_id;
    return a->tokens < b->tokens;
  });
  return keys;
}

struct TrialSlot {
  unsigned char success = 0;
  CostLedger ledger;
};

SuccessEstimate reduce_trials(std::vector<TrialSlot>&& slots) {
  SuccessEstimate out;
  out.trials = static_cast<std::int64_t>(slots.size());
  std::int64_t hits = 0;
  for (const TrialSlot& s : slots) {
    hits += s.success;
    out.ledger.merge(s.ledger);
  }
  out.rate = static_cast<double>(hits) / static_cast<double>(out.trials);
  out.std_error =
      std::sqrt(out.rate * (1.0 - out.rate) / static_cast<double>(out.trials));
  return out;
}

/// Optimal return per prompt root, for success tests against the best leaf.
std::vector<double> per_prompt_optimum(const MdpSpec& spec,
                                       const ValueTable& gold) {
  std::vector<double> out;
  const std::size_t n = spec.prompts.empty() ? 1 : spec.prompts.size();
  for (std::size_t p = 0; p < n; ++p)
    out.push_back(gold.at(spec.initial_state(static_cast<std::int32_t>(p))));
  return out;
}

}  // namespace

double bon_success_prob(int vocab_size, int horizon, std::int64_t n,
                        bool exact) {
  require(vocab_size >= 1, "bon_success_prob: vocab_size must be positive");
  require(horizon >= 1, "bon_success_prob: horizon must be positive");
  require(n >= 1, "bon_success_prob: n must be positive");
  const double p_leaf = std::pow(static_cast<double>(vocab_size),
                                 -static_cast<double>(horizon));
  if (!exact) return static_cast<double>(n) * p_leaf;
  return 1.0 - std::pow(1.0 - p_leaf, static_cast<double>(n));
}

double iro_success_prob(int vocab_size, int horizon, int chunk_length,
                        std::int64_t u) {
  require(vocab_size >= 1, "iro_success_prob: vocab_size must be positive");
  require(u >= 1, "iro_success_prob: u must be positive");
  const int steps = chunk_steps(horizon, chunk_length, "iro_success_prob");
  const double p_chunk = std::pow(static_cast<double>(vocab_size),
                                  -static_cast<double>(chunk_length));
  const double per_step = 1.0 - std::pow(1.0 - p_chunk, static_cast<double>(u));
  return std::pow(per_step, static_cast<double>(steps));
}

std::int64_t match_budget(std::int64_t u, int horizon, int chunk_length) {
  require(u >= 1, "match_budget: u must be positive");
  const int steps = chunk_steps(horizon, chunk_length, "match_budget");
  std::int64_t n = 1;
  for (int i = 0; i < steps; ++i) {
    if (n > std::numeric_limits<std::int64_t>::max() / u)
      throw TooLarge("match_budget: u^(horizon/chunk_length) overflows");
    n *= u;
  }
  return n;
}

CostRatios cost_ratios(int horizon, int chunk_length, int iterations,
                       int beam_width, int successors) {
  const int steps = chunk_steps(horizon, chunk_length, "cost_ratios");
  require(iterations >= 1, "cost_ratios: iterations must be positive");
  require(beam_width >= 1 && successors >= 1,
          "cost_ratios: beam_width and successors must be positive");
  const double pool = static_cast<double>(beam_width) * successors;
  CostRatios r;
  r.token_ratio = std::pow(pool, static_cast<double>(steps - 1));
  r.query_ratio = r.token_ratio * static_cast<double>(chunk_length) /
                  (static_cast<double>(horizon) * iterations);
  return r;
}

CostComparison budget_matched_costs(int horizon, int chunk_length,
                                    int iterations, int beam_width,
                                    int successors) {
  const int steps = chunk_steps(horizon, chunk_length, "budget_matched_costs");
  require(iterations >= 1, "budget_matched_costs: iterations must be positive");
  require(beam_width >= 1 && successors >= 1,
          "budget_matched_costs: beam_width and successors must be positive");

  CostComparison cmp;
  cmp.guided.u = static_cast<std::int64_t>(beam_width) * successors;
  cmp.guided.beam_width = beam_width;
  cmp.guided.successors = successors;
  cmp.guided.chunk_length = chunk_length;
  cmp.guided.iterations = iterations;
  cmp.guided.token_cost = static_cast<double>(cmp.guided.u) * horizon;
  cmp.guided.query_cost =
      static_cast<double>(cmp.guided.u) * iterations * steps;

  cmp.bon.n = match_budget(cmp.guided.u, horizon, chunk_length);
  cmp.bon.query_cost = static_cast<double>(cmp.bon.n);
  cmp.bon.token_cost = static_cast<double>(cmp.bon.n) * horizon;

  cmp.ratios.token_ratio = cmp.bon.token_cost / cmp.guided.token_cost;
  cmp.ratios.query_ratio = cmp.bon.query_cost / cmp.guided.query_cost;
  return cmp;
}

ConvergenceBound convergence_bound(const ConvergenceBoundInputs& in,
                                   BoundForm form) {
  require(in.r_max > 0.0, "convergence_bound: r_max must be positive");
  require(in.horizon >= 1, "convergence_bound: horizon must be positive");
  require(in.iterations >= 2, "convergence_bound: needs at least 2 iterations");
  require(in.concentrability > 1.0,
          "convergence_bound: concentrability must exceed 1");
  require(in.samples >= 1, "convergence_bound: samples must be positive");
  require(in.fn_class_size >= 1.0,
          "convergence_bound: fn_class_size must be at least 1");
  require(in.delta > 0.0 && in.delta < 1.0,
          "convergence_bound: delta must lie in (0,1)");

  const double t = static_cast<double>(in.iterations);
  const double h = static_cast<double>(in.horizon);
  const double m = static_cast<double>(in.samples);

  ConvergenceBound b;
  b.optimization_term = 2.0 * std::sqrt(in.r_max * in.r_max * h * h *
                                        std::log(t) *
                                        std::log(in.concentrability) / t);
  const double union_factor = form == BoundForm::FullConstants ? 2.0 : 1.0;
  const double deviation_constant =
      form == BoundForm::FullConstants ? 256.0 : 1.0;
  b.estimation_term =
      2.0 * h *
      std::sqrt(in.concentrability * deviation_constant * in.r_max *
                in.r_max / m *
                std::log(union_factor * t * in.fn_class_size / in.delta));
  b.total = b.optimization_term + b.estimation_term;
  return b;
}

GapDecomposition gap_decomposition(const MdpSpec& spec,
                                   const RewardSpec& reward,
                                   const PolicyFn& pi_star,
                                   const PolicyFn& pi_hat,
                                   const ValueFn& v_hat,
                                   std::int64_t node_cap) {
  const oracle::VisitationMeasure d = oracle::visitation(spec, pi_star, node_cap);
  const oracle::PolicyEvaluation pe =
      oracle::policy_values(spec, reward, pi_hat, node_cap);

  GapDecomposition out;
  for (const auto& level : d.levels) {
    for (const Prefix* s : sorted_keys(level)) {
      double mass = 0.0;
      for (double v : level.at(*s)) mass += v;
      if (mass <= 0.0) continue;

      const std::vector<double> p_star = oracle::policy_row(spec, pi_star, *s);
      const std::vector<double> p_hat = oracle::policy_row(spec, pi_hat, *s);
      const std::vector<double>& q = pe.q.at(*s);

      double fitted = 0.0;
      double residual = 0.0;
      for (int a = 0; a < spec.vocab_size; ++a) {
        const double diff = p_star[a] - p_hat[a];
        if (diff == 0.0) continue;
        const double q_hat = v_hat.evaluate(transition(spec, *s, a));
        fitted += q_hat * diff;
        residual += (q[a] - q_hat) * diff;
      }
      out.fitted_advantage += mass * fitted;
      out.estimation_residual += mass * residual;
    }
  }
  out.gap = oracle::exact_return(spec, reward, pi_star, node_cap) -
            oracle::exact_return(spec, reward, pi_hat, node_cap);
  return out;
}

SuccessEstimate estimate_bon_success(const MdpSpec& spec,
                                     const RewardSpec& reward, std::int64_t n,
                                     std::int64_t trials, std::uint64_t seed,
                                     int workers) {
  spec.validate();
  require(n >= 1, "estimate_bon_success: n must be positive");
  require(trials >= 1, "estimate_bon_success: trials must be positive");
  require(!spec.terminal_token.has_value(),
          "estimate_bon_success: fixed-length instances only");

  const ValueTable gold = oracle::optimal_values(spec, reward);
  const std::vector<double> best = per_prompt_optimum(spec, gold);
  const std::int64_t n_prompts = static_cast<std::int64_t>(best.size());

  std::vector<TrialSlot> slots(static_cast<std::size_t>(trials));
  parallel_for(trials, workers, [&](std::int64_t i) {
    RngStream rng(seed, "bon_trial", static_cast<std::uint64_t>(i));
    const auto prompt = static_cast<std::int32_t>(i % n_prompts);
    TrialSlot& slot = slots[static_cast<std::size_t>(i)];
    double best_seen = -std::numeric_limits<double>::infinity();
    for (std::int64_t k = 0; k < n; ++k) {
      Prefix cur = spec.initial_state(prompt);
      for (int h = 0; h < spec.horizon; ++h) {
        const auto a = static_cast<TokenId>(rng.next_below(
            static_cast<std::uint64_t>(spec.vocab_size)));
        cur = transition(spec, cur, a);
        slot.ledger.tokens_generated += 1;
      }
      Trajectory traj = make_trajectory(spec, prompt, cur.tokens);
      best_seen = std::max(best_seen, evaluate_reward(spec, reward, traj));
      slot.ledger.reward_queries += 1;
    }
    slot.success = best_seen >= best[static_cast<std::size_t>(prompt)] - 1e-9;
  });
  return reduce_trials(std::move(slots));
}

SuccessEstimate estimate_guided_success(const MdpSpec& spec,
                                        const RewardSpec& reward,
                                        int chunk_length, std::int64_t u,
                                        int iterations, std::int64_t trials,
                                        std::uint64_t seed, int workers) {
  spec.validate();
  const int steps =
      chunk_steps(spec.horizon, chunk_length, "estimate_guided_success");
  require(u >= 1, "estimate_guided_success: u must be positive");
  require(iterations >= 1, "estimate_guided_success: iterations must be positive");
  require(trials >= 1, "estimate_guided_success: trials must be positive");
  require(!spec.terminal_token.has_value(),
          "estimate_guided_success: fixed-length instances only");

  const ValueTable gold = oracle::optimal_values(spec, reward);
  const std::vector<double> best = per_prompt_optimum(spec, gold);
  const std::int64_t n_prompts = static_cast<std::int64_t>(best.size());

  std::vector<TrialSlot> slots(static_cast<std::size_t>(trials));
  parallel_for(trials, workers, [&](std::int64_t i) {
    RngStream rng(seed, "guided_trial", static_cast<std::uint64_t>(i));
    const auto prompt = static_cast<std::int32_t>(i % n_prompts);
    TrialSlot& slot = slots[static_cast<std::size_t>(i)];
    Prefix cur = spec.initial_state(prompt);
    for (int step = 0; step < steps; ++step) {
      Prefix chosen;
      double chosen_value = -std::numeric_limits<double>::infinity();
      for (std::int64_t k = 0; k < u; ++k) {
        Prefix child = cur;
        for (int h = 0; h < chunk_length; ++h) {
          const auto a = static_cast<TokenId>(rng.next_below(
              static_cast<std::uint64_t>(spec.vocab_size)));
          child = transition(spec, child, a);
          slot.ledger.tokens_generated += 1;
        }
        slot.ledger.value_queries += iterations;
        const double value = gold.at(child);
        if (value > chosen_value) {
          chosen_value = value;
          chosen = std::move(child);
        }
      }
      cur = std::move(chosen);
    }
    Trajectory traj = make_trajectory(spec, prompt, cur.tokens);
    slot.success = evaluate_reward(spec, reward, traj) >=
                   best[static_cast<std::size_t>(prompt)] - 1e-9;
  });
  return reduce_trials(std::move(slots));
}

}  // namespace iro::analysis
