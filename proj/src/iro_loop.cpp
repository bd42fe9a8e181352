#include "iro/iro_loop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "iro/oracle.hpp"
#include "iro/parallel.hpp"

namespace iro {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Tree size across all prompts, or -1 if it exceeds the cap.
std::int64_t tree_nodes_or_minus_one(const MdpSpec& spec,
                                     std::int64_t node_cap) {
  std::int64_t total = 0;
  try {
    for (std::int32_t pid = 0; pid < spec.num_prompts(); ++pid)
      total += count_tree_nodes(spec, pid, node_cap - total);
  } catch (const TooLarge&) {
    return -1;
  }
  return total;
}

std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  double n = static_cast<double>(xs.size());
  return {mean, std::sqrt(ss / (n * (n - 1.0)))};
}

}  // namespace

double derive_omega(const ScheduleContext& ctx) {
  if (ctx.iterations < 2)
    throw ScheduleDomain("derive_omega: needs at least 2 iterations");
  if (!(ctx.c_st > 1.0))
    throw ScheduleDomain("derive_omega: needs concentrability above 1");
  if (!(ctx.r_max > 0.0))
    throw ScheduleDomain("derive_omega: needs positive r_max");
  return std::sqrt(2.0 * std::log(ctx.c_st) /
                   (ctx.r_max * ctx.r_max * std::log(ctx.iterations)));
}

double schedule_beta(const BetaSchedule& schedule, int t,
                     const ScheduleContext& ctx) {
  if (t < 0) throw InvalidConfig("schedule_beta: negative iteration index");
  switch (schedule.kind) {
    case BetaSchedule::Kind::Constant:
      if (!(schedule.beta > 0.0))
        throw InvalidConfig("schedule_beta: beta must be positive");
      return schedule.beta;
    case BetaSchedule::Kind::Sqrt: {
      double omega = schedule.omega > 0.0 ? schedule.omega : derive_omega(ctx);
      return std::sqrt(static_cast<double>(t) + 1.0) / omega;
    }
    case BetaSchedule::Kind::Explicit:
      if (t >= static_cast<int>(schedule.betas.size()))
        throw InvalidConfig("schedule_beta: no explicit beta for iteration " +
                            std::to_string(t));
      if (!(schedule.betas[t] > 0.0))
        throw InvalidConfig("schedule_beta: betas must be positive");
      return schedule.betas[t];
  }
  throw InvalidConfig("schedule_beta: unknown schedule kind");
}

void IroConfig::validate(const MdpSpec& spec) const {
  if (iterations < 1)
    throw InvalidConfig("IroConfig: iterations must be at least 1");
  if (!exact_mode && samples_per_iter < 1)
    throw InvalidConfig("IroConfig: samples_per_iter must be at least 1");
  if (prompt_subset_size < 0 || prompt_subset_size > spec.num_prompts())
    throw InvalidConfig("IroConfig: prompt_subset_size out of range");
  if (eval_rollouts < 0)
    throw InvalidConfig("IroConfig: eval_rollouts must be nonnegative");
  if (workers < 1) throw InvalidConfig("IroConfig: workers must be positive");
  if (ridge_lambda < 0.0)
    throw InvalidConfig("IroConfig: ridge_lambda must be nonnegative");
  search.validate(spec);
}

std::pair<double, double> evaluate_policy_mc(
    const MdpSpec& spec, const RewardSpec& reward, const BasePolicy& base,
    const GuidanceStack& stack, const search::SearchConfig& search_cfg,
    int n, std::uint64_t master_seed, std::string_view purpose, int workers) {
  if (n < 1) throw InvalidConfig("evaluate_policy_mc: n must be positive");
  std::vector<double> rewards(n, 0.0);
  std::string tag(purpose);
  parallel_for(n, workers, [&](std::int64_t i) {
    RngStream rng(master_seed, tag, static_cast<std::uint64_t>(i));
    std::int32_t pid = static_cast<std::int32_t>(i % spec.num_prompts());
    if (stack.empty()) {
      rewards[i] =
          search::bon_generate(spec, reward, base, 1, pid, rng).best.reward;
    } else {
      rewards[i] =
          search::guided_generate(spec, reward, base, stack, search_cfg, pid,
                                  rng)
              .best.reward;
    }
  });
  return mean_stderr(rewards);
}

IroState run_iro(const MdpSpec& spec, const RewardSpec& reward,
                 const BasePolicy& base, const IroConfig& cfg,
                 IroState resume) {
  spec.validate();
  cfg.validate(spec);
  IroState state = std::move(resume);
  state.stack.include_base_logprob = cfg.include_base_logprob;
  if (static_cast<int>(state.records.size()) != state.stack.size())
    throw InvalidConfig("run_iro: resume state records and stack disagree");

  std::int64_t tree_nodes = tree_nodes_or_minus_one(spec, cfg.node_cap);
  bool can_oracle = cfg.oracle_eval && tree_nodes >= 0;

  // The derived Sqrt scale needs the exact concentrability of the optimal
  // greedy policy against the base; that requires oracle access.
  ScheduleContext ctx{cfg.iterations, 0.0, spec.r_max};
  if (cfg.schedule.kind == BetaSchedule::Kind::Sqrt &&
      !(cfg.schedule.omega > 0.0)) {
    if (tree_nodes < 0)
      throw ScheduleDomain(
          "run_iro: derived sqrt schedule needs an enumerable tree");
    auto v_star = std::make_shared<ValueTable>(
        oracle::optimal_values(spec, reward, cfg.node_cap));
    ctx.c_st = oracle::concentrability(
        spec, oracle::greedy_policy(spec, v_star), as_policy_fn(spec, base),
        cfg.node_cap);
  }

  double j_star = kNaN;
  if (can_oracle) j_star = oracle::optimal_return(spec, reward, cfg.node_cap);

  CostLedger cumulative =
      state.records.empty() ? CostLedger{} : state.records.back().cumulative;

  // Prompts available to an iteration's data collection.
  auto iteration_prompts = [&](int t) {
    std::vector<std::int32_t> all(spec.num_prompts());
    for (std::int32_t p = 0; p < spec.num_prompts(); ++p) all[p] = p;
    if (cfg.prompt_subset_size == 0 ||
        cfg.prompt_subset_size >= spec.num_prompts())
      return all;
    RngStream rng(cfg.master_seed, "prompt_subset",
                  static_cast<std::uint64_t>(t));
    std::vector<std::int32_t> subset;
    for (int k = 0; k < cfg.prompt_subset_size; ++k) {
      std::size_t j = static_cast<std::size_t>(rng.next_below(all.size() - k));
      subset.push_back(all[j]);
      std::swap(all[j], all[all.size() - 1 - k]);
    }
    std::sort(subset.begin(), subset.end());
    return subset;
  };

  for (int t = static_cast<int>(state.records.size()) + 1;
       t <= cfg.iterations; ++t) {
    IterationRecord record;
    record.iteration = t;

    std::shared_ptr<ValueFn> fitted;
    if (cfg.exact_mode) {
      PolicyFn pi_prev = reweighted_policy_fn(spec, base, state.stack);
      fitted = std::make_shared<ValueFn>(
          expected_fit(spec, reward, pi_prev, cfg.node_cap));
      record.mean_training_reward =
          oracle::exact_return(spec, reward, pi_prev, cfg.node_cap);
    } else {
      std::vector<std::int32_t> prompts = iteration_prompts(t);
      int m = cfg.samples_per_iter;
      std::vector<ScoredTrajectory> samples(m);
      std::vector<CostLedger> ledgers(m);
      std::string tag = "train_t" + std::to_string(t);
      const GuidanceStack& stack = state.stack;
      parallel_for(m, cfg.workers, [&](std::int64_t i) {
        RngStream rng(cfg.master_seed, tag, static_cast<std::uint64_t>(i));
        std::int32_t pid = prompts[static_cast<std::size_t>(i) % prompts.size()];
        search::SearchResult res;
        if (stack.empty()) {
          res = search::bon_generate(spec, reward, base, 1, pid, rng);
        } else {
          res = search::guided_generate(spec, reward, base, stack, cfg.search,
                                        pid, rng);
          // Scoring the sample for the dataset is one more oracle call on
          // top of whatever the final pick already spent.
          ++res.ledger.reward_queries;
        }
        samples[i] = res.best;
        ledgers[i] = res.ledger;
      });

      FitDataset data;
      data.items = std::move(samples);
      double mean_reward = 0.0;
      for (int i = 0; i < m; ++i) {
        cumulative.merge(ledgers[i]);
        mean_reward += data.items[i].reward;
      }
      record.mean_training_reward = mean_reward / m;
      fitted = std::make_shared<ValueFn>(fit_value_fn(
          spec, data, {cfg.value_repr, cfg.ridge_lambda, 0.0}));
    }

    record.beta = schedule_beta(cfg.schedule, t - 1, ctx);
    state.stack.push(fitted, record.beta);

    if (cfg.eval_rollouts > 0 && !cfg.exact_mode) {
      auto [mean, se] = evaluate_policy_mc(
          spec, reward, base, state.stack, cfg.search, cfg.eval_rollouts,
          cfg.master_seed, "eval_t" + std::to_string(t), cfg.workers);
      record.mc_return_mean = mean;
      record.mc_return_stderr = se;
    } else {
      record.mc_return_mean = kNaN;
      record.mc_return_stderr = kNaN;
    }

    if (can_oracle) {
      record.exact_return = oracle::exact_return(
          spec, reward, reweighted_policy_fn(spec, base, state.stack),
          cfg.node_cap);
      record.exact_gap = j_star - record.exact_return;
    } else {
      record.exact_return = kNaN;
      record.exact_gap = kNaN;
    }

    record.cumulative = cumulative;
    state.records.push_back(std::move(record));
  }
  return state;
}

}  // namespace iro
