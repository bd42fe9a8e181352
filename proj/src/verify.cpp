#include "iro/verify.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "iro/analysis.hpp"
#include "iro/io.hpp"
#include "iro/mdp.hpp"
#include "iro/oracle.hpp"
#include "iro/policy.hpp"
#include "iro/rng.hpp"
#include "iro/value_fn.hpp"

namespace iro::verify {

namespace {

MdpSpec small_spec(int vocab, int horizon) {
  MdpSpec spec;
  spec.vocab_size = vocab;
  spec.horizon = horizon;
  spec.r_max = 1.0;
  return spec;
}

std::vector<double> random_simplex_row(int n, RngStream& rng) {
  std::vector<double> row(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(rng.next_gaussian());
    sum += v;
  }
  for (double& v : row) v /= sum;
  return row;
}

/// Leaf rewards on the grid {0, 1/4, 1/2, 3/4, 1}: quantized margins keep
/// the exact update's convergence fast enough to check tight tolerances.
RewardSpec grid_reward(const MdpSpec& spec, std::uint64_t seed) {
  ExplicitTableReward table;
  std::int64_t leaf = 0;
  for (const Trajectory& tau : enumerate_trajectories(spec, 0)) {
    RngStream rng(seed, "grid_leaf", static_cast<std::uint64_t>(leaf++));
    table.table[{0, tau.tokens}] = static_cast<double>(rng.next_below(5)) / 4.0;
  }
  RewardSpec reward;
  reward.family = table;
  return reward;
}

PropertyResult check_kl_closed_form(std::uint64_t seed) {
  PropertyResult r;
  r.name = "kl-closed-form";
  double worst = -1e300;
  int failures = 0;
  for (int i = 0; i < 100; ++i) {
    RngStream rng(seed, "kl_check", static_cast<std::uint64_t>(i));
    const int n = 2 + static_cast<int>(rng.next_below(5));
    const std::vector<double> ref = random_simplex_row(n, rng);
    std::vector<double> q(static_cast<std::size_t>(n));
    for (double& v : q) v = 2.0 * rng.next_double() - 1.0;
    const double beta = std::exp(2.0 * rng.next_double() - 1.0);
    KlCheckResult res = kl_objective_optimality_check(ref, q, beta, 40, rng);
    worst = std::max(worst, res.max_violation);
    if (!res.ok) ++failures;
  }
  r.pass = failures == 0;
  r.detail = "100 random rows, worst violation " + io::format_double(worst) +
             " (tolerance 1e-6), failures " + std::to_string(failures);
  return r;
}

PropertyResult check_npg_monotone(std::uint64_t seed) {
  PropertyResult r;
  r.name = "npg-monotone";
  int converged = 0;
  double worst_gap = 0.0;
  double worst_dip = 0.0;
  const int instances = 20;
  for (int i = 0; i < instances; ++i) {
    MdpSpec spec = small_spec(3, 4);
    RewardSpec reward = grid_reward(spec, seed + static_cast<std::uint64_t>(i));
    const double j_star = oracle::optimal_return(spec, reward);

    PolicyFn pi = oracle::uniform_policy(spec);
    double j_prev = oracle::exact_return(spec, reward, pi);
    double gap = j_star - j_prev;
    for (int t = 0; t < 50 && gap >= 1e-6; ++t) {
      auto next = std::make_shared<ExplicitPolicy>(
          exact_npg_step(spec, reward, pi, 0.1));
      pi = as_policy_fn(next);
      const double j = oracle::exact_return(spec, reward, pi);
      worst_dip = std::min(worst_dip, j - j_prev);
      j_prev = j;
      gap = j_star - j;
    }
    worst_gap = std::max(worst_gap, gap);
    if (gap < 1e-6 && worst_dip > -1e-12) ++converged;
  }
  r.pass = converged == instances;
  r.detail = std::to_string(converged) + "/" + std::to_string(instances) +
             " instances converged below 1e-6 within 50 steps; worst final "
             "gap " + io::format_double(worst_gap) + ", worst dip " +
             io::format_double(worst_dip);
  return r;
}

PropertyResult check_value_fit(std::uint64_t seed) {
  PropertyResult r;
  r.name = "value-fit";
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    MdpSpec spec = small_spec(2 + i % 2, 2 + i % 2);
    RewardSpec reward;
    reward.family = HashLeafReward{seed + static_cast<std::uint64_t>(i), 1.0};
    BasePolicy base;
    base.kind = SeededLogitsBase{seed + static_cast<std::uint64_t>(i), 1.0};
    PolicyFn pi = as_policy_fn(spec, base);

    ValueFn fit = expected_fit(spec, reward, pi);
    oracle::PolicyEvaluation pe = oracle::policy_values(spec, reward, pi);
    for (const auto& [prefix, v] : pe.v.values)
      worst = std::max(worst, std::abs(fit.evaluate(prefix) - v));
  }
  r.pass = worst < 1e-10;
  r.detail = "probability-weighted fit vs exact values at every prefix: max "
             "error " + io::format_double(worst) + " (tolerance 1e-10)";
  return r;
}

PropertyResult check_gap_decomposition(std::uint64_t seed) {
  PropertyResult r;
  r.name = "gap-decomposition";
  double worst_identity = 0.0;
  double worst_residual = 0.0;
  for (int i = 0; i < 50; ++i) {
    MdpSpec spec = small_spec(2 + i % 2, 2 + i % 3);
    RewardSpec reward;
    reward.family = HashLeafReward{seed + static_cast<std::uint64_t>(i), 1.0};
    BasePolicy star_base;
    star_base.kind = SeededLogitsBase{seed + 1000 + static_cast<std::uint64_t>(i), 0.8};
    BasePolicy hat_base;
    hat_base.kind = SeededLogitsBase{seed + 2000 + static_cast<std::uint64_t>(i), 1.2};
    PolicyFn pi_star = as_policy_fn(spec, star_base);
    PolicyFn pi_hat = as_policy_fn(spec, hat_base);

    // Mismatched estimate: identity must still close.
    ValueFn v_mis = expected_fit(spec, reward, oracle::uniform_policy(spec));
    analysis::GapDecomposition d =
        analysis::gap_decomposition(spec, reward, pi_star, pi_hat, v_mis);
    worst_identity = std::max(
        worst_identity,
        std::abs(d.fitted_advantage + d.estimation_residual - d.gap));

    // Exact on-policy estimate: the residual term must vanish.
    ValueFn v_exact = expected_fit(spec, reward, pi_hat);
    analysis::GapDecomposition e =
        analysis::gap_decomposition(spec, reward, pi_star, pi_hat, v_exact);
    worst_residual = std::max(worst_residual, std::abs(e.estimation_residual));
  }
  r.pass = worst_identity < 1e-10 && worst_residual < 1e-10;
  r.detail = "50 instances: max |eps1 + eps2 - gap| = " +
             io::format_double(worst_identity) +
             ", max residual with exact fit = " +
             io::format_double(worst_residual) + " (tolerance 1e-10)";
  return r;
}

PropertyResult check_kl_concentrability(std::uint64_t seed) {
  PropertyResult r;
  r.name = "kl-concentrability";
  double worst_slack = 1e300;
  bool ok = true;
  for (int i = 0; i < 10; ++i) {
    MdpSpec spec = small_spec(2 + i % 2, 2 + i % 3);
    RewardSpec reward;
    reward.family = HashLeafReward{seed + static_cast<std::uint64_t>(i), 1.0};
    BasePolicy base;
    base.kind = SeededLogitsBase{seed + 500 + static_cast<std::uint64_t>(i),
                                 i % 2 == 0 ? 0.8 : 1.2};
    PolicyFn pi_base = as_policy_fn(spec, base);
    auto table =
        std::make_shared<ValueTable>(oracle::optimal_values(spec, reward));
    PolicyFn pi_star = oracle::greedy_policy(spec, table);

    const double c = oracle::concentrability(spec, pi_star, pi_base);
    const double kl_sum =
        oracle::kl_visitation_sum(spec, pi_star, pi_base, pi_star);
    const double bound = spec.horizon * std::log(c);
    ok = ok && kl_sum <= bound + 1e-9;
    worst_slack = std::min(worst_slack, bound - kl_sum);
  }
  r.pass = ok;
  r.detail = "sum_h E KL(pi_star || base) <= H log C on 10 instances; "
             "smallest slack " + io::format_double(worst_slack);
  return r;
}

PropertyResult check_budget_matching(std::uint64_t seed) {
  PropertyResult r;
  r.name = "budget-matching";
  bool ok = true;
  std::string notes;

  // Matched budgets invert exactly.
  for (std::int64_t u : {2, 3, 4}) {
    const std::int64_t n = analysis::match_budget(u, 6, 2);
    ok = ok && n == u * u * u;
  }

  // Token ledgers of matched runs differ by the closed-form ratio on the
  // whole grid, measured from single-trial simulator ledgers.
  for (int vocab : {2, 5}) {
    for (int horizon : {4, 6}) {
      for (int chunk : {1, 2}) {
        MdpSpec spec = small_spec(vocab, horizon);
        NeedleReward needle;
        needle.target = make_trajectory(
            spec, 0,
            std::vector<TokenId>(static_cast<std::size_t>(horizon), 0));
        RewardSpec reward;
        reward.family = needle;
        const std::int64_t n = analysis::match_budget(4, horizon, chunk);
        analysis::SuccessEstimate eb =
            analysis::estimate_bon_success(spec, reward, n, 1, seed);
        analysis::SuccessEstimate eg = analysis::estimate_guided_success(
            spec, reward, chunk, 4, 1, 1, seed);
        const double measured =
            static_cast<double>(eb.ledger.tokens_generated) /
            static_cast<double>(eg.ledger.tokens_generated);
        const double closed =
            analysis::cost_ratios(horizon, chunk, 1, 2, 2).token_ratio;
        ok = ok && measured == closed;
      }
    }
  }

  // Success probabilities of a matched pair agree within Monte-Carlo noise
  // in the sparse regime where the matching approximation is valid.
  {
    MdpSpec spec = small_spec(5, 6);
    NeedleReward needle;
    needle.target = make_trajectory(spec, 0, {0, 0, 0, 0, 0, 0});
    RewardSpec reward;
    reward.family = needle;
    const std::int64_t trials = 4000;
    analysis::SuccessEstimate eb = analysis::estimate_bon_success(
        spec, reward, analysis::match_budget(4, 6, 2), trials, seed + 7, 2);
    analysis::SuccessEstimate eg = analysis::estimate_guided_success(
        spec, reward, 2, 4, 1, trials, seed + 8, 2);
    const double sigma = std::sqrt(eb.std_error * eb.std_error +
                                   eg.std_error * eg.std_error);
    const double diff = std::abs(eb.rate - eg.rate);
    ok = ok && diff <= 3.0 * sigma;
    notes = "matched success rates " + io::format_double(eb.rate) + " vs " +
            io::format_double(eg.rate) + " (|diff| " +
            io::format_double(diff) + " <= 3 sigma " +
            io::format_double(3.0 * sigma) + ")";
  }

  r.pass = ok;
  r.detail = "budget round-trips and exact token-ratio identities on the "
             "{2,5}x{4,6}x{1,2} grid; " + notes;
  return r;
}

using SuiteFn = PropertyResult (*)(std::uint64_t);

struct SuiteEntry {
  const char* name;
  SuiteFn fn;
};

constexpr SuiteEntry kSuites[] = {
    {"kl-closed-form", check_kl_closed_form},
    {"npg-monotone", check_npg_monotone},
    {"value-fit", check_value_fit},
    {"gap-decomposition", check_gap_decomposition},
    {"kl-concentrability", check_kl_concentrability},
    {"budget-matching", check_budget_matching},
};

}  // namespace

std::vector<std::string> suite_names() {
  std::vector<std::string> names;
  for (const SuiteEntry& s : kSuites) names.emplace_back(s.name);
  return names;
}

SuiteReport run_suite(const std::string& selector, std::uint64_t seed) {
  SuiteReport report;
  if (selector == "all") {
    for (const SuiteEntry& s : kSuites) report.results.push_back(s.fn(seed));
    return report;
  }
  for (const SuiteEntry& s : kSuites) {
    if (selector == s.name) {
      report.results.push_back(s.fn(seed));
      return report;
    }
  }
  std::string known = "all";
  for (const SuiteEntry& s : kSuites) known += std::string(", ") + s.name;
  throw InvalidConfig("run_suite: unknown suite '" + selector +
                      "' (known: " + known + ")");
}

}  // namespace iro::verify
