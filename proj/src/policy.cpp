#include "iro/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iro/oracle.hpp"

namespace iro {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Softmax over log weights with max subtraction; -inf entries stay zero.
std::vector<double> softmax(const std::vector<double>& logw) {
  double top = kNegInf;
  for (double w : logw) top = std::max(top, w);
  if (top == kNegInf)
    throw InvalidPolicy("softmax: no token has positive weight");
  std::vector<double> out(logw.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    if (logw[i] == kNegInf) continue;
    out[i] = std::exp(logw[i] - top);
    z += out[i];
  }
  for (double& p : out) p /= z;
  return out;
}

}  // namespace

std::vector<double> base_dist(const MdpSpec& spec, const BasePolicy& base,
                              const Prefix& s) {
  if (std::holds_alternative<UniformBase>(base.kind)) {
    return std::vector<double>(spec.vocab_size, 1.0 / spec.vocab_size);
  }
  if (const auto* seeded = std::get_if<SeededLogitsBase>(&base.kind)) {
    if (!(seeded->temperature > 0.0))
      throw InvalidConfig("base_dist: temperature must be positive");
    std::uint64_t hp =
        hash_prefix(hash_combine(hash_string("base_logits"), seeded->seed), s);
    std::vector<double> logw(spec.vocab_size);
    for (TokenId a = 0; a < spec.vocab_size; ++a) {
      double u1 = to_unit_double(hash_combine(hp, 2 * a));
      double u2 = to_unit_double(hash_combine(hp, 2 * a + 1));
      if (u1 <= 0.0) u1 = 0x1.0p-53;
      double z = std::sqrt(-2.0 * std::log(u1)) *
                 std::cos(2.0 * std::numbers::pi * u2);
      logw[a] = z / seeded->temperature;
    }
    return softmax(logw);
  }
  const auto& table = std::get<ExplicitTableBase>(base.kind);
  auto it = table.rows.find(s);
  if (it == table.rows.end())
    throw InvalidPolicy("base_dist: explicit base has no row at '" +
                        token_string(s.tokens) + "'");
  return it->second;
}

PolicyFn as_policy_fn(const MdpSpec& spec, const BasePolicy& base) {
  return [spec, base](const Prefix& s) { return base_dist(spec, base, s); };
}

void GuidanceStack::push(std::shared_ptr<const ValueFn> fn, double beta) {
  if (!fn) throw InvalidConfig("GuidanceStack::push: null value function");
  if (!(beta > 0.0))
    throw InvalidConfig("GuidanceStack::push: beta must be positive");
  entries.push_back({std::move(fn), beta});
}

double GuidanceStack::score(const Prefix& s, CostLedger* ledger) const {
  double total = 0.0;
  for (const auto& entry : entries)
    total += entry.value_fn->evaluate(s, ledger) / entry.beta;
  return total;
}

std::vector<double> reweighted_dist(const MdpSpec& spec,
                                    const BasePolicy& base,
                                    const GuidanceStack& stack,
                                    const Prefix& s, CostLedger* ledger) {
  std::vector<double> row = base_dist(spec, base, s);
  if (stack.empty()) return row;
  std::vector<double> logw(row.size(), kNegInf);
  for (TokenId a = 0; a < spec.vocab_size; ++a) {
    if (row[a] <= 0.0) continue;
    Prefix child = s;
    child.tokens.push_back(a);
    logw[a] = std::log(row[a]) + stack.score(child, ledger);
  }
  return softmax(logw);
}

PolicyFn reweighted_policy_fn(const MdpSpec& spec, const BasePolicy& base,
                              const GuidanceStack& stack) {
  return [spec, base, stack](const Prefix& s) {
    return reweighted_dist(spec, base, stack, s, nullptr);
  };
}

std::vector<double> reweight_row(const std::vector<double>& ref_row,
                                 const std::vector<double>& q_row,
                                 double beta) {
  if (!(beta > 0.0))
    throw InvalidConfig("reweight_row: beta must be positive");
  if (ref_row.size() != q_row.size())
    throw InvalidConfig("reweight_row: row sizes differ");
  std::vector<double> logw(ref_row.size(), kNegInf);
  for (std::size_t a = 0; a < ref_row.size(); ++a)
    if (ref_row[a] > 0.0) logw[a] = std::log(ref_row[a]) + q_row[a] / beta;
  return softmax(logw);
}

ExplicitPolicy exact_npg_step(const MdpSpec& spec, const RewardSpec& reward,
                              const PolicyFn& pi, double beta,
                              std::int64_t node_cap) {
  oracle::PolicyEvaluation eval =
      oracle::policy_values(spec, reward, pi, node_cap);
  ExplicitPolicy out;
  out.reserve(eval.q.size());
  for (const auto& [s, q_row] : eval.q) {
    std::vector<double> row = oracle::policy_row(spec, pi, s);
    out.emplace(s, reweight_row(row, q_row, beta));
  }
  return out;
}

PolicyFn as_policy_fn(std::shared_ptr<const ExplicitPolicy> rows) {
  return [rows](const Prefix& s) {
    auto it = rows->find(s);
    if (it == rows->end())
      throw InvalidPolicy("explicit policy has no row at '" +
                          token_string(s.tokens) + "'");
    return it->second;
  };
}

// ---------------------------------------------------------------------------
// KL objective check
// ---------------------------------------------------------------------------

namespace {

/// f(p) = <q, p> - beta KL(p || ref); -inf when p leaves ref's support.
double kl_objective(const std::vector<double>& p,
                    const std::vector<double>& ref,
                    const std::vector<double>& q, double beta) {
  double obj = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    if (ref[a] <= 0.0) return kNegInf;
    obj += p[a] * q[a] - beta * p[a] * std::log(p[a] / ref[a]);
  }
  return obj;
}

/// Euclidean projection onto the probability simplex.
std::vector<double> project_simplex(std::vector<double> v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0;
  double theta = 0.0;
  int rho = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    double candidate = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - candidate > 0.0) {
      rho = static_cast<int>(i + 1);
      theta = candidate;
    }
  }
  (void)rho;
  for (double& x : v) x = std::max(0.0, x - theta);
  return v;
}

/// Projected gradient ascent with per-step backtracking.
std::vector<double> numeric_maximizer(std::vector<double> p,
                                      const std::vector<double>& ref,
                                      const std::vector<double>& q,
                                      double beta, int iters) {
  double obj = kl_objective(p, ref, q, beta);
  std::size_t n = p.size();
  for (int k = 0; k < iters; ++k) {
    std::vector<double> g(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      if (ref[a] <= 0.0) {
        g[a] = kNegInf;
        continue;
      }
      double pa = std::max(p[a], 1e-12);
      g[a] = q[a] - beta * (std::log(pa / ref[a]) + 1.0);
    }
    double eta = 1.0 / (1.0 + beta);
    bool moved = false;
    for (int half = 0; half < 30; ++half) {
      std::vector<double> trial(n);
      for (std::size_t a = 0; a < n; ++a)
        trial[a] = g[a] == kNegInf ? 0.0 : p[a] + eta * g[a];
      trial = project_simplex(std::move(trial));
      double trial_obj = kl_objective(trial, ref, q, beta);
      if (trial_obj > obj) {
        p = std::move(trial);
        obj = trial_obj;
        moved = true;
        break;
      }
      eta *= 0.5;
    }
    if (!moved) break;
  }
  return p;
}

}  // namespace

KlCheckResult kl_objective_optimality_check(const std::vector<double>& ref_row,
                                            const std::vector<double>& q_row,
                                            double beta, int n_candidates,
                                            RngStream& rng, double tol) {
  std::vector<double> closed = reweight_row(ref_row, q_row, beta);
  KlCheckResult result;
  result.closed_form_objective = kl_objective(closed, ref_row, q_row, beta);
  result.best_candidate_objective = kNegInf;
  std::size_t n = ref_row.size();

  auto consider = [&](const std::vector<double>& p) {
    double obj = kl_objective(p, ref_row, q_row, beta);
    result.best_candidate_objective =
        std::max(result.best_candidate_objective, obj);
  };

  // Numeric maximizers from fixed and random starting points.
  consider(numeric_maximizer(std::vector<double>(n, 1.0 / n), ref_row, q_row,
                             beta, 400));
  consider(numeric_maximizer(ref_row, ref_row, q_row, beta, 400));
  for (int r = 0; r < 3; ++r) {
    std::vector<double> start(n);
    double z = 0.0;
    for (double& x : start) z += (x = -std::log(std::max(rng.next_double(),
                                                         0x1.0p-53)));
    for (double& x : start) x /= z;
    consider(numeric_maximizer(std::move(start), ref_row, q_row, beta, 400));
  }

  // Random simplex points plus small perturbations around the closed form.
  for (int c = 0; c < n_candidates; ++c) {
    std::vector<double> p(n);
    double z = 0.0;
    for (double& x : p) z += (x = -std::log(std::max(rng.next_double(),
                                                     0x1.0p-53)));
    for (double& x : p) x /= z;
    consider(p);
  }
  for (double eps : {1e-4, 1e-3, 1e-2}) {
    for (int r = 0; r < 8; ++r) {
      std::vector<double> p(n);
      double mean = 0.0;
      for (double& x : p) mean += (x = rng.next_double() * 2.0 - 1.0);
      mean /= static_cast<double>(n);
      for (std::size_t a = 0; a < n; ++a) p[a] = closed[a] + eps * (p[a] - mean);
      consider(project_simplex(std::move(p)));
    }
  }

  result.max_violation =
      result.best_candidate_objective - result.closed_form_objective;
  result.ok = result.max_violation <= tol;
  return result;
}

TokenId sample_token(const std::vector<double>& dist, RngStream& rng) {
  double u = rng.next_double();
  double cum = 0.0;
  // Walk the CDF in token order; the last positive entry absorbs rounding
  // slack so zero-probability tokens are never produced.
  int last_positive = -1;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += dist[i];
    if (u < cum) return static_cast<TokenId>(i);
  }
  if (last_positive < 0)
    throw InvalidPolicy("sample_token: distribution has no mass");
  return static_cast<TokenId>(last_positive);
}

}  // namespace iro
