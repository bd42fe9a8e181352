#include "iro/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace iro::oracle {

namespace {

/// Deterministic iteration order for summing over a level's states.
std::vector<const Prefix*> sorted_keys(const PrefixMap<std::vector<double>>& m) {
  std::vector<const Prefix*> keys;
  keys.reserve(m.size());
  for (const auto& [p, row] : m) keys.push_back(&p);
  std::sort(keys.begin(), keys.end(),
            [](const Prefix* a, const Prefix* b) { return *a < *b; });
  return keys;
}

struct NodeBudget {
  std::int64_t cap;
  std::int64_t used = 0;
  void charge(const char* who) {
    if (++used > cap) throw TooLarge(std::string(who) + ": tree exceeds node cap");
  }
};

}  // namespace

std::vector<double> policy_row(const MdpSpec& spec, const PolicyFn& pi,
                               const Prefix& s) {
  std::vector<double> row = pi(s);
  if (static_cast<std::int32_t>(row.size()) != spec.vocab_size)
    throw InvalidPolicy("policy_row: row size does not match vocabulary");
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw InvalidPolicy("policy_row: negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kPolicyRowTol)
    throw InvalidPolicy("policy_row: probabilities sum to " +
                        std::to_string(sum));
  return row;
}

namespace {

double optimal_value_rec(const MdpSpec& spec, const RewardSpec& reward,
                         const Prefix& s, ValueTable& out, NodeBudget& budget) {
  if (spec.is_terminal(s)) {
    Trajectory tau{s.prompt_id, s.tokens, true};
    double r = evaluate_reward(spec, reward, tau);
    out.values.emplace(s, r);
    return r;
  }
  double best = -std::numeric_limits<double>::infinity();
  for (TokenId a = 0; a < spec.vocab_size; ++a) {
    budget.charge("optimal_values");
    Prefix child = s;
    child.tokens.push_back(a);
    best = std::max(best, optimal_value_rec(spec, reward, child, out, budget));
  }
  out.values.emplace(s, best);
  return best;
}

double policy_value_rec(const MdpSpec& spec, const RewardSpec& reward,
                        const PolicyFn& pi, const Prefix& s,
                        PolicyEvaluation& out, NodeBudget& budget) {
  if (spec.is_terminal(s)) {
    Trajectory tau{s.prompt_id, s.tokens, true};
    double r = evaluate_reward(spec, reward, tau);
    out.v.values.emplace(s, r);
    return r;
  }
  std::vector<double> row = policy_row(spec, pi, s);
  std::vector<double> q(spec.vocab_size, 0.0);
  double v = 0.0;
  for (TokenId a = 0; a < spec.vocab_size; ++a) {
    budget.charge("policy_values");
    Prefix child = s;
    child.tokens.push_back(a);
    q[a] = policy_value_rec(spec, reward, pi, child, out, budget);
    v += row[a] * q[a];
  }
  out.v.values.emplace(s, v);
  out.q.emplace(s, std::move(q));
  return v;
}

}  // namespace

ValueTable optimal_values(const MdpSpec& spec, const RewardSpec& reward,
                          std::int64_t node_cap) {
  spec.validate();
  ValueTable out;
  NodeBudget budget{node_cap};
  for (std::int32_t pid = 0; pid < spec.num_prompts(); ++pid)
    optimal_value_rec(spec, reward, spec.initial_state(pid), out, budget);
  return out;
}

PolicyEvaluation policy_values(const MdpSpec& spec, const RewardSpec& reward,
                               const PolicyFn& pi, std::int64_t node_cap) {
  spec.validate();
  PolicyEvaluation out;
  NodeBudget budget{node_cap};
  for (std::int32_t pid = 0; pid < spec.num_prompts(); ++pid)
    policy_value_rec(spec, reward, pi, spec.initial_state(pid), out, budget);
  return out;
}

double VisitationMeasure::state_mass(int step, const Prefix& s) const {
  if (step < 1 || step > static_cast<int>(levels.size())) return 0.0;
  auto it = levels[step - 1].find(s);
  if (it == levels[step - 1].end()) return 0.0;
  double sum = 0.0;
  for (double d : it->second) sum += d;
  return sum;
}

double VisitationMeasure::at(int step, const Prefix& s, TokenId a) const {
  if (step < 1 || step > static_cast<int>(levels.size())) return 0.0;
  auto it = levels[step - 1].find(s);
  if (it == levels[step - 1].end()) return 0.0;
  if (a < 0 || static_cast<std::size_t>(a) >= it->second.size()) return 0.0;
  return it->second[a];
}

VisitationMeasure visitation(const MdpSpec& spec, const PolicyFn& pi,
                             std::int64_t node_cap) {
  spec.validate();
  VisitationMeasure out;
  out.levels.resize(spec.horizon);
  NodeBudget budget{node_cap};

  // (state, mass) pairs; trees guarantee each state appears exactly once.
  std::vector<std::pair<Prefix, double>> frontier;
  double root_mass = 1.0 / spec.num_prompts();
  for (std::int32_t pid = 0; pid < spec.num_prompts(); ++pid)
    frontier.emplace_back(spec.initial_state(pid), root_mass);

  for (int step = 1; step <= spec.horizon && !frontier.empty(); ++step) {
    std::vector<std::pair<Prefix, double>> next;
    auto& level = out.levels[step - 1];
    for (const auto& [s, mass] : frontier) {
      if (spec.is_terminal(s)) continue;  // mass retires at early stops
      std::vector<double> row = policy_row(spec, pi, s);
      for (double& d : row) d *= mass;
      for (TokenId a = 0; a < spec.vocab_size; ++a) {
        budget.charge("visitation");
        Prefix child = s;
        child.tokens.push_back(a);
        next.emplace_back(std::move(child), row[a]);
      }
      level.emplace(s, std::move(row));
    }
    frontier = std::move(next);
  }
  return out;
}

double exact_return(const MdpSpec& spec, const RewardSpec& reward,
                    const PolicyFn& pi, std::int64_t node_cap) {
  PolicyEvaluation eval = policy_values(spec, reward, pi, node_cap);
  double sum = 0.0;
  for (std::int32_t pid = 0; pid < spec.num_prompts(); ++pid)
    sum += eval.v.at(spec.initial_state(pid));
  return sum / spec.num_prompts();
}

double optimal_return(const MdpSpec& spec, const RewardSpec& reward,
                      std::int64_t node_cap) {
  ValueTable v = optimal_values(spec, reward, node_cap);
  double sum = 0.0;
  for (std::int32_t pid = 0; pid < spec.num_prompts(); ++pid)
    sum += v.at(spec.initial_state(pid));
  return sum / spec.num_prompts();
}

double performance_difference(const MdpSpec& spec, const RewardSpec& reward,
                              const PolicyFn& pi_new, const PolicyFn& pi_ref,
                              std::int64_t node_cap) {
  PolicyEvaluation ref = policy_values(spec, reward, pi_ref, node_cap);
  VisitationMeasure vis = visitation(spec, pi_new, node_cap);
  double total = 0.0;
  for (const auto& level : vis.levels) {
    for (const Prefix* s : sorted_keys(level)) {
      const auto& row = level.at(*s);
      const auto& q = ref.q.at(*s);
      double mass = 0.0;
      double qdot = 0.0;
      for (TokenId a = 0; a < spec.vocab_size; ++a) {
        mass += row[a];
        qdot += row[a] * q[a];
      }
      total += qdot - mass * ref.v.at(*s);
    }
  }
  return total;
}

double surrogate_gap(const MdpSpec& spec, const RewardSpec& reward,
                     const PolicyFn& pi_new, const PolicyFn& pi_ref,
                     std::int64_t node_cap) {
  PolicyEvaluation ref = policy_values(spec, reward, pi_ref, node_cap);
  VisitationMeasure vis = visitation(spec, pi_ref, node_cap);
  double total = 0.0;
  for (const auto& level : vis.levels) {
    for (const Prefix* s : sorted_keys(level)) {
      const auto& ref_row = level.at(*s);  // mass * pi_ref(a|s)
      const auto& q = ref.q.at(*s);
      double mass = 0.0;
      for (double d : ref_row) mass += d;
      if (mass == 0.0) continue;
      std::vector<double> new_row = policy_row(spec, pi_new, *s);
      double term = 0.0;
      for (TokenId a = 0; a < spec.vocab_size; ++a)
        term += q[a] * (mass * new_row[a] - ref_row[a]);
      total += term;
    }
  }
  return total;
}

double concentrability(const MdpSpec& spec, const PolicyFn& pi_star,
                       const PolicyFn& pi_base, std::int64_t node_cap) {
  VisitationMeasure star = visitation(spec, pi_star, node_cap);
  VisitationMeasure base = visitation(spec, pi_base, node_cap);
  double worst = 0.0;
  bool any = false;
  for (std::size_t h = 0; h < star.levels.size(); ++h) {
    for (const Prefix* s : sorted_keys(star.levels[h])) {
      const auto& srow = star.levels[h].at(*s);
      auto bit = base.levels[h].find(*s);
      for (TokenId a = 0; a < spec.vocab_size; ++a) {
        if (srow[a] <= 0.0) continue;
        double b = bit == base.levels[h].end() ? 0.0 : bit->second[a];
        if (b <= 0.0)
          throw NoCoverage("concentrability: base policy misses support at '" +
                           token_string(s->tokens) + "' token " +
                           std::to_string(a));
        worst = std::max(worst, srow[a] / b);
        any = true;
      }
    }
  }
  if (!any) throw NoCoverage("concentrability: target policy has no mass");
  return worst;
}

double kl_visitation_sum(const MdpSpec& spec, const PolicyFn& pi_p,
                         const PolicyFn& pi_q, const PolicyFn& pi_weight,
                         std::int64_t node_cap) {
  VisitationMeasure vis = visitation(spec, pi_weight, node_cap);
  double total = 0.0;
  for (const auto& level : vis.levels) {
    for (const Prefix* s : sorted_keys(level)) {
      const auto& wrow = level.at(*s);
      double mass = 0.0;
      for (double d : wrow) mass += d;
      if (mass == 0.0) continue;
      std::vector<double> p = policy_row(spec, pi_p, *s);
      std::vector<double> q = policy_row(spec, pi_q, *s);
      double kl = 0.0;
      for (TokenId a = 0; a < spec.vocab_size; ++a) {
        if (p[a] == 0.0) continue;
        if (q[a] == 0.0) return std::numeric_limits<double>::infinity();
        kl += p[a] * std::log(p[a] / q[a]);
      }
      total += mass * kl;
    }
  }
  return total;
}

PolicyFn greedy_policy(const MdpSpec& spec,
                       std::shared_ptr<const ValueTable> v) {
  return [spec, v](const Prefix& s) {
    TokenId best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (TokenId a = 0; a < spec.vocab_size; ++a) {
      Prefix child = s;
      child.tokens.push_back(a);
      double value = v->at(child);
      if (value > best_value) {  // strict: ties fall to the lowest token
        best_value = value;
        best = a;
      }
    }
    std::vector<double> row(spec.vocab_size, 0.0);
    row[best] = 1.0;
    return row;
  };
}

PolicyFn uniform_policy(const MdpSpec& spec) {
  double p = 1.0 / spec.vocab_size;
  return [n = spec.vocab_size, p](const Prefix&) {
    return std::vector<double>(n, p);
  };
}

}  // namespace iro::oracle
