#include "iro/mdp.hpp"

#include <algorithm>
#include <sstream>

#include "iro/rng.hpp"

namespace iro {

std::string token_string(const std::vector<TokenId>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(tokens[i]);
  }
  return out;
}

std::vector<TokenId> parse_token_string(const std::string& text) {
  std::vector<TokenId> out;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    try {
      std::size_t used = 0;
      long v = std::stol(word, &used);
      if (used != word.size()) throw std::invalid_argument(word);
      out.push_back(static_cast<TokenId>(v));
    } catch (const std::exception&) {
      throw IoError("parse_token_string: bad token '" + word + "'");
    }
  }
  return out;
}

void MdpSpec::validate() const {
  if (vocab_size < 2)
    throw InvalidConfig("MdpSpec: vocab_size must be at least 2");
  if (horizon < 1) throw InvalidConfig("MdpSpec: horizon must be at least 1");
  if (prompts.empty()) throw InvalidConfig("MdpSpec: prompts must be non-empty");
  if (terminal_token &&
      (*terminal_token < 0 || *terminal_token >= vocab_size))
    throw InvalidConfig("MdpSpec: terminal_token outside vocabulary");
  if (!(r_max > 0.0)) throw InvalidConfig("MdpSpec: r_max must be positive");
  for (const auto& prompt : prompts)
    for (TokenId t : prompt)
      if (t < 0 || t >= vocab_size)
        throw InvalidConfig("MdpSpec: prompt token outside vocabulary");
}

void RewardSpec::clamp_to(double r_max) {
  auto clamp = [r_max](double v) { return std::clamp(v, 0.0, r_max); };
  if (auto* h = std::get_if<HashLeafReward>(&family)) {
    h->scale = clamp(h->scale);
  } else if (auto* n = std::get_if<NeedleReward>(&family)) {
    n->hit_value = clamp(n->hit_value);
    n->miss_value = clamp(n->miss_value);
  } else if (auto* e = std::get_if<ExplicitTableReward>(&family)) {
    for (auto& [key, value] : e->table) value = clamp(value);
    e->default_value = clamp(e->default_value);
  }
  // TokenPreference clamps its evaluated sum instead; per-position weights
  // are unconstrained.
}

Prefix transition(const MdpSpec& spec, const Prefix& s, TokenId a) {
  if (spec.is_terminal(s))
    throw StepOverflow("transition: no successors from a terminal state");
  if (a < 0 || a >= spec.vocab_size)
    throw InvalidConfig("transition: token outside vocabulary");
  Prefix next = s;
  next.tokens.push_back(a);
  return next;
}

Trajectory make_trajectory(const MdpSpec& spec, std::int32_t prompt_id,
                           std::vector<TokenId> tokens) {
  Trajectory tau;
  tau.prompt_id = prompt_id;
  tau.complete = spec.is_complete(tokens);
  tau.tokens = std::move(tokens);
  return tau;
}

double evaluate_reward(const MdpSpec& spec, const RewardSpec& reward,
                       const Trajectory& tau) {
  if (!tau.complete)
    throw IncompleteTrajectory("evaluate_reward: trajectory is not complete");

  if (const auto* h = std::get_if<HashLeafReward>(&reward.family)) {
    std::uint64_t key = hash_combine(hash_string("hash_leaf"), h->seed);
    key = hash_prefix(key, tau.as_prefix());
    return to_unit_double(key) * h->scale;
  }
  if (const auto* n = std::get_if<NeedleReward>(&reward.family)) {
    bool hit = tau.prompt_id == n->target.prompt_id &&
               tau.tokens == n->target.tokens;
    return hit ? n->hit_value : n->miss_value;
  }
  if (const auto* p = std::get_if<TokenPreferenceReward>(&reward.family)) {
    double sum = 0.0;
    for (std::size_t h = 0; h < tau.tokens.size(); ++h) {
      if (h >= p->weights.size()) break;
      const auto& row = p->weights[h];
      TokenId a = tau.tokens[h];
      if (a >= 0 && static_cast<std::size_t>(a) < row.size()) sum += row[a];
    }
    return std::clamp(sum, 0.0, spec.r_max);
  }
  const auto& table = std::get<ExplicitTableReward>(reward.family);
  auto it = table.table.find({tau.prompt_id, tau.tokens});
  return it == table.table.end() ? table.default_value : it->second;
}

namespace {

struct EnumState {
  const MdpSpec& spec;
  const std::function<void(const Trajectory&)>& fn;
  std::int64_t node_cap;
  std::int64_t nodes = 0;
  Prefix cursor;

  void visit() {
    if (spec.is_terminal(cursor)) {
      Trajectory tau{cursor.prompt_id, cursor.tokens, true};
      fn(tau);
      return;
    }
    for (TokenId a = 0; a < spec.vocab_size; ++a) {
      if (++nodes > node_cap)
        throw TooLarge("for_each_trajectory: tree exceeds node cap");
      cursor.tokens.push_back(a);
      visit();
      cursor.tokens.pop_back();
    }
  }
};

}  // namespace

void for_each_trajectory(const MdpSpec& spec, std::int32_t prompt_id,
                         const std::function<void(const Trajectory&)>& fn,
                         std::int64_t node_cap) {
  if (prompt_id < 0 || prompt_id >= spec.num_prompts())
    throw InvalidConfig("for_each_trajectory: prompt_id out of range");
  EnumState state{spec, fn, node_cap, 0, spec.initial_state(prompt_id)};
  state.visit();
}

std::vector<Trajectory> enumerate_trajectories(const MdpSpec& spec,
                                               std::int32_t prompt_id,
                                               std::int64_t node_cap) {
  std::vector<Trajectory> out;
  for_each_trajectory(
      spec, prompt_id, [&out](const Trajectory& tau) { out.push_back(tau); },
      node_cap);
  return out;
}

std::int64_t count_tree_nodes(const MdpSpec& spec, std::int32_t prompt_id,
                              std::int64_t node_cap) {
  std::int64_t nodes = 0;
  std::function<void(const Prefix&)> visit = [&](const Prefix& p) {
    if (spec.is_terminal(p)) return;
    for (TokenId a = 0; a < spec.vocab_size; ++a) {
      if (++nodes > node_cap)
        throw TooLarge("count_tree_nodes: tree exceeds node cap");
      Prefix child = p;
      child.tokens.push_back(a);
      visit(child);
    }
  };
  visit(spec.initial_state(prompt_id));
  return nodes;
}

}  // namespace iro
