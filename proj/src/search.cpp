#include "iro/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_set>

namespace iro::search {

namespace {

/// Checked vocab^len for EnumerateAll validation.
std::int64_t chunk_count(std::int32_t vocab, int len) {
  std::int64_t n = 1;
  for (int i = 0; i < len; ++i) {
    n *= vocab;
    if (n > 1'000'000)
      throw InvalidConfig("SearchConfig: chunk space too large to enumerate");
  }
  return n;
}

}  // namespace

void SearchConfig::validate(const MdpSpec& spec) const {
  if (beam_width < 1)
    throw InvalidConfig("SearchConfig: beam_width must be at least 1");
  if (successors < 1)
    throw InvalidConfig("SearchConfig: successors must be at least 1");
  if (chunk_length < 1 || chunk_length > spec.horizon)
    throw InvalidConfig("SearchConfig: chunk_length must be in [1, horizon]");
  if (selection == SelectionRule::StochasticSoftmax &&
      !(softmax_temperature > 0.0))
    throw InvalidConfig("SearchConfig: softmax_temperature must be positive");
  if (expansion == ExpansionMode::EnumerateAll) {
    if (beam_width != 1)
      throw InvalidConfig("SearchConfig: EnumerateAll requires beam_width 1");
    if (successors != chunk_count(spec.vocab_size, chunk_length))
      throw InvalidConfig(
          "SearchConfig: EnumerateAll requires successors == vocab^chunk");
    if (spec.terminal_token)
      throw InvalidConfig(
          "SearchConfig: EnumerateAll supports fixed-length instances only");
  }
}

std::vector<int> diversity_first_select(const std::vector<Candidate>& cs,
                                        int k) {
  if (k < 1) throw InvalidConfig("diversity_first_select: k must be positive");
  k = std::min<int>(k, static_cast<int>(cs.size()));

  // Bucket by exact token sequence; members keep ascending index order.
  std::map<std::vector<TokenId>, std::vector<int>> buckets;
  for (int i = 0; i < static_cast<int>(cs.size()); ++i)
    buckets[cs[i].prefix.tokens].push_back(i);

  struct Cluster {
    double score;
    const std::vector<TokenId>* tokens;
    const std::vector<int>* members;
  };
  std::vector<Cluster> clusters;
  clusters.reserve(buckets.size());
  for (const auto& [tokens, members] : buckets)
    clusters.push_back({cs[members.front()].score, &tokens, &members});
  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& a, const Cluster& b) {
              if (a.score != b.score) return a.score > b.score;
              return *a.tokens < *b.tokens;
            });

  // One member per cluster per sweep until k parents are chosen.
  std::vector<int> picked;
  picked.reserve(k);
  for (std::size_t sweep = 0; static_cast<int>(picked.size()) < k; ++sweep)
    for (const Cluster& c : clusters) {
      if (sweep >= c.members->size()) continue;
      picked.push_back((*c.members)[sweep]);
      if (static_cast<int>(picked.size()) == k) break;
    }
  return picked;
}

std::vector<int> plain_beam_select(const std::vector<Candidate>& cs, int k) {
  if (k < 1) throw InvalidConfig("plain_beam_select: k must be positive");
  k = std::min<int>(k, static_cast<int>(cs.size()));
  std::vector<int> order(cs.size());
  for (std::size_t i = 0; i < cs.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&cs](int a, int b) {
    if (cs[a].score != cs[b].score) return cs[a].score > cs[b].score;
    if (cs[a].prefix.tokens != cs[b].prefix.tokens)
      return cs[a].prefix.tokens < cs[b].prefix.tokens;
    return a < b;
  });
  order.resize(k);
  return order;
}

std::vector<int> stochastic_select(const std::vector<Candidate>& cs, int k,
                                   double temperature, RngStream& rng) {
  if (k < 1) throw InvalidConfig("stochastic_select: k must be positive");
  if (!(temperature > 0.0))
    throw InvalidConfig("stochastic_select: temperature must be positive");
  k = std::min<int>(k, static_cast<int>(cs.size()));

  std::vector<int> active(cs.size());
  for (std::size_t i = 0; i < cs.size(); ++i) active[i] = static_cast<int>(i);
  std::vector<int> picked;
  picked.reserve(k);
  while (static_cast<int>(picked.size()) < k) {
    double top = -std::numeric_limits<double>::infinity();
    for (int i : active) top = std::max(top, cs[i].score / temperature);
    std::vector<double> probs(active.size());
    double z = 0.0;
    for (std::size_t j = 0; j < active.size(); ++j)
      z += (probs[j] = std::exp(cs[active[j]].score / temperature - top));
    for (double& p : probs) p /= z;
    std::size_t j = sample_index(probs, rng.next_double());
    picked.push_back(active[j]);
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return picked;
}

namespace {

/// Shared per-call generation state: one seen-set so nodes_expanded counts
/// distinct prefixes materialized by this generator call.
struct Grower {
  const MdpSpec& spec;
  const BasePolicy& base;
  CostLedger& ledger;
  std::unordered_set<Prefix, PrefixHasher> seen;

  void touch(const Prefix& p) {
    if (seen.insert(p).second) ++ledger.nodes_expanded;
  }

  /// Extends a candidate by up to chunk_length sampled tokens.
  Candidate roll_chunk(Candidate c, int chunk_length, RngStream& rng) {
    for (int i = 0; i < chunk_length && !c.complete; ++i) {
      std::vector<double> row = base_dist(spec, base, c.prefix);
      TokenId a = sample_token(row, rng);
      c.base_logprob += std::log(row[a]);
      c.prefix.tokens.push_back(a);
      ++ledger.tokens_generated;
      touch(c.prefix);
      c.complete = spec.is_terminal(c.prefix);
    }
    return c;
  }

  /// All vocab^chunk_length extensions of the parent, lexicographic.
  std::vector<Candidate> enumerate_chunks(const Candidate& parent,
                                          int chunk_length) {
    std::vector<Candidate> out;
    std::function<void(Candidate, int)> grow = [&](Candidate c, int left) {
      if (left == 0 || c.complete) {
        ledger.tokens_generated += static_cast<std::int64_t>(
            c.prefix.tokens.size() - parent.prefix.tokens.size());
        out.push_back(std::move(c));
        return;
      }
      std::vector<double> row = base_dist(spec, base, c.prefix);
      for (TokenId a = 0; a < spec.vocab_size; ++a) {
        Candidate child = c;
        child.base_logprob += std::log(row[a]);
        child.prefix.tokens.push_back(a);
        touch(child.prefix);
        child.complete = spec.is_terminal(child.prefix);
        grow(std::move(child), left - 1);
      }
    };
    grow(parent, chunk_length);
    return out;
  }
};

const std::vector<TokenId>& candidate_tokens(const std::vector<Candidate>& cs,
                                             int i) {
  return cs[static_cast<std::size_t>(i)].prefix.tokens;
}

}  // namespace

SearchResult guided_generate(const MdpSpec& spec, const RewardSpec& reward,
                             const BasePolicy& base,
                             const GuidanceStack& stack,
                             const SearchConfig& cfg, std::int32_t prompt_id,
                             RngStream& rng, SearchTrace* trace) {
  cfg.validate(spec);
  if (prompt_id < 0 || prompt_id >= spec.num_prompts())
    throw InvalidConfig("guided_generate: prompt_id out of range");

  SearchResult result;
  Grower grower{spec, base, result.ledger, {}};
  int pool_size = cfg.candidates();

  Candidate seed;
  seed.prefix = spec.initial_state(prompt_id);
  seed.complete = spec.is_terminal(seed.prefix);

  std::vector<Candidate> pool;
  if (cfg.expansion == ExpansionMode::EnumerateAll) {
    pool = grower.enumerate_chunks(seed, cfg.chunk_length);
  } else {
    pool.reserve(pool_size);
    for (int i = 0; i < pool_size; ++i)
      pool.push_back(grower.roll_chunk(seed, cfg.chunk_length, rng));
  }

  for (int round = 1;; ++round) {
    for (Candidate& c : pool) {
      c.score = stack.score(c.prefix, &result.ledger);
      if (stack.include_base_logprob) c.score += c.base_logprob;
    }
    bool all_complete = true;
    for (const Candidate& c : pool) all_complete &= c.complete;

    RoundRecord* record = nullptr;
    if (trace) {
      trace->rounds.push_back({round, pool, {}, result.ledger});
      record = &trace->rounds.back();
    }
    if (all_complete) break;

    std::vector<int> selected;
    switch (cfg.selection) {
      case SelectionRule::DiversityFirstBeam:
        selected = diversity_first_select(pool, cfg.beam_width);
        break;
      case SelectionRule::PlainBeam:
        selected = plain_beam_select(pool, cfg.beam_width);
        break;
      case SelectionRule::StochasticSoftmax:
        selected = stochastic_select(pool, cfg.beam_width,
                                     cfg.softmax_temperature, rng);
        break;
    }
    if (record) record->selected = selected;

    // Finished parents are frozen; their pool share moves round-robin to
    // the unfinished ones.
    std::vector<Candidate> frozen;
    std::vector<Candidate> open;
    for (int i : selected) {
      if (pool[i].complete)
        frozen.push_back(pool[i]);
      else
        open.push_back(pool[i]);
    }

    std::vector<Candidate> next = frozen;
    if (open.empty()) {
      pool = std::move(next);
      continue;  // the shrunken all-complete pool is rescored, then done
    }
    int quota = pool_size - static_cast<int>(frozen.size());
    int base_share = quota / static_cast<int>(open.size());
    int extra = quota % static_cast<int>(open.size());
    for (std::size_t p = 0; p < open.size(); ++p) {
      int share = base_share + (static_cast<int>(p) < extra ? 1 : 0);
      if (cfg.expansion == ExpansionMode::EnumerateAll) {
        auto children = grower.enumerate_chunks(open[p], cfg.chunk_length);
        next.insert(next.end(), children.begin(), children.end());
      } else {
        for (int s = 0; s < share; ++s)
          next.push_back(grower.roll_chunk(open[p], cfg.chunk_length, rng));
      }
    }
    pool = std::move(next);
  }

  // Final pick over the (all complete) pool.
  int best = -1;
  if (cfg.final_pick == FinalPick::ByReward) {
    double best_reward = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
      Trajectory tau{prompt_id, pool[i].prefix.tokens, true};
      double r = evaluate_reward(spec, reward, tau);
      ++result.ledger.reward_queries;
      if (best < 0 || r > best_reward ||
          (r == best_reward &&
           candidate_tokens(pool, i) < candidate_tokens(pool, best))) {
        best_reward = r;
        best = i;
      }
    }
    result.best.reward = best_reward;
  } else {
    for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
      if (best < 0 || pool[i].score > pool[best].score ||
          (pool[i].score == pool[best].score &&
           candidate_tokens(pool, i) < candidate_tokens(pool, best)))
        best = i;
    }
    Trajectory tau{prompt_id, pool[best].prefix.tokens, true};
    result.best.reward = evaluate_reward(spec, reward, tau);
    ++result.ledger.reward_queries;
  }
  result.best.trajectory = Trajectory{prompt_id, pool[best].prefix.tokens, true};
  return result;
}

SearchResult bon_generate(const MdpSpec& spec, const RewardSpec& reward,
                          const BasePolicy& base, int n,
                          std::int32_t prompt_id, RngStream& rng,
                          bool exhaustive, std::int64_t node_cap) {
  if (prompt_id < 0 || prompt_id >= spec.num_prompts())
    throw InvalidConfig("bon_generate: prompt_id out of range");
  if (!exhaustive && n < 1)
    throw InvalidConfig("bon_generate: n must be at least 1");

  SearchResult result;
  Grower grower{spec, base, result.ledger, {}};

  bool have_best = false;
  auto offer = [&](const Trajectory& tau) {
    double r = evaluate_reward(spec, reward, tau);
    ++result.ledger.reward_queries;
    if (!have_best || r > result.best.reward ||
        (r == result.best.reward &&
         tau.tokens < result.best.trajectory.tokens)) {
      result.best = {tau, r};
      have_best = true;
    }
  };

  if (exhaustive) {
    for_each_trajectory(
        spec, prompt_id,
        [&](const Trajectory& tau) {
          result.ledger.tokens_generated +=
              static_cast<std::int64_t>(tau.tokens.size());
          Prefix p{prompt_id, {}};
          for (TokenId t : tau.tokens) {
            p.tokens.push_back(t);
            grower.touch(p);
          }
          offer(tau);
        },
        node_cap);
    return result;
  }

  Candidate seed;
  seed.prefix = spec.initial_state(prompt_id);
  seed.complete = spec.is_terminal(seed.prefix);
  for (int i = 0; i < n; ++i) {
    Candidate c = grower.roll_chunk(seed, spec.horizon, rng);
    offer(Trajectory{prompt_id, c.prefix.tokens, true});
  }
  return result;
}

}  // namespace iro::search
