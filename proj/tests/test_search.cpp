#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "iro/oracle.hpp"
#include "iro/search.hpp"

using namespace iro;
using namespace iro::search;

namespace {

MdpSpec make_spec(int vocab, int horizon) {
  MdpSpec spec;
  spec.vocab_size = vocab;
  spec.horizon = horizon;
  spec.r_max = 1.0;
  return spec;
}

Candidate cand(std::vector<TokenId> tokens, double score) {
  Candidate c;
  c.prefix = Prefix{0, std::move(tokens)};
  c.score = score;
  return c;
}

/// Wraps exact optimal values as a tabular guidance function.
std::shared_ptr<const ValueFn> gold_values(const MdpSpec& spec,
                                           const RewardSpec& reward) {
  ValueTable table = oracle::optimal_values(spec, reward);
  TabularRepr tab;
  for (const auto& [p, v] : table.values) tab.cells[p] = {v, 1};
  auto fn = std::make_shared<ValueFn>();
  fn->repr = std::move(tab);
  return fn;
}

std::shared_ptr<const ValueFn> zero_fn() { return std::make_shared<ValueFn>(); }

}  // namespace

TEST_CASE("search config validation") {
  MdpSpec spec = make_spec(2, 4);
  SearchConfig cfg;
  CHECK_NOTHROW(cfg.validate(spec));
  CHECK(cfg.candidates() == 4);

  SearchConfig bad = cfg;
  bad.beam_width = 0;
  CHECK_THROWS_AS(bad.validate(spec), InvalidConfig);
  bad = cfg;
  bad.successors = 0;
  CHECK_THROWS_AS(bad.validate(spec), InvalidConfig);
  bad = cfg;
  bad.chunk_length = 5;
  CHECK_THROWS_AS(bad.validate(spec), InvalidConfig);
  bad = cfg;
  bad.selection = SelectionRule::StochasticSoftmax;
  bad.softmax_temperature = 0.0;
  CHECK_THROWS_AS(bad.validate(spec), InvalidConfig);

  SearchConfig enumerate;
  enumerate.expansion = ExpansionMode::EnumerateAll;
  enumerate.beam_width = 1;
  enumerate.successors = 2;
  enumerate.chunk_length = 1;
  CHECK_NOTHROW(enumerate.validate(spec));
  enumerate.successors = 3;  // must equal vocab^chunk
  CHECK_THROWS_AS(enumerate.validate(spec), InvalidConfig);
  enumerate.successors = 2;
  enumerate.beam_width = 2;
  CHECK_THROWS_AS(enumerate.validate(spec), InvalidConfig);
}

TEST_CASE("diversity-first selection") {
  SUBCASE("identical candidates wrap round-robin over one cluster") {
    std::vector<Candidate> cs = {cand({0}, 1.0), cand({0}, 1.0),
                                 cand({0}, 1.0), cand({0}, 1.0)};
    CHECK(diversity_first_select(cs, 2) == std::vector<int>{0, 1});
    CHECK(diversity_first_select(cs, 3) == std::vector<int>{0, 1, 2});
  }
  SUBCASE("all-distinct candidates reduce to plain top-k") {
    std::vector<Candidate> cs = {cand({0, 0}, 0.1), cand({0, 1}, 0.9),
                                 cand({1, 0}, 0.5), cand({1, 1}, 0.7)};
    CHECK(diversity_first_select(cs, 2) == plain_beam_select(cs, 2));
    CHECK(diversity_first_select(cs, 2) == std::vector<int>{1, 3});
  }
  SUBCASE("duplicates cannot monopolize the beam") {
    std::vector<Candidate> cs = {cand({0}, 0.9), cand({1}, 0.5),
                                 cand({0}, 0.9), cand({1}, 0.5)};
    CHECK(diversity_first_select(cs, 2) == std::vector<int>{0, 1});
    CHECK(plain_beam_select(cs, 2) == std::vector<int>{0, 2});
  }
  SUBCASE("score ties order clusters lexicographically") {
    std::vector<Candidate> cs = {cand({1}, 0.5), cand({0}, 0.5)};
    CHECK(diversity_first_select(cs, 2) == std::vector<int>{1, 0});
  }
  std::vector<Candidate> cs = {cand({0}, 0.5)};
  CHECK_THROWS_AS(diversity_first_select(cs, 0), InvalidConfig);
}

TEST_CASE("stochastic selection") {
  std::vector<Candidate> cs = {cand({0}, 0.1), cand({1}, 0.9),
                               cand({2}, 0.4)};
  RngStream rng(5, "stoch_test", 0);

  // Near-zero temperature acts like greedy without replacement.
  CHECK(stochastic_select(cs, 3, 1e-9, rng) == std::vector<int>{1, 2, 0});

  // High temperature spreads the first pick roughly uniformly.
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 3000; ++i)
    ++counts[stochastic_select(cs, 1, 1e9, rng)[0]];
  for (int c : counts) CHECK(c > 800);

  // Draws are without replacement.
  for (int i = 0; i < 50; ++i) {
    auto picked = stochastic_select(cs, 3, 1.0, rng);
    std::sort(picked.begin(), picked.end());
    CHECK(picked == std::vector<int>{0, 1, 2});
  }
}

TEST_CASE("gold-guided narrow search touches a linear slice of the tree") {
  MdpSpec spec = make_spec(2, 4);
  NeedleReward needle;
  needle.target = make_trajectory(spec, 0, {0, 1, 1, 0});
  RewardSpec reward;
  reward.family = needle;

  GuidanceStack stack;
  stack.push(gold_values(spec, reward), 1.0);

  SearchConfig cfg;
  cfg.beam_width = 1;
  cfg.successors = 2;
  cfg.chunk_length = 1;
  cfg.expansion = ExpansionMode::EnumerateAll;

  RngStream rng(0, "gold_guided", 0);
  SearchTrace trace;
  SearchResult res =
      guided_generate(spec, reward, BasePolicy{}, stack, cfg, 0, rng, &trace);

  CHECK(res.best.trajectory.tokens == std::vector<TokenId>{0, 1, 1, 0});
  CHECK(res.best.reward == 1.0);
  // Two fresh nodes per level, four levels: 8 of the tree's 30 nodes.
  CHECK(res.ledger.nodes_expanded == 8);
  CHECK(res.ledger.tokens_generated == 8);
  CHECK(res.ledger.value_queries == 8);  // 2 candidates x 4 scoring rounds
  CHECK(res.ledger.reward_queries == 2);
  CHECK(trace.rounds.size() == 4);
}

TEST_CASE("fixed-length ledger identities for sampled search") {
  MdpSpec spec = make_spec(3, 6);
  RewardSpec reward;
  reward.family = HashLeafReward{3, 1.0};

  GuidanceStack stack;  // two guides -> two value queries per candidate
  stack.push(zero_fn(), 1.0);
  stack.push(zero_fn(), 2.0);

  SearchConfig cfg;
  cfg.beam_width = 2;
  cfg.successors = 2;
  cfg.chunk_length = 2;

  RngStream rng(1, "ledger_test", 0);
  SearchTrace trace;
  SearchResult res =
      guided_generate(spec, reward, BasePolicy{}, stack, cfg, 0, rng, &trace);

  // Pool of 4 regrown to depth 6 in 2-token chunks: 3 scoring rounds.
  CHECK(res.ledger.tokens_generated == 24);  // U * H
  CHECK(res.ledger.value_queries == 24);     // U * I * H / L
  CHECK(res.ledger.reward_queries == 4);     // final pick scores the pool
  CHECK(res.ledger.default_value_hits == 0); // zero fns never miss
  REQUIRE(trace.rounds.size() == 3);
  for (const auto& round : trace.rounds) {
    CHECK(round.candidates.size() == 4);
    CHECK(static_cast<int>(round.candidates[0].prefix.tokens.size()) ==
          2 * round.round);
  }
  CHECK(trace.rounds[0].selected.size() == 2);
  CHECK(trace.rounds.back().selected.empty());  // final round only scores
}

TEST_CASE("ragged chunks truncate at the horizon") {
  MdpSpec spec = make_spec(2, 5);
  RewardSpec reward;
  reward.family = HashLeafReward{9, 1.0};
  GuidanceStack stack;
  stack.push(zero_fn(), 1.0);

  SearchConfig cfg;
  cfg.beam_width = 2;
  cfg.successors = 2;
  cfg.chunk_length = 2;

  RngStream rng(2, "ragged", 0);
  SearchTrace trace;
  SearchResult res =
      guided_generate(spec, reward, BasePolicy{}, stack, cfg, 0, rng, &trace);
  CHECK(res.best.trajectory.tokens.size() == 5);
  CHECK(res.ledger.tokens_generated == 20);  // U * H even when L misses
  CHECK(res.ledger.value_queries == 12);     // ceil(5/2) = 3 scoring rounds
  CHECK(trace.rounds.size() == 3);
}

TEST_CASE("terminal-token candidates freeze instead of growing") {
  MdpSpec spec = make_spec(3, 4);
  spec.terminal_token = 2;
  RewardSpec reward;
  reward.family = HashLeafReward{31, 1.0};

  BasePolicy base;
  base.kind = SeededLogitsBase{7, 1.0};
  GuidanceStack stack;
  stack.push(zero_fn(), 1.0);

  SearchConfig cfg;
  cfg.beam_width = 2;
  cfg.successors = 3;

  for (std::uint64_t run = 0; run < 20; ++run) {
    RngStream rng(run, "eos_search", 0);
    SearchTrace trace;
    SearchResult res =
        guided_generate(spec, reward, base, stack, cfg, 0, rng, &trace);
    CHECK(res.best.trajectory.complete);
    CHECK(spec.is_complete(res.best.trajectory.tokens));
    CHECK(res.best.reward >= 0.0);
    CHECK(res.best.reward <= 1.0);
    for (const auto& round : trace.rounds) {
      CHECK(round.candidates.size() <= 6);
      for (const auto& c : round.candidates) {
        CHECK(c.prefix.tokens.size() <= 4);
        CHECK(c.complete == spec.is_complete(c.prefix.tokens));
      }
    }
  }
}

TEST_CASE("value-score final pick uses one reward query") {
  MdpSpec spec = make_spec(2, 4);
  NeedleReward needle;
  needle.target = make_trajectory(spec, 0, {1, 0, 0, 1});
  RewardSpec reward;
  reward.family = needle;

  GuidanceStack stack;
  stack.push(gold_values(spec, reward), 0.5);

  SearchConfig cfg;
  cfg.beam_width = 1;
  cfg.successors = 2;
  cfg.chunk_length = 1;
  cfg.expansion = ExpansionMode::EnumerateAll;
  cfg.final_pick = FinalPick::ByValueScore;

  RngStream rng(0, "value_pick", 0);
  SearchResult res =
      guided_generate(spec, reward, BasePolicy{}, stack, cfg, 0, rng);
  CHECK(res.best.trajectory.tokens == std::vector<TokenId>{1, 0, 0, 1});
  CHECK(res.best.reward == 1.0);
  CHECK(res.ledger.reward_queries == 1);
}

TEST_CASE("base log-probability joins the score only on request") {
  MdpSpec spec = make_spec(2, 2);
  RewardSpec reward;
  reward.family = HashLeafReward{2, 1.0};

  ExplicitTableBase rows;
  rows.rows[Prefix{0, {}}] = {0.9, 0.1};
  rows.rows[Prefix{0, {0}}] = {0.8, 0.2};
  rows.rows[Prefix{0, {1}}] = {0.5, 0.5};
  BasePolicy base;
  base.kind = rows;

  GuidanceStack stack;
  stack.push(zero_fn(), 1.0);
  stack.include_base_logprob = true;

  SearchConfig cfg;
  cfg.beam_width = 1;
  cfg.successors = 2;
  cfg.chunk_length = 1;
  cfg.expansion = ExpansionMode::EnumerateAll;
  cfg.final_pick = FinalPick::ByValueScore;

  RngStream rng(0, "logprob_pick", 0);
  SearchResult res = guided_generate(spec, reward, base, stack, cfg, 0, rng);
  // Scores reduce to cumulative base log-probability: the modal sequence.
  CHECK(res.best.trajectory.tokens == std::vector<TokenId>{0, 0});
}

TEST_CASE("best-of-n sampling ledger and determinism") {
  MdpSpec spec = make_spec(2, 3);
  RewardSpec reward;
  reward.family = HashLeafReward{10, 1.0};

  RngStream rng_a(4, "bon", 0);
  SearchResult a = bon_generate(spec, reward, BasePolicy{}, 5, 0, rng_a);
  CHECK(a.ledger.tokens_generated == 15);
  CHECK(a.ledger.reward_queries == 5);
  CHECK(a.ledger.value_queries == 0);
  CHECK(a.best.trajectory.complete);

  RngStream rng_b(4, "bon", 0);
  SearchResult b = bon_generate(spec, reward, BasePolicy{}, 5, 0, rng_b);
  CHECK(a.best.trajectory == b.best.trajectory);
  CHECK(a.ledger == b.ledger);

  CHECK_THROWS_AS(bon_generate(spec, reward, BasePolicy{}, 0, 0, rng_a),
                  InvalidConfig);
}

TEST_CASE("exhaustive best-of-n touches the whole tree and finds the max") {
  MdpSpec spec = make_spec(2, 4);
  RewardSpec reward;
  reward.family = HashLeafReward{77, 1.0};

  RngStream rng(0, "bon_exhaustive", 0);
  SearchResult res =
      bon_generate(spec, reward, BasePolicy{}, 0, 0, rng, true);
  CHECK(res.ledger.nodes_expanded == 30);
  CHECK(res.ledger.reward_queries == 16);
  CHECK(res.ledger.tokens_generated == 64);
  CHECK(res.best.reward ==
        doctest::Approx(oracle::optimal_return(spec, reward)).epsilon(1e-15));

  // Constant rewards tie everywhere; lexicographic order breaks them.
  RewardSpec flat;
  TokenPreferenceReward zero_pref;
  zero_pref.weights.assign(4, {0.0, 0.0});
  flat.family = zero_pref;
  SearchResult tie = bon_generate(spec, flat, BasePolicy{}, 0, 0, rng, true);
  CHECK(tie.best.trajectory.tokens == std::vector<TokenId>{0, 0, 0, 0});
}

TEST_CASE("guided search is deterministic per stream") {
  MdpSpec spec = make_spec(3, 4);
  RewardSpec reward;
  reward.family = HashLeafReward{41, 1.0};
  BasePolicy base;
  base.kind = SeededLogitsBase{13, 1.0};
  GuidanceStack stack;
  stack.push(zero_fn(), 1.0);

  SearchConfig cfg;
  cfg.beam_width = 2;
  cfg.successors = 3;
  cfg.selection = SelectionRule::StochasticSoftmax;
  cfg.softmax_temperature = 0.7;

  RngStream a(11, "guided_det", 3);
  RngStream b(11, "guided_det", 3);
  SearchResult ra = guided_generate(spec, reward, base, stack, cfg, 0, a);
  SearchResult rb = guided_generate(spec, reward, base, stack, cfg, 0, b);
  CHECK(ra.best.trajectory == rb.best.trajectory);
  CHECK(ra.best.reward == rb.best.reward);
  CHECK(ra.ledger == rb.ledger);

  RngStream c(11, "guided_det", 4);  // different stream, same everything else
  SearchResult rc = guided_generate(spec, reward, base, stack, cfg, 0, c);
  CHECK(ra.best.trajectory.tokens != rc.best.trajectory.tokens);
}
