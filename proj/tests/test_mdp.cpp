#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "iro/mdp.hpp"

using namespace iro;

namespace {

MdpSpec small_spec(int vocab, int horizon) {
  MdpSpec spec;
  spec.vocab_size = vocab;
  spec.horizon = horizon;
  spec.prompts = {{}};
  spec.r_max = 1.0;
  return spec;
}

}  // namespace

TEST_CASE("spec validation rejects out-of-range fields") {
  MdpSpec spec = small_spec(2, 3);
  CHECK_NOTHROW(spec.validate());

  MdpSpec bad = spec;
  bad.vocab_size = 1;
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);

  bad = spec;
  bad.horizon = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);

  bad = spec;
  bad.prompts.clear();
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);

  bad = spec;
  bad.terminal_token = 5;
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);

  bad = spec;
  bad.r_max = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);
}

TEST_CASE("prefix step index and transition") {
  MdpSpec spec = small_spec(3, 2);
  Prefix root = spec.initial_state(0);
  CHECK(root.step() == 1);

  Prefix s1 = transition(spec, root, 2);
  CHECK(s1.tokens == std::vector<TokenId>{2});
  CHECK(s1.step() == 2);

  Prefix s2 = transition(spec, s1, 0);
  CHECK(s2.step() == 3);
  CHECK(spec.is_terminal(s2));
  CHECK_THROWS_AS(transition(spec, s2, 0), StepOverflow);
  CHECK_THROWS_AS(transition(spec, root, 3), InvalidConfig);
  CHECK_THROWS_AS(transition(spec, root, -1), InvalidConfig);
}

TEST_CASE("terminal token completes a trajectory early") {
  MdpSpec spec = small_spec(3, 4);
  spec.terminal_token = 2;

  Prefix root = spec.initial_state(0);
  Prefix s1 = transition(spec, root, 0);
  Prefix s2 = transition(spec, s1, 2);
  CHECK(spec.is_terminal(s2));
  CHECK_THROWS_AS(transition(spec, s2, 0), StepOverflow);

  Trajectory early = make_trajectory(spec, 0, {0, 2});
  CHECK(early.complete);
  Trajectory full = make_trajectory(spec, 0, {0, 0, 1, 1});
  CHECK(full.complete);
  Trajectory open = make_trajectory(spec, 0, {0, 0});
  CHECK_FALSE(open.complete);
}

TEST_CASE("reward requires a complete trajectory") {
  MdpSpec spec = small_spec(2, 3);
  RewardSpec reward;  // hash leaf
  Trajectory open = make_trajectory(spec, 0, {0});
  CHECK_THROWS_AS(evaluate_reward(spec, reward, open), IncompleteTrajectory);
}

TEST_CASE("hash leaf rewards are deterministic and in range") {
  MdpSpec spec = small_spec(4, 3);
  RewardSpec reward;
  reward.family = HashLeafReward{17, 1.0};

  auto taus = enumerate_trajectories(spec, 0);
  CHECK(taus.size() == 64);
  std::set<double> seen;
  for (const auto& tau : taus) {
    double r1 = evaluate_reward(spec, reward, tau);
    double r2 = evaluate_reward(spec, reward, tau);
    CHECK(r1 == r2);
    CHECK(r1 >= 0.0);
    CHECK(r1 <= 1.0);
    seen.insert(r1);
  }
  // 64 hashed leaves should essentially never collide.
  CHECK(seen.size() == 64);

  RewardSpec other;
  other.family = HashLeafReward{18, 1.0};
  CHECK(evaluate_reward(spec, other, taus[0]) !=
        evaluate_reward(spec, reward, taus[0]));

  // Scale is clamped into [0, r_max] when the spec is finalized.
  RewardSpec wide;
  wide.family = HashLeafReward{17, 9.0};
  wide.clamp_to(spec.r_max);
  CHECK(std::get<HashLeafReward>(wide.family).scale == 1.0);
}

TEST_CASE("needle reward hits exactly one trajectory") {
  MdpSpec spec = small_spec(2, 3);
  NeedleReward needle;
  needle.target = make_trajectory(spec, 0, {1, 0, 1});
  RewardSpec reward;
  reward.family = needle;

  int hits = 0;
  for (const auto& tau : enumerate_trajectories(spec, 0)) {
    double r = evaluate_reward(spec, reward, tau);
    if (r == 1.0) {
      ++hits;
      CHECK(tau.tokens == std::vector<TokenId>{1, 0, 1});
    } else {
      CHECK(r == 0.0);
    }
  }
  CHECK(hits == 1);
}

TEST_CASE("token preference sums weights then clamps to r_max") {
  MdpSpec spec = small_spec(2, 4);
  TokenPreferenceReward pref;
  // Unit weight for token 0 at every step: the all-zeros trajectory sums to
  // 4 and is clamped to r_max = 1.
  pref.weights.assign(4, {1.0, 0.0});
  RewardSpec reward;
  reward.family = pref;

  Trajectory zeros = make_trajectory(spec, 0, {0, 0, 0, 0});
  CHECK(evaluate_reward(spec, reward, zeros) == 1.0);
  Trajectory ones = make_trajectory(spec, 0, {1, 1, 1, 1});
  CHECK(evaluate_reward(spec, reward, ones) == 0.0);
  Trajectory mixed = make_trajectory(spec, 0, {0, 1, 1, 1});
  CHECK(evaluate_reward(spec, reward, mixed) == 1.0);

  // With a higher cap the raw sum shows through.
  MdpSpec wide = spec;
  wide.r_max = 10.0;
  CHECK(evaluate_reward(wide, reward, zeros) == 4.0);
}

TEST_CASE("explicit table lookup with default for missing keys") {
  MdpSpec spec = small_spec(2, 2);
  ExplicitTableReward table;
  table.table[{0, {0, 1}}] = 0.75;
  table.table[{0, {1, 1}}] = 0.25;
  RewardSpec reward;
  reward.family = table;

  CHECK(evaluate_reward(spec, reward, make_trajectory(spec, 0, {0, 1})) ==
        0.75);
  CHECK(evaluate_reward(spec, reward, make_trajectory(spec, 0, {1, 1})) ==
        0.25);
  CHECK(evaluate_reward(spec, reward, make_trajectory(spec, 0, {0, 0})) ==
        0.0);

  RewardSpec clamped = reward;
  std::get<ExplicitTableReward>(clamped.family).table[{0, {1, 0}}] = 3.0;
  clamped.clamp_to(1.0);
  CHECK(evaluate_reward(spec, clamped, make_trajectory(spec, 0, {1, 0})) ==
        1.0);
}

TEST_CASE("enumeration is lexicographic and matches vocab^horizon") {
  MdpSpec spec = small_spec(2, 2);
  auto taus = enumerate_trajectories(spec, 0);
  REQUIRE(taus.size() == 4);
  CHECK(taus[0].tokens == std::vector<TokenId>{0, 0});
  CHECK(taus[1].tokens == std::vector<TokenId>{0, 1});
  CHECK(taus[2].tokens == std::vector<TokenId>{1, 0});
  CHECK(taus[3].tokens == std::vector<TokenId>{1, 1});
  for (const auto& tau : taus) CHECK(tau.complete);
}

TEST_CASE("enumeration with a terminal token prunes continuations") {
  MdpSpec spec = small_spec(2, 2);
  spec.terminal_token = 1;
  auto taus = enumerate_trajectories(spec, 0);
  REQUIRE(taus.size() == 3);
  CHECK(taus[0].tokens == std::vector<TokenId>{0, 0});
  CHECK(taus[1].tokens == std::vector<TokenId>{0, 1});
  CHECK(taus[2].tokens == std::vector<TokenId>{1});
  CHECK(taus[2].complete);
}

TEST_CASE("node counts follow the geometric series") {
  // Binary tree of depth 4: 2 + 4 + 8 + 16 = 30 non-root nodes.
  CHECK(count_tree_nodes(small_spec(2, 4), 0) == 30);
  CHECK(count_tree_nodes(small_spec(2, 2), 0) == 6);
  CHECK(count_tree_nodes(small_spec(3, 3), 0) == 39);
}

TEST_CASE("enumeration cap aborts oversized instances") {
  MdpSpec spec = small_spec(4, 10);  // 4^10 nodes, over a tiny cap
  CHECK_THROWS_AS(enumerate_trajectories(spec, 0, 1000), TooLarge);
  CHECK_THROWS_AS(count_tree_nodes(spec, 0, 1000), TooLarge);
}

TEST_CASE("token strings round-trip") {
  std::vector<TokenId> tokens{3, 0, 12};
  CHECK(token_string(tokens) == "3 0 12");
  CHECK(parse_token_string("3 0 12") == tokens);
  CHECK(parse_token_string("").empty());
  CHECK(token_string({}) == "");
  CHECK_THROWS_AS(parse_token_string("1 x 2"), IoError);
}
