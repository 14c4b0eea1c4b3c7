#include <gtest/gtest.h>

#include "grl/agents.hpp"
#include "grl/envs.hpp"
#include "grl/metrics.hpp"

using namespace grl;

namespace {

AgentFactory thompson(ClassPtr cls, DiscountPtr d, EpsilonSchedule eps) {
  return [=](RandomStream r) { return std::make_unique<ThompsonAgent>(cls, d, eps, r); };
}

const ThompsonAgent& as_thompson(const Simulation& sim) { return dynamic_cast<const ThompsonAgent&>(sim.agent()); }

}  // namespace

TEST(BlockHorizon, IsAtLeastOne) {
  EXPECT_EQ(detail::block_horizon(*geometric(0.5), 1, 0.25), 2);
  EXPECT_EQ(detail::block_horizon(*geometric(0.5), 1, 1.0), 1);
}

TEST(Thompson, BlocksOfTwoUnderConstantTolerance) {
  const auto cls = make_example1_class(4);
  auto sim = make_simulation(cls->member(0), thompson(cls, geometric(0.5), EpsilonSchedule::constant(0.25)), 1, 0);
  sim.run_until(21);
  const auto& blocks = as_thompson(sim).blocks();
  ASSERT_EQ(blocks.size(), 10u);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    EXPECT_EQ(blocks[i].start, Time(2 * i + 1));
    EXPECT_EQ(blocks[i].end, Time(2 * i + 3));
    EXPECT_DOUBLE_EQ(blocks[i].truncation_bound, 0.25);
  }
}

TEST(Thompson, PrepareIsIdempotentWithinABlock) {
  const auto cls = make_example1_class(4);
  ThompsonAgent agent(cls, geometric(0.9), EpsilonSchedule::standard(), RandomStream(5, StreamRole::agent));
  const History h;
  agent.prepare(h);
  const auto first = agent.sampled_index();
  const auto end = agent.block_end();
  for (int i = 0; i < 5; ++i) agent.prepare(h);
  EXPECT_EQ(agent.blocks().size(), 1u);
  EXPECT_EQ(agent.sampled_index(), first);
  EXPECT_EQ(agent.block_end(), end);
}

TEST(Thompson, RejectsHistoriesOutOfSync) {
  const auto cls = make_example1_class(2);
  ThompsonAgent agent(cls, geometric(0.5), EpsilonSchedule::standard(), RandomStream(1, StreamRole::agent));
  History h;
  h.push(Action(1), 1);
  EXPECT_THROW(agent.prepare(h), ValidationError);
  EXPECT_THROW(agent.continuation_policy(History{}, 5), ValidationError);
}

TEST(Thompson, SingletonClassPlaysTheInformedActions) {
  const auto env = make_example1_env(2);
  const auto cls = EnvironmentClass::uniform("one", {env});
  const auto d = geometric(0.9);
  auto ts = make_simulation(env, thompson(cls, d, EpsilonSchedule::standard()), 4, 0);
  auto inf = make_simulation(env, [&](RandomStream) { return std::make_unique<InformedAgent>(env, d,
                                                                   EpsilonSchedule::standard()); }, 4, 0);
  ts.run_until(40);
  inf.run_until(40);
  EXPECT_EQ(ts.history(), inf.history());
}

TEST(Thompson, SameStreamSameTrajectory) {
  const auto cls = make_example1_class(6);
  const auto f = thompson(cls, geometric(0.9), EpsilonSchedule::standard());
  auto a = make_simulation(cls->member(3), f, 9, 2);
  auto b = make_simulation(cls->member(3), f, 9, 2);
  a.run_until(60);
  b.run_until(60);
  EXPECT_EQ(a.history(), b.history());
  ASSERT_EQ(as_thompson(a).blocks().size(), as_thompson(b).blocks().size());
  for (std::size_t i = 0; i < as_thompson(a).blocks().size(); ++i)
    EXPECT_EQ(as_thompson(a).blocks()[i].sampled_index, as_thompson(b).blocks()[i].sampled_index);
}

TEST(Thompson, EventuallyFollowsTheTruthInExampleOne) {
  // Once a reward of 1 is seen only nu_k survives, so every later block samples it.
  const auto cls = make_example1_class(3);
  int identified = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto sim = make_simulation(cls->member(1), thompson(cls, geometric(0.9), EpsilonSchedule::standard()), seed, 0);
    sim.run_until(200);
    const auto& agent = as_thompson(sim);
    if (agent.belief()->posterior(1) == 1.0) {
      ++identified;
      EXPECT_EQ(agent.blocks().back().sampled_index, 1u);
      EXPECT_EQ(sim.rewards().back(), 1.0);
    }
  }
  EXPECT_GT(identified, 0);
}

TEST(Bayes, StaysOnTheSafeArm) {
  const auto cls = make_discussion_bandit_class(4, 0.05);
  const auto d = geometric(0.9);
  for (std::size_t truth = 0; truth < 4; ++truth) {
    auto sim = make_simulation(cls->member(truth), [&](RandomStream) {
      return std::make_unique<BayesAgent>(cls, d, EpsilonSchedule::constant(0.01));
    }, 0, truth);
    sim.run_until(21);
    for (const auto& s : sim.history()) EXPECT_EQ(s.action, Action(0)) << "truth " << truth;
  }
}

TEST(Bayes, ContinuationPolicyPlansInTheMixture) {
  const auto cls = make_discussion_bandit_class(2, 0.05);
  BayesAgent agent(cls, geometric(0.9), EpsilonSchedule::standard());
  agent.prepare(History{});
  const auto pol = agent.continuation_policy(History{}, 10);
  EXPECT_EQ(pol->action_distribution(History{})[0], 1.0);
}

TEST(Informed, PicksTheBestArm) {
  const auto env = make_bernoulli_bandit({0.3, 0.9, 0.5});
  InformedAgent agent(env, geometric(0.5), EpsilonSchedule::standard());
  EXPECT_EQ(agent.act(History{}), Action(1));
}

TEST(Scheduled, PowersOfTwo) {
  const auto schedule = ScheduledAgent::powers_of_two(Action(0), Action(1));
  EXPECT_EQ(schedule(1), Action(0));
  EXPECT_EQ(schedule(2), Action(0));
  EXPECT_EQ(schedule(3), Action(1));
  EXPECT_EQ(schedule(4), Action(0));
  EXPECT_EQ(schedule(5), Action(1));
  EXPECT_EQ(schedule(1024), Action(0));
  EXPECT_EQ(schedule(1023), Action(1));
  ScheduledAgent agent("p2", 2, schedule);
  EXPECT_EQ(agent.fixed_policy()->action_distribution(History{})[0], 1.0);
}

TEST(Random, ActsUniformly) {
  RandomAgent agent(2, RandomStream(8, StreamRole::agent));
  constexpr int n = 20000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += agent.act(History{}).id;
  EXPECT_NEAR(ones / double(n), 0.5, 3 * std::sqrt(0.25 / n));
  EXPECT_EQ(agent.fixed_policy()->action_distribution(History{}), (Distribution{0.5, 0.5}));
}

TEST(Simulation, RecordsRewardsAndCopiesIndependently) {
  const auto trap = make_trap_env();
  Simulation sim(trap, std::make_unique<ScheduledAgent>("s", 2, [](Time t) { return Action(t == 3 ? 1u : 0u); }),
                 RandomStream(1, StreamRole::environment));
  sim.run_until(3);
  Simulation copy = sim;
  sim.run_until(6);
  EXPECT_EQ(sim.rewards(), (std::vector<double>{1, 1, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(sim.reward_sum(2), 2.0);
  EXPECT_EQ(copy.time(), 3);
  copy.run_until(4);
  EXPECT_EQ(copy.rewards().back(), 0.0);
}

TEST(Simulation, RejectsActionCountMismatch) {
  EXPECT_THROW(Simulation(make_trap_env(), std::make_unique<RandomAgent>(3, RandomStream(0, StreamRole::agent)),
                          RandomStream(0, StreamRole::environment)),
               ValidationError);
}
