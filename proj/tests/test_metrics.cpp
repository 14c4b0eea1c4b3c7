#include <gtest/gtest.h>

#include <bit>

#include "grl/envs.hpp"
#include "grl/metrics.hpp"

using namespace grl;

namespace {

/// Pays 0 on arm 0 and 1 on arm 1.
EnvPtr zero_one_bandit() {
  return std::make_shared<DeterministicBanditEnv>("zero_one", std::vector<Rational>{Rational(0), Rational(1)},
                                                  std::vector<Rational>{Rational(0), Rational(1)});
}

SchedulePolicy bad_at_powers_of_two() { return SchedulePolicy(2, ScheduledAgent::powers_of_two(Action(0), Action(1))); }

}  // namespace

TEST(Estimate, MonteCarloInterval) {
  const std::vector<double> xs{1.0, 2.0, 3.0};
  const auto e = monte_carlo_estimate(xs);
  EXPECT_DOUBLE_EQ(e.mean, 2.0);
  ASSERT_TRUE(e.ci_halfwidth.has_value());
  EXPECT_DOUBLE_EQ(*e.ci_halfwidth, 1.96 / std::sqrt(3.0));
  EXPECT_EQ(e.n, 3u);
  EXPECT_THROW(monte_carlo_estimate(std::vector<double>{1.0}), ValidationError);
  EXPECT_FALSE(exact_estimate(0.5).ci_halfwidth.has_value());
}

TEST(Estimate, Separation) {
  const Estimate lo{0.1, 0.05, 10}, hi{0.3, 0.1, 10}, overlap{0.2, 0.1, 10};
  EXPECT_TRUE(separated_below(lo, hi));
  EXPECT_FALSE(separated_below(lo, overlap));
  EXPECT_FALSE(separated_below(hi, lo));
}

TEST(MetricSeries, OrderedLookup) {
  MetricSeries s("regret");
  s.add(1, exact_estimate(0.0));
  s.add(4, exact_estimate(2.0));
  EXPECT_EQ(s.at(4).value.mean, 2.0);
  EXPECT_THROW(s.add(4, exact_estimate(1.0)), ValidationError);
  EXPECT_THROW(s.at(2), ValidationError);
}

TEST(NormalizedReturn, GeometricWindow) {
  const std::vector<double> r{1, 0, 1, 1};
  // From t = 3 with gamma 1/2: (1/2) r_3 + (1/4) r_4.
  EXPECT_DOUBLE_EQ(normalized_return(*geometric(0.5), r, 3, 4), 0.75);
  EXPECT_DOUBLE_EQ(normalized_return(*geometric(0.5), r, 1, 1), 0.5);
}

TEST(Regret, PowersOfTwoScheduleCountsItsMistakes) {
  const auto env = zero_one_bandit();
  const auto pol = bad_at_powers_of_two();
  for (Time m : {1, 2, 3, 8, 64, 100, 1024}) {
    const double expected = std::bit_width(static_cast<std::uint64_t>(m));  // floor(log2 m) + 1
    EXPECT_NEAR(exact_regret(*env, pol, m), expected, 1e-9) << "m=" << m;
  }
}

TEST(Regret, AnalyticAndSearchedOptimaAgree) {
  const auto env = make_bernoulli_bandit({0.2, 0.7});
  EXPECT_NEAR(optimal_reward_sum(*env, 6), exact_optimal_reward_sum(*env, 6), 1e-12);
  EXPECT_NEAR(exact_optimal_reward_sum(*make_trap_env(), 5), 5.0, 1e-12);
}

TEST(Regret, MonteCarloCoversTheExactValue) {
  const auto env = make_bernoulli_bandit({0.2, 0.7});
  const AgentFactory random = [](RandomStream r) { return std::make_unique<RandomAgent>(2, r); };
  const auto est = regret(env, random, 20, 400, 11);
  EXPECT_NEAR(exact_regret(*env, UniformPolicy(2), 10), 2.5, 1e-12);
  EXPECT_LE(std::abs(est.mean - 5.0), 4 * *est.ci_halfwidth);
}

TEST(ValueGap, PowersOfTwoScheduleLosesHalfAtEachPower) {
  const auto env = zero_one_bandit();
  const auto pol = bad_at_powers_of_two();
  const auto d = geometric(0.5);
  for (Time n : {1, 3, 6, 10}) {
    const Time t = Time{1} << n;
    const Time m = evaluation_horizon(*d, t, 0.01);
    EXPECT_GE(exact_expected_value_gap(*env, pol, *d, t, m), 0.5 - 1e-9) << t;
    if (2 * t > m + 1)  // no further mistake inside the window
      EXPECT_NEAR(exact_expected_value_gap(*env, pol, *d, t + 1, m + 1), 0.0, 1e-12) << t;
  }
}

TEST(ValueGap, OptimalPolicyHasNoGap) {
  const auto env = make_bernoulli_bandit({0.4, 0.6});
  const SchedulePolicy best(2, [](Time) { return Action(1); });
  EXPECT_NEAR(exact_expected_value_gap(*env, best, *geometric(0.7), 4, 12), 0.0, 1e-12);
}

TEST(ValueGap, ActionGapOfTheTrap) {
  const auto trap = make_trap_env();
  const auto d = geometric(0.5);
  const auto s = trap->initial_state();
  EXPECT_NEAR(action_gap(*trap, *d, s, 1, 30, Action(1)), 1.0 - std::ldexp(1.0, -30), 1e-12);
  EXPECT_EQ(action_gap(*trap, *d, s, 1, 30, Action(0)), 0.0);
}

TEST(ValueGap, MonteCarloSamplesAreUnbiased) {
  const auto env = make_bernoulli_bandit({0.3, 0.8});
  const auto d = geometric(0.6);
  const Time t = 3, m = 8;
  const double exact = exact_expected_value_gap(*env, UniformPolicy(2), *d, t, m);
  const AgentFactory random = [](RandomStream r) { return std::make_unique<RandomAgent>(2, r); };
  const auto est = expected_value_gap(env, random, *d, t, m, 2000, 5);
  EXPECT_LE(std::abs(est.mean - exact), 4 * *est.ci_halfwidth) << est.mean << " vs " << exact;
  EXPECT_THROW(expected_value_gap(env, random, *d, t, m, 1), ValidationError);
}

TEST(BayesTv, OneStepCoins) {
  // Members 0.8 and 0.2 against the mixture 0.5: (1/2)(0.3) + (1/2)(0.3).
  const auto cls = EnvironmentClass::uniform("coins", {make_bernoulli_bandit({0.8}), make_bernoulli_bandit({0.2})});
  EXPECT_NEAR(bayes_expected_tv(BeliefState(cls), UniformPolicy(1), 1), 0.3, 1e-15);
}

TEST(BayesTv, VanishesForASingletonClass) {
  const auto cls = EnvironmentClass::uniform("one", {make_bernoulli_bandit({0.4, 0.6})});
  EXPECT_NEAR(bayes_expected_tv(BeliefState(cls), UniformPolicy(2), 4), 0.0, 1e-15);
}

TEST(BayesTv, ThompsonAgentContinuation) {
  const auto cls = make_example1_class(3);
  ThompsonAgent agent(cls, geometric(0.5), EpsilonSchedule::standard(), RandomStream(2, StreamRole::agent));
  const double f = agent_bayes_expected_tv(agent, History{}, 6);
  EXPECT_GE(f, 0.0);
  EXPECT_LE(f, 1.0);
  RandomAgent random(2, RandomStream(0, StreamRole::agent));
  EXPECT_THROW(agent_bayes_expected_tv(random, History{}, 3), ValidationError);
}

TEST(Recoverability, TrapIsUnrecoverable) {
  const auto trap = make_trap_env();
  const auto d = geometric(0.5);
  EXPECT_EQ(recoverability_gap(*trap, *d, 1, 20), 0.0);
  for (Time t = 2; t <= 5; ++t) EXPECT_NEAR(recoverability_gap(*trap, *d, t, t + 60), 1.0, 1e-9) << t;
  EXPECT_THROW(recoverability_gap(*trap, *d, 5, 4), ValidationError);
}

TEST(Recoverability, BanditsAreRecoverable) {
  const auto d = geometric(0.5);
  for (Time t = 1; t <= 4; ++t)
    EXPECT_NEAR(recoverability_gap(*make_bernoulli_bandit({0.1, 0.9}), *d, t, t + 10), 0.0, 1e-9) << t;
}

TEST(Recoverability, ExampleOneStartIsRecoverable) {
  // Every state returns to s0 within two steps; the gap is bounded by the lost prefix.
  const auto env = make_example1_env(0);
  const double g = recoverability_gap(*env, *geometric(0.5), 4, 30);
  EXPECT_GE(g, 0.0);
  EXPECT_LE(g, 1.0);
}
