#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "grl/discount.hpp"

using namespace grl;

TEST(Geometric, ClosedForms) {
  const auto d = geometric(0.5);
  EXPECT_DOUBLE_EQ(d->gamma(1), 0.5);
  EXPECT_DOUBLE_EQ(d->normalizer(1), 1.0);
  EXPECT_DOUBLE_EQ(d->normalizer(3), 0.25);
  EXPECT_DOUBLE_EQ(d->immediate_weight(7), 0.5);
  EXPECT_DOUBLE_EQ(d->continuation_weight(7), 0.5);
  EXPECT_THROW(geometric(1.0), ValidationError);
  EXPECT_THROW(geometric(0.0), ValidationError);
}

TEST(Geometric, EffectiveHorizon) {
  EXPECT_EQ(effective_horizon(*geometric(0.5), 1, 0.25), 2);
  EXPECT_EQ(effective_horizon(*geometric(0.5), 100, 0.25), 2);
  EXPECT_EQ(effective_horizon(*geometric(0.5), 1, 1.0), 0);
  EXPECT_EQ(effective_horizon(*geometric(0.9), 1, 0.01), 44);  // ceil(ln 0.01 / ln 0.9)
  EXPECT_THROW(effective_horizon(*geometric(0.5), 1, 0.0), ValidationError);
}

TEST(Geometric, TailRatioBound) { EXPECT_DOUBLE_EQ(tail_ratio_bound(*geometric(0.5), 1, 0.25), 1.0); }

TEST(Geometric, TelescopingWeights) {
  const auto b = telescoping_weights(*geometric(0.5), 1, 5);
  ASSERT_EQ(b.size(), 5u);
  EXPECT_DOUBLE_EQ(b[0], 2.0);
  for (std::size_t i = 1; i < b.size(); ++i) EXPECT_DOUBLE_EQ(b[i], 1.0);
}

// Oracle: 40-digit direct sums of exp(-sqrt k)/sqrt k.
TEST(SqrtExp, NormalizerMatchesHighPrecisionSums) {
  const auto d = sqrt_exp();
  const std::pair<Time, double> expected[] = {
      {1, 0.94853966919315563941},          {2, 0.58066022802171331781},
      {10, 0.091583065721875415472},        {100, 0.000093090662923265138051},
      {1024, 2.5526740091905966054e-14},    {5000, 3.9201913014874944931e-31},
  };
  for (const auto& [t, g] : expected) EXPECT_NEAR(d->normalizer(t) / g, 1.0, 1e-12) << "t=" << t;
}

TEST(SqrtExp, EffectiveHorizonMatchesOracle) {
  const auto d = sqrt_exp();
  EXPECT_EQ(effective_horizon(*d, 1, 0.5), 2);
  EXPECT_EQ(effective_horizon(*d, 16, 0.25), 13);
  EXPECT_EQ(effective_horizon(*d, 100, 0.01), 114);
  EXPECT_EQ(effective_horizon(*d, 1000, 0.1), 151);
}

TEST(SqrtExp, TailBoundDominatesNormalizer) {
  const auto d = sqrt_exp();
  for (Time n : {1, 2, 5, 50, 500, 3000}) EXPECT_GE(d->tail_bound(n), d->normalizer(n)) << n;
}

TEST(SqrtExp, ValuesDoNotDependOnQueryOrder) {
  const auto warm = sqrt_exp();
  for (Time t = 1; t <= 5000; t += 7) warm->normalizer(t);
  const auto cold = sqrt_exp();
  for (Time t : {4999, 3, 1024, 1025, 2048}) EXPECT_EQ(warm->normalizer(t), cold->normalizer(t)) << t;
}

TEST(SqrtExp, ConcurrentQueriesAgree) {
  const auto shared = sqrt_exp();
  std::vector<double> out(8);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&, i] { out[static_cast<std::size_t>(i)] = shared->normalizer(3000 + i % 2); });
  for (auto& th : threads) th.join();
  for (int i = 0; i < 8; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)], sqrt_exp()->normalizer(3000 + i % 2));
}

TEST(Table, SuffixSumsAndFiniteSupport) {
  const TableDiscount d({0.5, 0.25, 0.125});
  EXPECT_DOUBLE_EQ(d.normalizer(1), 0.875);
  EXPECT_DOUBLE_EQ(d.normalizer(3), 0.125);
  EXPECT_EQ(d.normalizer(4), 0.0);
  EXPECT_FALSE(d.has_mass(4));
  EXPECT_TRUE(d.has_mass(3));
  EXPECT_THROW(effective_horizon(d, 4, 0.5), DomainError);
  EXPECT_THROW(TableDiscount({}), ValidationError);
  EXPECT_THROW(TableDiscount({0.5, -0.1}), ValidationError);
}

TEST(Table, DeclaredTailMassIsSpreadGeometrically) {
  const TableDiscount d({1.0}, 0.5);
  EXPECT_DOUBLE_EQ(d.normalizer(2), 0.5);
  EXPECT_DOUBLE_EQ(d.gamma(2), 0.25);
  EXPECT_DOUBLE_EQ(d.normalizer(3), 0.25);
}

TEST(Table, FiniteHorizonWeightsAreUniform) {
  const auto d = TableDiscount::finite_horizon(4);
  EXPECT_DOUBLE_EQ(d->normalizer(1), 4.0);
  EXPECT_DOUBLE_EQ(d->immediate_weight(1), 0.25);
  EXPECT_DOUBLE_EQ(d->continuation_weight(1), 0.75);
  EXPECT_FALSE(d->has_mass(5));
}

TEST(Epsilon, Schedules) {
  const auto e = EpsilonSchedule::standard();
  EXPECT_DOUBLE_EQ(e(1), 0.5);
  EXPECT_DOUBLE_EQ(e(4), 0.5);
  EXPECT_DOUBLE_EQ(e(16), 0.25);
  EXPECT_DOUBLE_EQ(EpsilonSchedule::constant(0.3)(1000), 0.3);
  EXPECT_DOUBLE_EQ(EpsilonSchedule::power(1.0, 0.5, 0.5)(100), 0.1);
  EXPECT_DOUBLE_EQ(EpsilonSchedule::power(1.0, 0.5, 0.5)(1), 0.5);
}

TEST(DiscountAssumption, RegisteredSchedulesPass) {
  const std::vector<double> eps{0.5, 0.1, 0.01};
  EXPECT_TRUE(check_discount_assumption(*geometric(0.5), 1 << 14, eps).passed());
  EXPECT_TRUE(check_discount_assumption(*sqrt_exp(), 1 << 14, eps).passed());
}

TEST(DiscountAssumption, ZeroWeightIsReportedAtItsTime) {
  std::vector<double> v{1.0, 0.9, 0.8, 0.7, 0.0, 0.5, 0.4};
  const auto r = check_discount_assumption(TableDiscount(v, 0.4), 32, {0.5});
  EXPECT_FALSE(r.passed('a'));
  EXPECT_EQ(r.first_violation('a'), Time{5});
}

TEST(DiscountAssumption, IncreasingWeightIsReported) {
  const auto r = check_discount_assumption(TableDiscount({0.5, 0.6, 0.4}, 0.2), 8, {0.5});
  EXPECT_TRUE(r.passed('a'));
  EXPECT_EQ(r.first_violation('b'), Time{2});
}

TEST(DiscountAssumption, LinearHorizonIsRefuted) {
  // gamma_t = 1/t^2 has Gamma_t ~ 1/t, so H_t/t stays roughly constant.
  std::vector<double> v;
  for (int t = 1; t <= 1 << 16; ++t) v.push_back(1.0 / (double(t) * double(t)));
  const auto r = check_discount_assumption(TableDiscount(v, 1.0 / (1 << 16)), 1 << 10, {0.5});
  EXPECT_TRUE(r.passed('a'));
  EXPECT_TRUE(r.passed('b'));
  EXPECT_FALSE(r.passed('c'));
}

class WeightRecursion : public ::testing::TestWithParam<DiscountPtr> {};

TEST_P(WeightRecursion, NormalizedRecursionHolds) {
  const auto& d = *GetParam();
  for (Time t = 1; t <= 300; ++t) {
    if (!d.has_mass(t)) break;
    const double lhs = d.immediate_weight(t) + d.continuation_weight(t);
    EXPECT_NEAR(lhs, 1.0, 1e-12) << d.name() << " t=" << t;
    EXPECT_NEAR(d.normalizer(t), d.gamma(t) + d.normalizer(t + 1), 1e-12 * d.normalizer(t)) << d.name() << " t=" << t;
  }
}

INSTANTIATE_TEST_SUITE_P(Schedules, WeightRecursion,
                         ::testing::Values(geometric(0.5), geometric(0.9), sqrt_exp(),
                                           std::make_shared<TableDiscount>(std::vector<double>{0.4, 0.3, 0.2}, 0.1)));
