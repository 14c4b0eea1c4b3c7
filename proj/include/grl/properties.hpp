#pragma once

// Named property checks over the whole library. Each check enumerates or
// samples many cases and reports the first counterexample it finds.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "grl/agents.hpp"
#include "grl/bayes.hpp"
#include "grl/core.hpp"
#include "grl/discount.hpp"
#include "grl/envs.hpp"
#include "grl/metrics.hpp"
#include "grl/planner.hpp"

namespace grl {

struct PropertyResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  /// First counterexample, empty on success.
  std::string witness;
};

struct Property {
  std::string name;
  std::string description;
  std::function<PropertyResult()> check;
};

struct VerifyReport {
  std::vector<PropertyResult> results;

  bool passed() const {
    return std::all_of(results.begin(), results.end(), [](const PropertyResult& r) { return r.passed; });
  }
};

namespace detail {

/// Counts cases and keeps the first failure.
class Checker {
 public:
  explicit Checker(std::string name) { result_.name = std::move(name); }

  bool expect(bool ok, const std::function<std::string()>& witness) {
    ++result_.cases;
    if (!ok && result_.passed) {
      result_.passed = false;
      result_.witness = witness();
    }
    return ok;
  }
  bool failed() const { return !result_.passed; }
  PropertyResult done() && { return std::move(result_); }

 private:
  PropertyResult result_;
};

inline std::string fmt_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::string describe(const History& h) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < h.size(); ++i) os << (i ? " " : "") << "(" << h[i].action.id << "," << h[i].percept << ")";
  os << "]";
  return os.str();
}

/// Random history of the given length drawn from env under policy.
inline History sample_history(const Environment& env, const Policy& policy, Time length, std::uint64_t seed) {
  return rollout(env, policy, length, seed);
}

struct RandomInstance {
  std::shared_ptr<const RandomHistoryEnvironment> env_a, env_b;
  std::shared_ptr<const RandomHistoryPolicy> pol_a, pol_b;
  DiscountPtr discount;
  History h;
  Time m = 1;
};

/// Small random instance with |A|, |E| <= 3 and depth m - t <= 4.
inline RandomInstance random_instance(std::uint64_t seed) {
  RandomStream rng(seed, StreamRole::test);
  const std::size_t na = 1 + rng() % 3;
  const std::size_t ne = 1 + rng() % 3;
  const double zero = rng.uniform() < 0.5 ? 0.0 : 0.4;
  RandomInstance x;
  x.env_a = std::make_shared<RandomHistoryEnvironment>(derive_seed({seed, 1}), na, ne, zero);
  x.env_b = std::make_shared<RandomHistoryEnvironment>(derive_seed({seed, 2}), na, ne, zero);
  x.pol_a = std::make_shared<RandomHistoryPolicy>(derive_seed({seed, 3}), na, zero);
  x.pol_b = rng.uniform() < 0.3 ? x.pol_a : std::make_shared<RandomHistoryPolicy>(derive_seed({seed, 4}), na, zero);
  x.discount = rng.uniform() < 0.25 ? sqrt_exp() : geometric(0.3 + 0.65 * rng.uniform());
  x.h = sample_history(*x.env_a, *x.pol_a, static_cast<Time>(rng() % 3), derive_seed({seed, 5}));
  x.m = x.h.time() + static_cast<Time>(rng() % 5);
  return x;
}

/// Random finite class of history environments sharing one alphabet, with a random prior.
inline ClassPtr random_finite_class(std::uint64_t seed, std::size_t& actions) {
  RandomStream rng(seed, StreamRole::test);
  actions = 1 + rng() % 3;
  const std::size_t ne = 2 + rng() % 2;
  const std::size_t size = 2 + rng() % 3;
  std::vector<EnvPtr> ms;
  std::vector<double> w;
  for (std::size_t i = 0; i < size; ++i) {
    ms.push_back(std::make_shared<RandomHistoryEnvironment>(derive_seed({seed, 10 + i}), actions, ne, 0.2));
    w.push_back(0.1 + rng.uniform());
  }
  return std::make_shared<const EnvironmentClass>("random_class", std::move(ms), std::move(w));
}

inline BeliefState belief_after(ClassPtr cls, const History& h) {
  BeliefState b(std::move(cls));
  for (const auto& s : h) b = b.update(s.action, s.percept);
  return b;
}

/// Every environment the library constructs, for invariant sweeps.
inline std::vector<EnvPtr> registered_environments() {
  std::vector<EnvPtr> envs;
  for (Time k = 0; k <= 4; ++k) envs.push_back(make_example1_env(k));
  envs.push_back(make_trap_env());
  envs.push_back(make_bernoulli_bandit({0.0, 1.0}));
  envs.push_back(make_bernoulli_bandit({0.3, 0.6, 0.9}));
  const auto bandits = make_discussion_bandit_class(4, 0.05);
  for (std::size_t i = 0; i < 4; ++i) envs.push_back(bandits->member(i));
  envs.push_back(std::make_shared<RandomMdpEnvironment>(11, 3, 2, 3));
  envs.push_back(std::make_shared<RandomHistoryEnvironment>(12, 2, 3, 0.3));
  const auto mixed = with_mixture_member(*make_example1_class(3), 0.2);
  envs.push_back(mixed->member(*mixed->size() - 1));
  return envs;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// discount properties

/// Gamma_t = gamma_t + Gamma_{t+1} to 1e-12 relative for t <= t_max on every schedule.
inline PropertyResult check_gamma_recursion(const std::vector<DiscountPtr>& schedules, Time t_max) {
  detail::Checker c("gamma_recursion");
  for (const auto& d : schedules) {
    for (Time t = 1; t <= t_max; ++t) {
      const double lhs = d->normalizer(t);
      const double rhs = d->gamma(t) + d->normalizer(t + 1);
      const double scale = std::max(std::abs(lhs), std::numeric_limits<double>::min());
      const bool ok = std::abs(lhs - rhs) <= 1e-12 * scale && d->normalizer(t + 1) <= lhs;
      if (!c.expect(ok, [&] {
            return d->name() + ": t=" + std::to_string(t) + " Gamma_t=" + detail::fmt_double(lhs) +
                   " gamma_t+Gamma_{t+1}=" + detail::fmt_double(rhs);
          }))
        break;
    }
  }
  return std::move(c).done();
}

/// Schedules checked by the default suite.
inline std::vector<DiscountPtr> registered_discounts() {
  return {geometric(0.5), geometric(0.9), geometric(0.99), sqrt_exp(),
          std::make_shared<TableDiscount>(std::vector<double>{0.5, 0.25, 0.125, 0.1, 0.05}, 0.02)};
}

/// Test fixture: a schedule whose normalizer is perturbed at one time step.
class CorruptedDiscount final : public DiscountSchedule {
 public:
  CorruptedDiscount(DiscountPtr base, Time bad_t, double factor = 1.0 + 1e-6)
      : base_(std::move(base)), bad_t_(bad_t), factor_(factor) {}
  std::string name() const override { return "corrupted{" + base_->name() + "@" + std::to_string(bad_t_) + "}"; }
  double gamma(Time t) const override { return base_->gamma(t); }
  double normalizer(Time t) const override { return base_->normalizer(t) * (t == bad_t_ ? factor_ : 1.0); }
  double tail_bound(Time n) const override { return base_->tail_bound(n); }

 private:
  DiscountPtr base_;
  Time bad_t_;
  double factor_;
};

inline PropertyResult check_effective_horizon_monotone() {
  detail::Checker c("effective_horizon_monotone");
  const std::vector<double> eps{0.9, 0.5, 0.25, 0.1, 0.05, 0.01, 1e-3, 1e-6};
  for (const auto& d : registered_discounts()) {
    for (Time t : {1, 2, 3, 7, 16, 100, 1000}) {
      if (!d->has_mass(t)) continue;
      Time prev = 0;
      for (double e : eps) {
        const Time h = effective_horizon(*d, t, e);
        const bool minimal = d->tail_ratio(t, h) <= e && (h == 0 || d->tail_ratio(t, h - 1) > e);
        c.expect(h >= prev && minimal, [&] {
          return d->name() + ": t=" + std::to_string(t) + " eps=" + detail::fmt_double(e) + " H=" + std::to_string(h);
        });
        prev = h;
      }
    }
  }
  return std::move(c).done();
}

/// Weight identities for b_t: the constraint, the telescoping total, nonnegativity,
/// and gamma_t H_t(eps) / Gamma_t >= 1 - eps.
inline PropertyResult check_weight_identities() {
  detail::Checker c("weight_identities");
  for (const auto& d : std::vector<DiscountPtr>{geometric(0.5), geometric(0.9), sqrt_exp()}) {
    for (Time t0 = 1; t0 <= 5; ++t0) {
      for (Time m : {t0, t0 + 1, Time{10}, Time{30}, Time{60}}) {
        if (m < t0) continue;
        const auto b = telescoping_weights(*d, t0, m);
        double total = 0.0;
        for (Time t = t0; t <= m; ++t) {
          double s = 0.0;
          for (Time k = t0; k <= t; ++k) s += b[static_cast<std::size_t>(k - t0)] / d->normalizer(k);
          s *= d->gamma(t);
          c.expect(std::abs(s - 1.0) <= 1e-9, [&] {
            return d->name() + ": constraint t0=" + std::to_string(t0) + " t=" + std::to_string(t) + " sum=" +
                   detail::fmt_double(s);
          });
          const double bt = b[static_cast<std::size_t>(t - t0)];
          c.expect(bt >= -1e-12, [&] { return d->name() + ": b_" + std::to_string(t) + " < 0"; });
          total += bt;
        }
        const double want = d->normalizer(m + 1) / d->gamma(m) + static_cast<double>(m - t0 + 1);
        c.expect(std::abs(total - want) <= 1e-9 * want, [&] {
          return d->name() + ": telescoping t0=" + std::to_string(t0) + " m=" + std::to_string(m) + " total=" +
                 detail::fmt_double(total) + " expected=" + detail::fmt_double(want);
        });
      }
    }
    for (Time t : {1, 2, 4, 5, 16, 60, 64}) {
      for (double e : {0.1, 0.25, 0.5}) {
        const double v = tail_ratio_bound(*d, t, e);
        c.expect(v >= 1.0 - e - 1e-12, [&] {
          return d->name() + ": gamma_t H_t/Gamma_t at t=" + std::to_string(t) + " eps=" + detail::fmt_double(e) +
                 " is " + detail::fmt_double(v);
        });
      }
    }
  }
  return std::move(c).done();
}

/// The regret discount assumption holds for geometric and sqrt_exp schedules up
/// to 2^14; a schedule with gamma_5 = 0 fails item (a) at t = 5.
inline PropertyResult check_discount_assumption_suite() {
  detail::Checker c("discount_assumption");
  const std::vector<double> eps{0.5, 0.1, 0.01};
  for (const auto& d : std::vector<DiscountPtr>{geometric(0.5), geometric(0.9), sqrt_exp()}) {
    const auto r = check_discount_assumption(*d, Time{1} << 14, eps);
    c.expect(r.passed(), [&] {
      const auto& v = r.violations.front();
      return d->name() + ": item (" + std::string(1, v.item) + ") at t=" + std::to_string(v.t) + ": " + v.detail;
    });
  }
  std::vector<double> values;
  for (Time t = 1; t <= 40; ++t) values.push_back(t == 5 ? 0.0 : std::pow(0.8, static_cast<double>(t)));
  const TableDiscount holed(values, 0.01);
  const auto r = check_discount_assumption(holed, 32, eps);
  c.expect(!r.passed('a') && r.first_violation('a') == Time{5},
           [&] { return "schedule with gamma_5 = 0 was not rejected by item (a) at t=5"; });
  return std::move(c).done();
}

// ---------------------------------------------------------------------------
// core and environment properties

inline PropertyResult check_distributions_normalized() {
  detail::Checker c("distributions_normalized");
  for (const auto& env : detail::registered_environments()) {
    const auto& alpha = env->alphabet();
    for (PerceptIndex e = 0; e < alpha.size(); ++e) {
      const double r = alpha.reward(e);
      c.expect(r >= 0.0 && r <= 1.0, [&] { return env->name() + ": reward out of range"; });
    }
    const UniformPolicy uniform(env->num_actions());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const History h = rollout(*env, uniform, static_cast<Time>(seed % 9), seed);
      for (std::uint32_t a = 0; a < env->num_actions(); ++a) {
        const auto p = env->percept_distribution(h, Action(a));
        double s = 0.0;
        bool nonneg = true;
        for (double x : p) {
          s += x;
          nonneg = nonneg && x >= 0.0;
        }
        c.expect(nonneg && std::abs(s - 1.0) <= 1e-12 && p.size() == alpha.size(), [&] {
          return env->name() + ": history " + detail::describe(h) + " action " + std::to_string(a) + " sums to " +
                 detail::fmt_double(s);
        });
      }
    }
  }
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RandomHistoryPolicy pol(seed, 3, 0.3);
    const auto env = std::make_shared<RandomHistoryEnvironment>(seed, 3, 2, 0.3);
    const History h = rollout(*env, pol, static_cast<Time>(seed % 5), seed);
    const auto pa = pol.action_distribution(h);
    double s = 0.0;
    for (std::uint32_t a = 0; a < pa.size(); ++a)
      for (double pe : env->percept_distribution(h, Action(a))) s += pa[a] * pe;
    c.expect(std::abs(s - 1.0) <= 1e-9, [&] { return "joint one-step mass " + detail::fmt_double(s); });
  }
  return std::move(c).done();
}

inline PropertyResult check_joint_probability_multiplicative() {
  detail::Checker c("joint_probability_multiplicative");
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const RandomHistoryEnvironment env(seed, 2, 3, 0.0);
    const RandomHistoryPolicy pol(seed + 1000, 2, 0.0);
    History h = rollout(env, pol, static_cast<Time>(1 + seed % 6), seed);
    const Step last = h[h.size() - 1];
    h.pop();
    const double before = joint_probability(env, pol, h);
    const double factor = pol.action_distribution(h)[last.action.id] *
                          env.percept_distribution(h, last.action)[last.percept];
    h.push(last.action, last.percept);
    const double after = joint_probability(env, pol, h);
    c.expect(std::abs(after - before * factor) <= 1e-12 * std::max(after, 1e-300), [&] {
      return "history " + detail::describe(h) + ": p=" + detail::fmt_double(after) + " vs " +
             detail::fmt_double(before * factor);
    });
  }
  return std::move(c).done();
}

/// Empirical depth-2 frequencies over 1e5 rollouts match exact enumeration within 3 standard errors.
inline PropertyResult check_rollout_matches_enumeration() {
  detail::Checker c("rollout_matches_enumeration");
  const RandomHistoryEnvironment env(77, 2, 2, 0.0);
  const RandomHistoryPolicy pol(78, 2, 0.0);
  const auto exact = enumerate_histories(env, pol, History{}, 2);
  std::map<std::vector<std::uint64_t>, double> counts;
  const auto key = [](const History& h) {
    std::vector<std::uint64_t> k;
    for (const auto& s : h) {
      k.push_back(s.action.id);
      k.push_back(s.percept);
    }
    return k;
  };
  constexpr int n = 100000;
  for (int i = 0; i < n; ++i) counts[key(rollout(env, pol, 2, derive_seed({99, static_cast<std::uint64_t>(i)})))] += 1.0;
  double total = 0.0;
  for (const auto& [h, p] : exact) {
    total += p;
    const double freq = counts[key(h)] / n;
    const double se = std::sqrt(p * (1.0 - p) / n);
    c.expect(std::abs(freq - p) <= 3.0 * se + 1e-12, [&] {
      return detail::describe(h) + ": frequency " + detail::fmt_double(freq) + " vs probability " + detail::fmt_double(p);
    });
  }
  c.expect(std::abs(total - 1.0) <= 1e-9, [&] { return "enumerated mass " + detail::fmt_double(total); });
  return std::move(c).done();
}

/// Histories with equal state keys have identical one-step conditionals.
inline PropertyResult check_state_key_equivalence() {
  detail::Checker c("state_key_equivalence");
  for (const auto& env : detail::registered_environments()) {
    if (!env->compact_state()) continue;
    const UniformPolicy uniform(env->num_actions());
    std::map<std::vector<std::int64_t>, History> seen;
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      const History h = rollout(*env, uniform, static_cast<Time>(seed % 8), seed);
      const auto k = env->state_key(h);
      if (!k) continue;
      auto [it, fresh] = seen.emplace(k->words, h);
      if (fresh) continue;
      for (std::uint32_t a = 0; a < env->num_actions(); ++a) {
        c.expect(env->percept_distribution(h, Action(a)) == env->percept_distribution(it->second, Action(a)), [&] {
          return env->name() + ": " + detail::describe(h) + " and " + detail::describe(it->second) +
                 " share a key but differ under action " + std::to_string(a);
        });
      }
    }
  }
  return std::move(c).done();
}

/// Under always-beta the Example-1 posterior stays equal to the prior.
inline PropertyResult check_example1_beta_posterior() {
  detail::Checker c("example1_beta_keeps_prior");
  const auto cls = make_example1_class(10);
  const auto half = *cls->alphabet().index_of(Percept{0, Rational(1, 2)});
  BeliefState b(cls);
  for (Time t = 1; t <= 25; ++t) {
    b = b.update(Action(example1::beta), half);
    for (std::size_t i = 0; i < *cls->size(); ++i)
      c.expect(std::abs(b.posterior(i) - cls->prior(i)) <= 1e-12, [&] {
        return "t=" + std::to_string(t) + " member " + std::to_string(i) + ": posterior " +
               detail::fmt_double(b.posterior(i)) + " prior " + detail::fmt_double(cls->prior(i));
      });
  }
  return std::move(c).done();
}

/// In the discussion bandit class one reward-1 pull of arm j+1 identifies bandit j.
inline PropertyResult check_discussion_identification() {
  detail::Checker c("discussion_identification");
  for (std::size_t n : {1, 3, 6}) {
    const auto cls = make_discussion_bandit_class(n, 0.05);
    const auto one = *cls->alphabet().index_of(Percept{0, Rational(1)});
    for (std::size_t j = 0; j < n; ++j) {
      const auto b = BeliefState(cls).update(Action(static_cast<std::uint32_t>(j + 1)), one);
      for (std::size_t i = 0; i < n; ++i)
        c.expect(b.posterior(i) == (i == j ? 1.0 : 0.0), [&] {
          return "n=" + std::to_string(n) + " pulled arm " + std::to_string(j + 1) + ": posterior of " +
                 std::to_string(i) + " is " + detail::fmt_double(b.posterior(i));
        });
    }
  }
  return std::move(c).done();
}

// ---------------------------------------------------------------------------
// Bayesian properties

/// sum_{a,e} pi(a|h) xi(e|ha) w(nu|hae) = w(nu|h) on random finite classes, |h| <= 4.
inline PropertyResult check_posterior_martingale() {
  detail::Checker c("posterior_martingale");
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::size_t na = 0;
    const auto cls = detail::random_finite_class(seed, na);
    const RandomHistoryPolicy pol(seed + 5000, na, 0.2);
    const History h = rollout(*cls->member(0), pol, static_cast<Time>(seed % 5), seed);
    const auto b = detail::belief_after(cls, h);
    const auto pa = pol.action_distribution(h);
    std::vector<double> expect(*cls->size(), 0.0);
    for (std::uint32_t a = 0; a < na; ++a) {
      if (pa[a] == 0.0) continue;
      const auto xi = b.mixture_predict(Action(a));
      for (PerceptIndex e = 0; e < xi.size(); ++e) {
        if (xi[e] == 0.0) continue;
        const auto next = b.update(Action(a), e);
        for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += pa[a] * xi[e] * next.posterior(i);
      }
    }
    for (std::size_t i = 0; i < expect.size(); ++i)
      c.expect(std::abs(expect[i] - b.posterior(i)) <= 1e-9, [&] {
        return "seed " + std::to_string(seed) + " member " + std::to_string(i) + " history " + detail::describe(h) +
               ": E[w'] = " + detail::fmt_double(expect[i]) + ", w = " + detail::fmt_double(b.posterior(i));
      });
  }
  return std::move(c).done();
}

/// Posterior computed from joint probabilities under two different policies
/// matches the belief's posterior: action factors cancel.
inline PropertyResult check_posterior_policy_invariance() {
  detail::Checker c("posterior_policy_invariance");
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::size_t na = 0;
    const auto cls = detail::random_finite_class(seed + 700, na);
    const RandomHistoryPolicy p1(seed + 1, na, 0.0), p2(seed + 2, na, 0.0);
    const History h = rollout(*cls->member(0), p1, static_cast<Time>(1 + seed % 4), seed);
    const auto b = detail::belief_after(cls, h);
    for (const Policy* pol : {static_cast<const Policy*>(&p1), static_cast<const Policy*>(&p2)}) {
      std::vector<double> joint;
      double total = 0.0;
      for (std::size_t i = 0; i < *cls->size(); ++i) {
        joint.push_back(cls->prior(i) * joint_probability(*cls->member(i), *pol, h));
        total += joint.back();
      }
      for (std::size_t i = 0; i < joint.size(); ++i)
        c.expect(std::abs(joint[i] / total - b.posterior(i)) <= 1e-9, [&] {
          return "seed " + std::to_string(seed) + " member " + std::to_string(i) + ": " +
                 detail::fmt_double(joint[i] / total) + " vs " + detail::fmt_double(b.posterior(i));
        });
    }
  }
  return std::move(c).done();
}

/// xi(h) >= w(nu) nu(h) for every member.
inline PropertyResult check_likelihood_dominance() {
  detail::Checker c("likelihood_dominance");
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::size_t na = 0;
    const auto cls = detail::random_finite_class(seed + 900, na);
    std::vector<EnvPtr> ms;
    std::vector<double> w;
    for (std::size_t i = 0; i < *cls->size(); ++i) {
      ms.push_back(cls->member(i));
      w.push_back(cls->prior(i));
    }
    const MixtureEnvironment xi("xi", ms, w);
    const UniformPolicy pol(na);
    const History h = rollout(*cls->member(seed % ms.size()), pol, static_cast<Time>(seed % 6), seed);
    const double px = joint_probability(xi, pol, h);
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const double pi = w[i] * joint_probability(*ms[i], pol, h);
      c.expect(px >= pi * (1.0 - 1e-12), [&] {
        return "seed " + std::to_string(seed) + " member " + std::to_string(i) + ": xi(h)=" + detail::fmt_double(px) +
               " < w nu(h)=" + detail::fmt_double(pi);
      });
    }
  }
  return std::move(c).done();
}

// ---------------------------------------------------------------------------
// planner properties

/// |V^{pi1,m}_nu - V^{pi2,m}_rho| <= D_m + 1e-9 on random small instances.
inline PropertyResult check_value_difference_bound(std::size_t instances = 200) {
  detail::Checker c("value_difference_bound");
  for (std::uint64_t seed = 0; seed < instances; ++seed) {
    const auto x = detail::random_instance(seed);
    const double va = value_of_policy(*x.env_a, *x.pol_a, *x.discount, x.h, x.m);
    const double vb = value_of_policy(*x.env_b, *x.pol_b, *x.discount, x.h, x.m);
    const double tv = tv_distance(*x.env_a, *x.pol_a, *x.env_b, *x.pol_b, x.h, x.m);
    c.expect(std::abs(va - vb) <= tv + 1e-9 && tv >= 0.0 && tv <= 1.0 + 1e-12, [&] {
      return "seed " + std::to_string(seed) + ": |V1 - V2| = " + detail::fmt_double(std::abs(va - vb)) +
             " > D = " + detail::fmt_double(tv);
    });
  }
  return std::move(c).done();
}

/// Every stored node value equals max_a sum_e nu(e) (gamma_k r + Gamma_{k+1} V_{k+1}) / Gamma_k.
inline PropertyResult check_bellman_consistency() {
  detail::Checker c("bellman_consistency");
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const RandomMdpEnvironment env(seed, 3, 2, 3);
    const auto d = seed % 2 ? geometric(0.8) : sqrt_exp();
    const Time m = 6;
    const auto plan = optimal_plan(env, *d, History{}, m);
    for (const auto& [key, node] : plan.nodes) {
      double best = -1.0;
      for (std::uint32_t a = 0; a < env.num_actions(); ++a) {
        const auto p = env.predict(key.state, key.t, Action(a));
        double q = 0.0;
        for (PerceptIndex e = 0; e < p.size(); ++e) {
          if (p[e] == 0.0) continue;
          double child = 0.0;
          if (key.t < m) child = plan.find(env.advance(key.state, key.t, Action(a), e), key.t + 1)->value;
          q += p[e] * (d->gamma(key.t) * env.alphabet().reward(e) + d->normalizer(key.t + 1) * child);
        }
        best = std::max(best, q / d->normalizer(key.t));
      }
      c.expect(std::abs(best - node.value) <= 1e-9 && node.value >= -1e-12 && node.value <= 1.0 + 1e-12, [&] {
        return "seed " + std::to_string(seed) + " t=" + std::to_string(key.t) + ": stored " +
               detail::fmt_double(node.value) + " recomputed " + detail::fmt_double(best);
      });
    }
  }
  return std::move(c).done();
}

inline PropertyResult check_memo_agreement() {
  detail::Checker c("memo_agreement");
  std::vector<EnvPtr> envs;
  for (std::uint64_t seed = 0; seed < 10; ++seed) envs.push_back(std::make_shared<RandomMdpEnvironment>(seed, 2, 2, 2));
  for (Time k = 0; k <= 3; ++k) envs.push_back(make_example1_env(k));
  for (const auto& env : envs) {
    for (const auto& d : {geometric(0.9), sqrt_exp()}) {
      PlanOptions memo, plain;
      plain.memoize = false;
      const Time m = env->num_actions() * env->alphabet().size() > 6 ? 6 : 10;
      const auto a = optimal_plan(*env, *d, History{}, m, memo);
      const auto b = optimal_plan(*env, *d, History{}, m, plain);
      c.expect(std::abs(a.root_value - b.root_value) <= 1e-12 && a.root_action == b.root_action, [&] {
        return env->name() + " " + d->name() + ": memoized " + detail::fmt_double(a.root_value) + " plain " +
               detail::fmt_double(b.root_value);
      });
    }
  }
  return std::move(c).done();
}

/// |V^{pi,inf} - V^{pi,m}| <= Gamma_{m+1} / Gamma_t on environments with known infinite-horizon values.
inline PropertyResult check_truncation_tail_bound() {
  detail::Checker c("truncation_tail_bound");
  struct Case {
    EnvPtr env;
    PolicyPtr policy;
    double infinite_value;
  };
  const std::vector<Case> cases{
      {make_bernoulli_bandit({1.0, 1.0}), std::make_shared<UniformPolicy>(2), 1.0},
      {make_trap_env(), std::make_shared<SchedulePolicy>(2, [](Time) { return Action(0); }), 1.0},
      {make_example1_env(0), std::make_shared<SchedulePolicy>(2, [](Time) { return Action(example1::beta); }), 0.5},
      {make_bernoulli_bandit({0.0}), std::make_shared<UniformPolicy>(1), 0.0},
  };
  for (const auto& cs : cases) {
    for (const auto& d : {geometric(0.5), geometric(0.9), sqrt_exp()}) {
      for (Time m : {1, 2, 5, 12}) {
        const double v = value_of_policy(*cs.env, *cs.policy, *d, History{}, m);
        const double bound = d->tail_ratio(1, m);
        c.expect(std::abs(cs.infinite_value - v) <= bound + 1e-12, [&] {
          return cs.env->name() + " " + d->name() + " m=" + std::to_string(m) + ": V_m=" + detail::fmt_double(v) +
                 " bound " + detail::fmt_double(bound);
        });
      }
    }
  }
  return std::move(c).done();
}

inline PropertyResult check_regret_nonnegative() {
  detail::Checker c("regret_nonnegative");
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const RandomMdpEnvironment env(seed, 2, 2, 3);
    const RandomHistoryPolicy pol(seed, 2, 0.0);
    for (Time m : {1, 3, 6}) {
      const double r = exact_regret(env, pol, m);
      c.expect(r >= -1e-9, [&] {
        return "seed " + std::to_string(seed) + " m=" + std::to_string(m) + ": regret " + detail::fmt_double(r);
      });
    }
  }
  return std::move(c).done();
}

// ---------------------------------------------------------------------------
// agent properties

/// Resampling times follow t_{i+1} = t_i + max(1, H_{t_i}(eps_{t_i})) from t_1 = 1.
inline PropertyResult check_thompson_block_schedule() {
  detail::Checker c("thompson_block_schedule");
  const auto cls = make_example1_class(6);
  const auto truth = cls->member(0);
  const std::vector<std::pair<DiscountPtr, EpsilonSchedule>> settings{
      {geometric(0.5), EpsilonSchedule::constant(0.25)},
      {geometric(0.9), EpsilonSchedule::standard()},
      {sqrt_exp(), EpsilonSchedule::standard()},
  };
  for (const auto& [d, eps] : settings) {
    AgentFactory f = [&](RandomStream r) { return std::make_unique<ThompsonAgent>(cls, d, eps, r); };
    auto sim = make_simulation(truth, f, 3, 0);
    sim.run_until(150);
    const auto& blocks = dynamic_cast<const ThompsonAgent&>(sim.agent()).blocks();
    Time t = 1;
    for (const auto& blk : blocks) {
      const Time want_end = t + std::max<Time>(1, effective_horizon(*d, t, eps(t)));
      c.expect(blk.start == t && blk.end == want_end, [&] {
        return d->name() + ": block [" + std::to_string(blk.start) + ", " + std::to_string(blk.end) +
               ") expected start " + std::to_string(t) + " end " + std::to_string(want_end);
      });
      t = want_end;
    }
  }
  return std::move(c).done();
}

/// Between resampling times a forked agent replays the same actions, and the
/// agent's belief equals a fresh belief updated with the same interaction.
inline PropertyResult check_thompson_determinism_and_belief() {
  detail::Checker c("thompson_block_determinism");
  const auto cls = make_example1_class(8);
  const auto d = geometric(0.9);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AgentFactory f = [&](RandomStream r) {
      return std::make_unique<ThompsonAgent>(cls, d, EpsilonSchedule::standard(), r);
    };
    auto sim = make_simulation(cls->member(seed % 9), f, seed, 0);
    sim.run_until(40);
    auto& agent = dynamic_cast<ThompsonAgent&>(sim.agent());
    agent.prepare(sim.history());
    auto fork = agent.clone();
    const Time end = agent.block_end();
    // replay inside the block: both copies act on the same histories
    while (sim.time() < end) {
      const History h = sim.history();
      const Action forked = fork->act(h);
      sim.step();
      const Step s = sim.history()[sim.history().size() - 1];
      fork->observe(s.action, s.percept);
      c.expect(forked == s.action, [&] {
        return "seed " + std::to_string(seed) + " t=" + std::to_string(h.time()) + ": fork played " +
               std::to_string(forked.id) + ", agent " + std::to_string(s.action.id);
      });
    }
    const auto fresh = detail::belief_after(cls, sim.history());
    const auto* mine = agent.belief();
    for (std::size_t i = 0; i < *cls->size(); ++i)
      c.expect(mine->log_likelihood(i) == fresh.log_likelihood(i), [&] {
        return "seed " + std::to_string(seed) + " member " + std::to_string(i) + ": agent belief diverged";
      });
  }
  return std::move(c).done();
}

/// The Bayes-optimal agent never leaves the safe arm in the discussion bandit
/// class when eps < (1 - gamma) / (2 - gamma).
inline PropertyResult check_bayes_prefers_safe_arm() {
  detail::Checker c("bayes_prefers_safe_arm");
  const auto d = geometric(0.9);
  for (std::size_t n : {2, 4, 6}) {
    const auto cls = make_discussion_bandit_class(n, 0.05);
    const auto plan = optimal_plan_in_mixture(BeliefState(cls), *d, evaluation_horizon(*d, 1, 0.01));
    c.expect(plan.root_action == Action(0), [&] {
      return "n=" + std::to_string(n) + ": root action " + std::to_string(plan.root_action.id);
    });
  }
  return std::move(c).done();
}

inline PropertyResult check_recoverability_bandits() {
  detail::Checker c("recoverability_bounds");
  const auto d = geometric(0.5);
  for (const auto& env : std::vector<EnvPtr>{make_bernoulli_bandit({0.2, 0.7}), make_bernoulli_bandit({0.0, 1.0})}) {
    for (Time t = 1; t <= 5; ++t) {
      const double g = recoverability_gap(*env, *d, t, t + 8);
      c.expect(std::abs(g) <= 1e-9, [&] { return env->name() + " t=" + std::to_string(t) + ": " + detail::fmt_double(g); });
    }
  }
  const auto trap = make_trap_env();
  for (Time t = 2; t <= 6; ++t) {
    const double g = recoverability_gap(*trap, *d, t, t + 60);
    c.expect(std::abs(g - 1.0) <= 1e-9, [&] { return "trap t=" + std::to_string(t) + ": " + detail::fmt_double(g); });
  }
  return std::move(c).done();
}

// ---------------------------------------------------------------------------
// suite

inline std::vector<Property> property_suite() {
  return {
      {"gamma_recursion", "Gamma_t = gamma_t + Gamma_{t+1} and Gamma nonincreasing, t <= 4096",
       [] { return check_gamma_recursion(registered_discounts(), 4096); }},
      {"effective_horizon_monotone", "H_t(eps) minimal and nonincreasing in eps", check_effective_horizon_monotone},
      {"weight_identities", "weight constraint, telescoping total, b_t >= 0, gamma_t H/Gamma_t >= 1 - eps",
       check_weight_identities},
      {"discount_assumption", "horizon growth check passes geometric/sqrt_exp, rejects gamma_5 = 0",
       check_discount_assumption_suite},
      {"distributions_normalized", "percept and joint one-step distributions sum to 1, rewards in [0,1]",
       check_distributions_normalized},
      {"joint_probability_multiplicative", "p(h step) = p(h) pi(a|h) nu(e|ha)", check_joint_probability_multiplicative},
      {"rollout_matches_enumeration", "1e5 rollouts agree with exact depth-2 enumeration",
       check_rollout_matches_enumeration},
      {"state_key_equivalence", "equal state keys imply equal conditionals", check_state_key_equivalence},
      {"example1_beta_keeps_prior", "always-beta never moves the Example-1 posterior", check_example1_beta_posterior},
      {"discussion_identification", "one reward-1 pull identifies a discussion bandit",
       check_discussion_identification},
      {"posterior_martingale", "one-step expected posterior equals current posterior", check_posterior_martingale},
      {"posterior_policy_invariance", "posterior independent of action probabilities",
       check_posterior_policy_invariance},
      {"likelihood_dominance", "xi(h) >= w(nu) nu(h)", check_likelihood_dominance},
      {"value_difference_bound", "|V1 - V2| <= total variation on random instances",
       [] { return check_value_difference_bound(); }},
      {"bellman_consistency", "planner node values satisfy the Bellman equation", check_bellman_consistency},
      {"memo_agreement", "memoized and plain expectimax agree", check_memo_agreement},
      {"truncation_tail_bound", "|V_inf - V_m| <= Gamma_{m+1}/Gamma_t", check_truncation_tail_bound},
      {"regret_nonnegative", "exact regret >= 0", check_regret_nonnegative},
      {"thompson_block_schedule", "resampling times follow the effective-horizon schedule",
       check_thompson_block_schedule},
      {"thompson_block_determinism", "no hidden randomness inside blocks; belief equals a fresh update",
       check_thompson_determinism_and_belief},
      {"bayes_prefers_safe_arm", "Bayes-optimal root action is the safe arm", check_bayes_prefers_safe_arm},
      {"recoverability_bounds", "bandits recoverable, trap gap exactly 1", check_recoverability_bandits},
  };
}

/// Runs every property whose name contains `filter` (all when empty).
inline VerifyReport verify(const std::string& filter = "") {
  VerifyReport report;
  for (const auto& p : property_suite()) {
    if (!filter.empty() && p.name.find(filter) == std::string::npos) continue;
    try {
      auto r = p.check();
      r.name = p.name;
      report.results.push_back(std::move(r));
    } catch (const std::exception& e) {
      report.results.push_back({p.name, false, 0, std::string("exception: ") + e.what()});
    }
  }
  return report;
}

}  // namespace grl
