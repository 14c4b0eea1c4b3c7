#pragma once

// Evaluation quantities: value gaps, the Bayes-expected total variation F,
// undiscounted regret, and the recoverability gap; plus seed-level Monte-Carlo
// aggregation with 95% normal-approximation intervals.

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grl/agents.hpp"
#include "grl/bayes.hpp"
#include "grl/core.hpp"
#include "grl/discount.hpp"
#include "grl/planner.hpp"

namespace grl {

struct Estimate {
  double mean = 0.0;
  /// Present iff the value is a Monte-Carlo estimate.
  std::optional<double> ci_halfwidth;
  std::size_t n = 1;

  double lower() const { return mean - ci_halfwidth.value_or(0.0); }
  double upper() const { return mean + ci_halfwidth.value_or(0.0); }
};

inline Estimate exact_estimate(double v) { return {v, std::nullopt, 1}; }

/// Sample mean with half-width 1.96 s / sqrt(n), s the unbiased standard deviation.
inline Estimate monte_carlo_estimate(std::span<const double> xs) {
  if (xs.size() < 2) throw ValidationError("a Monte-Carlo estimate needs at least 2 samples");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(xs.size())), xs.size()};
}

/// True when the two intervals are disjoint and a lies below b.
inline bool separated_below(const Estimate& a, const Estimate& b) { return a.upper() < b.lower(); }

struct MetricPoint {
  Time t = 0;
  Estimate value;
};

class MetricSeries {
 public:
  explicit MetricSeries(std::string name) : name_(std::move(name)) {}

  void add(Time t, Estimate value) {
    if (!points_.empty() && t <= points_.back().t) throw ValidationError("metric series '" + name_ + "': t must increase");
    points_.push_back({t, value});
  }

  const std::string& name() const { return name_; }
  const std::vector<MetricPoint>& points() const { return points_; }
  const MetricPoint& at(Time t) const {
    for (const auto& p : points_)
      if (p.t == t) return p;
    throw ValidationError("metric series '" + name_ + "' has no point at t=" + std::to_string(t));
  }

 private:
  std::string name_;
  std::vector<MetricPoint> points_;
};

// ---------------------------------------------------------------------------
// value gaps

/// Horizon t + H_t(eps) - 1 used to evaluate values at time t (t when Gamma_t = 0).
inline Time evaluation_horizon(const DiscountSchedule& d, Time t, double eps) {
  return t + detail::block_horizon(d, t, eps) - 1;
}

/// V*^m_mu(h) - V^{pi,m}_mu(h), both exact.
inline double value_gap(const Environment& env, const Policy& policy, const DiscountSchedule& d, const History& h,
                        Time m, std::size_t node_budget = default_node_budget()) {
  PlanOptions opt;
  opt.node_budget = node_budget;
  return optimal_plan(env, d, h, m, opt).root_value - value_of_policy(env, policy, d, h, m, node_budget);
}

/// V*^m(s, t) - Q*^m(s, t, a): how much committing to a at time t loses.
/// A lower bound on the value gap of any policy that plays a there with certainty.
inline double action_gap(const Environment& env, const DiscountSchedule& d, const EnvState& s, Time t, Time m,
                         Action a, std::size_t node_budget = default_node_budget()) {
  PlanOptions opt;
  opt.node_budget = node_budget;
  const auto plan = plan_from(env, d, s, t, m, opt);
  return plan.root_value - plan.root_action_values.at(a.id);
}

/// E[V*^m_mu(h) - V^{pi,m}_mu(h)] over histories h of length t - 1 drawn from mu^pi, exactly.
inline double exact_expected_value_gap(const Environment& env, const Policy& policy, const DiscountSchedule& d,
                                       Time t, Time m, std::size_t node_budget = default_node_budget()) {
  double gap = 0.0;
  for (const auto& [h, p] : enumerate_histories(env, policy, History{}, static_cast<int>(t - 1), node_budget))
    gap += p * value_gap(env, policy, d, h, m, node_budget);
  return gap;
}

/// (1/Gamma_t) sum_{k=t}^m gamma_k r_k for a realized reward sequence (rewards[k-1] = r_k).
inline double normalized_return(const DiscountSchedule& d, std::span<const double> rewards, Time t, Time m) {
  if (!d.has_mass(t)) return 0.0;
  double g = 0.0;
  for (Time k = t; k <= m; ++k) {
    const double ratio = d.tail_ratio(t, k - t);
    if (ratio == 0.0) break;
    g += ratio * d.immediate_weight(k) * rewards[static_cast<std::size_t>(k - 1)];
  }
  return g;
}

/// Trajectory for seed `index`, with independent agent and environment streams.
inline Simulation make_simulation(const EnvPtr& truth, const AgentFactory& factory, std::uint64_t base_seed,
                                  std::uint64_t index) {
  return Simulation(truth, factory(RandomStream(base_seed, index, StreamRole::agent)),
                    RandomStream(base_seed, index, StreamRole::environment));
}

/// One unbiased sample of V*^m_mu(h_t) - V^{pi,m}_mu(h_t): advances `sim` to time
/// m + 1 and uses the realized continuation return.
inline double value_gap_sample(Simulation& sim, const DiscountSchedule& d, Time t, Time m,
                               std::size_t node_budget = default_node_budget()) {
  sim.run_until(t);
  PlanOptions opt;
  opt.node_budget = node_budget;
  const double best = plan_from(sim.truth(), d, sim.truth_state(), t, m, opt).root_value;
  sim.run_until(m + 1);
  return best - normalized_return(d, sim.rewards(), t, m);
}

/// E[V*^m_mu - V^{pi,m}_mu] at time t over histories drawn from mu^pi.
inline Estimate expected_value_gap(const EnvPtr& truth, const AgentFactory& factory, const DiscountSchedule& d, Time t,
                                   Time m, std::size_t n_seeds, std::uint64_t base_seed = 0) {
  if (n_seeds < 2) throw ValidationError("expected value gap needs at least 2 seeds");
  std::vector<double> xs;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    auto sim = make_simulation(truth, factory, base_seed, i);
    xs.push_back(value_gap_sample(sim, d, t, m));
  }
  return monte_carlo_estimate(xs);
}

// ---------------------------------------------------------------------------
// Bayes-expected total variation

/// F^pi_m(h) = sum_i w(nu_i | h) D_m(nu_i^pi, xi^pi | h) over the resolved front,
/// h being the belief's history.
inline double bayes_expected_tv(const BeliefState& belief, const Policy& policy, Time m,
                                std::size_t node_budget = default_node_budget()) {
  const BeliefState b = belief.resolved(belief.options().delta_mix);
  const auto xi = MixtureEnvironment::of_front(b);
  const auto w = b.front_posterior();
  double f = 0.0;
  for (std::size_t i = 0; i < b.front_size(); ++i) {
    if (w[i] == 0.0) continue;
    f += w[i] * tv_distance(*b.member(i), policy, *xi, policy, b.history(), m, node_budget);
  }
  return f;
}

/// F for an agent at its current history, using the agent's deterministic
/// continuation policy up to m.
inline double agent_bayes_expected_tv(Agent& agent, const History& h, Time m,
                                      std::size_t node_budget = default_node_budget()) {
  const BeliefState* b = agent.belief();
  if (!b) throw ValidationError("agent '" + agent.name() + "' keeps no belief");
  agent.prepare(h);
  const auto policy = agent.continuation_policy(h, m);
  return bayes_expected_tv(*agent.belief(), *policy, m, node_budget);
}

// ---------------------------------------------------------------------------
// regret

/// Exact sup_pi E[sum_{k<=m} r_k] by expectimax, ignoring any analytic shortcut.
inline double exact_optimal_reward_sum(const Environment& env, Time m,
                                       std::size_t node_budget = default_node_budget()) {
  if (m <= 0) return 0.0;
  const auto d = TableDiscount::finite_horizon(m);
  PlanOptions opt;
  opt.node_budget = node_budget;
  return optimal_plan(env, *d, History{}, m, opt).root_value * static_cast<double>(m);
}

/// sup_pi E[sum_{k<=m} r_k]: the environment's analytic value when declared,
/// otherwise exact undiscounted expectimax.
inline double optimal_reward_sum(const Environment& env, Time m, std::size_t node_budget = default_node_budget()) {
  if (m <= 0) return 0.0;
  if (auto v = env.optimal_reward_sum(m)) return *v;
  return exact_optimal_reward_sum(env, m, node_budget);
}

/// Exact R_m(pi, mu) for a fixed policy.
inline double exact_regret(const Environment& env, const Policy& policy, Time m,
                           std::size_t node_budget = default_node_budget()) {
  return optimal_reward_sum(env, m, node_budget) - expected_reward_sum(env, policy, History{}, m, node_budget);
}

/// Monte-Carlo R_m for an agent: exact optimum minus the seed-mean reward sum.
inline Estimate regret(const EnvPtr& truth, const AgentFactory& factory, Time m, std::size_t n_seeds,
                       std::uint64_t base_seed = 0) {
  const double best = optimal_reward_sum(*truth, m);
  std::vector<double> xs;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    auto sim = make_simulation(truth, factory, base_seed, i);
    sim.run_until(m + 1);
    xs.push_back(best - sim.reward_sum(m));
  }
  return monte_carlo_estimate(xs);
}

// ---------------------------------------------------------------------------
// recoverability

/// max over deterministic pi of |E^{pi*}[V*^m(h_t)] - E^{pi}[V*^m(h_t)]|, the
/// expectations over histories of length t - 1. pi* is the optimal policy for
/// horizon m from the empty history.
inline double recoverability_gap(const Environment& env, const DiscountSchedule& d, Time t, Time m,
                                 std::size_t node_budget = default_node_budget()) {
  if (t < 1 || m < t) throw ValidationError("recoverability gap needs 1 <= t <= m");
  if (t == 1) return 0.0;

  std::unordered_map<EnvState, double, EnvStateHash> cache;
  const auto optimal_value_at = [&](const EnvState& s, Time k) {
    auto it = cache.find(s);
    if (it != cache.end()) return it->second;
    PlanOptions opt;
    opt.node_budget = node_budget;
    const double v = plan_from(env, d, s, k, m, opt).root_value;
    cache.emplace(s, v);
    return v;
  };
  // Every terminal node sits at time t, so state alone keys the cache.

  PlanOptions reach;
  reach.node_budget = node_budget;
  reach.terminal = optimal_value_at;
  reach.reward_start = t;
  const EnvState s0 = env.initial_state();
  const double hi = plan_from(env, d, s0, 1, t - 1, reach).root_value;
  reach.objective = Objective::minimize;
  const double lo = plan_from(env, d, s0, 1, t - 1, reach).root_value;

  PlanOptions full;
  full.node_budget = node_budget;
  const auto star = std::make_shared<const PlanResult>(plan_from(env, d, s0, 1, m, full));
  double fixed = 0.0;
  const auto follow = [&](auto&& self, const EnvState& s, Time k, double p) -> void {
    if (k == t) {
      fixed += p * optimal_value_at(s, k);
      return;
    }
    const NodeEntry* node = star->find(s, k);
    if (!node) throw Error("recoverability: optimal plan is missing a reachable node");
    const auto pe = env.predict(s, k, node->chosen);
    for (PerceptIndex e = 0; e < pe.size(); ++e)
      if (pe[e] > 0.0) self(self, env.advance(s, k, node->chosen, e), k + 1, p * pe[e]);
  };
  follow(follow, s0, 1, 1.0);
  return std::max(std::abs(fixed - lo), std::abs(hi - fixed));
}

}  // namespace grl
