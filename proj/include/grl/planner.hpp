#pragma once

// Exact expectimax over (action, percept) trees: truncated values of fixed
// policies, optimal (and adversarial) truncated plans, planning inside a
// Bayesian mixture, and exact total variation between two interaction measures.
//
// Values are normalized as in V = (1/Gamma_t) E[sum_{k=t}^m gamma_k r_k]; the
// recursion is carried out in the normalized form
//   V_k = sum_e nu(e) [ (gamma_k/Gamma_k) r(e) + (Gamma_{k+1}/Gamma_k) V_{k+1} ]
// so that nothing underflows for large t under geometric discounting.

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "grl/bayes.hpp"
#include "grl/core.hpp"
#include "grl/discount.hpp"

namespace grl {

struct NodeKey {
  EnvState state;
  Time t = 1;

  friend bool operator==(const NodeKey&, const NodeKey&) = default;
};

struct NodeKeyHash {
  std::size_t operator()(const NodeKey& k) const noexcept {
    return EnvStateHash{}(k.state) ^ static_cast<std::size_t>(splitmix64(static_cast<std::uint64_t>(k.t)));
  }
};

struct NodeEntry {
  std::vector<double> action_values;
  Action chosen;
  double value = 0.0;
};

struct PlanResult {
  double root_value = 0.0;
  Action root_action;
  std::vector<double> root_action_values;
  Time start = 1;
  Time horizon = 0;
  std::unordered_map<NodeKey, NodeEntry, NodeKeyHash> nodes;
  std::size_t node_count = 0;

  const NodeEntry* find(const EnvState& s, Time t) const {
    auto it = nodes.find(NodeKey{s, t});
    return it == nodes.end() ? nullptr : &it->second;
  }
};

enum class Objective { maximize, minimize };

/// Value attached to leaves at time m+1, normalized by Gamma_{m+1}. Must be a
/// function of the environment state and time only.
using TerminalValue = std::function<double(const EnvState&, Time)>;

struct PlanOptions {
  Objective objective = Objective::maximize;
  std::size_t node_budget = default_node_budget();
  bool memoize = true;
  TerminalValue terminal;
  /// Rewards at times before this are ignored and carry no discount weight.
  Time reward_start = 0;
};

namespace detail {

class Expectimax {
 public:
  Expectimax(const Environment& env, const DiscountSchedule& d, Time m, const PlanOptions& opt, PlanResult& out)
      : env_(env), d_(d), m_(m), opt_(opt), out_(out) {}

  double node(const EnvState& s, Time k) {
    if (k > m_) return opt_.terminal ? opt_.terminal(s, k) : 0.0;
    if (opt_.memoize) {
      if (const auto* hit = out_.find(s, k)) return hit->value;
    }
    if (++out_.node_count > opt_.node_budget)
      throw BudgetExceeded("expectimax exceeded node budget of " + std::to_string(opt_.node_budget));

    const std::size_t na = env_.num_actions();
    NodeEntry entry;
    entry.action_values.assign(na, 0.0);
    const bool rewarded = k >= opt_.reward_start;
    if (!rewarded || d_.has_mass(k)) {
      const double w = rewarded ? d_.immediate_weight(k) : 0.0;
      const double c = rewarded ? d_.continuation_weight(k) : 1.0;
      const auto& alpha = env_.alphabet();
      for (std::uint32_t a = 0; a < na; ++a) {
        const auto p = env_.predict(s, k, Action(a));
        double q = 0.0;
        for (PerceptIndex e = 0; e < p.size(); ++e) {
          if (p[e] <= 0.0) continue;
          const double cont = (c == 0.0 && !opt_.terminal) ? 0.0 : node(env_.advance(s, k, Action(a), e), k + 1);
          q += p[e] * (w * alpha.reward(e) + c * cont);
        }
        entry.action_values[a] = q;
      }
    }
    std::uint32_t best = 0;
    for (std::uint32_t a = 1; a < na; ++a) {
      const bool better = opt_.objective == Objective::maximize ? entry.action_values[a] > entry.action_values[best]
                                                                 : entry.action_values[a] < entry.action_values[best];
      if (better) best = a;
    }
    entry.chosen = Action(best);
    entry.value = entry.action_values[best];
    const double v = entry.value;
    out_.nodes.insert_or_assign(NodeKey{s, k}, std::move(entry));
    return v;
  }

 private:
  const Environment& env_;
  const DiscountSchedule& d_;
  Time m_;
  const PlanOptions& opt_;
  PlanResult& out_;
};

}  // namespace detail

/// Expectimax from an explicit state at time t down to horizon m (inclusive).
/// Ties go to the lowest action id.
inline PlanResult plan_from(const Environment& env, const DiscountSchedule& d, const EnvState& s, Time t, Time m,
                            const PlanOptions& opt = {}) {
  PlanResult out;
  out.start = t;
  out.horizon = m;
  detail::Expectimax search(env, d, m, opt, out);
  out.root_value = search.node(s, t);
  if (const auto* root = out.find(s, t)) {
    out.root_action = root->chosen;
    out.root_action_values = root->action_values;
  } else {
    out.root_action_values.assign(env.num_actions(), out.root_value);
  }
  return out;
}

/// Optimal truncated value V*^m_nu(h) and an optimal action at every reachable node.
inline PlanResult optimal_plan(const Environment& env, const DiscountSchedule& d, const History& h, Time m,
                               PlanOptions opt = {}) {
  opt.objective = Objective::maximize;
  return plan_from(env, d, env.state_after(h), h.time(), m, opt);
}

/// Same recursion minimizing over actions, with `terminal` at the depth-m leaves.
inline PlanResult min_plan(const Environment& env, const DiscountSchedule& d, const History& h, Time m,
                           TerminalValue terminal, PlanOptions opt = {}) {
  opt.objective = Objective::minimize;
  opt.terminal = std::move(terminal);
  return plan_from(env, d, env.state_after(h), h.time(), m, opt);
}

/// Bayes-optimal truncated plan: expectimax in the mixture over the belief's resolved front.
inline PlanResult optimal_plan_in_mixture(const BeliefState& belief, const DiscountSchedule& d, Time m,
                                          PlanOptions opt = {}) {
  const BeliefState b = belief.resolved(belief.options().delta_mix);
  const auto xi = MixtureEnvironment::of_front(b);
  opt.objective = Objective::maximize;
  return plan_from(*xi, d, xi->state_of(b), b.time(), m, opt);
}

/// Exact V^{pi,m}_nu(h) by enumeration; 0 when Gamma_t = 0.
inline double value_of_policy(const Environment& env, const Policy& policy, const DiscountSchedule& d,
                              const History& h, Time m, std::size_t node_budget = default_node_budget()) {
  std::size_t nodes = 0;
  History work = h;
  const auto& alpha = env.alphabet();
  const auto recurse = [&](auto&& self, const EnvState& s, Time k) -> double {
    if (k > m || !d.has_mass(k)) return 0.0;
    if (++nodes > node_budget) throw BudgetExceeded("policy evaluation exceeded node budget");
    const double w = d.immediate_weight(k);
    const double c = d.continuation_weight(k);
    const auto pa = policy.action_distribution(work);
    double v = 0.0;
    for (std::uint32_t a = 0; a < pa.size(); ++a) {
      if (pa[a] <= 0.0) continue;
      const auto pe = env.predict(s, k, Action(a));
      for (PerceptIndex e = 0; e < pe.size(); ++e) {
        if (pe[e] <= 0.0) continue;
        work.push(Action(a), e);
        const double cont = c == 0.0 ? 0.0 : self(self, env.advance(s, k, Action(a), e), k + 1);
        work.pop();
        v += pa[a] * pe[e] * (w * alpha.reward(e) + c * cont);
      }
    }
    return v;
  };
  return recurse(recurse, env.state_after(h), h.time());
}

/// Undiscounted expected reward sum E[sum_{k=t}^m r_k | h] under a fixed policy.
inline double expected_reward_sum(const Environment& env, const Policy& policy, const History& h, Time m,
                                  std::size_t node_budget = default_node_budget()) {
  if (m < h.time()) return 0.0;
  const auto d = TableDiscount::finite_horizon(m);
  return value_of_policy(env, policy, *d, h, m, node_budget) * d->normalizer(h.time());
}

/// D_m(A, B | h): half the L1 distance between the two conditional measures on
/// (action, percept) continuations of h up to time m. Exact enumeration; a
/// branch with zero mass under one measure contributes the other's mass whole.
inline double tv_distance(const Environment& env_a, const Policy& policy_a, const Environment& env_b,
                          const Policy& policy_b, const History& h, Time m,
                          std::size_t node_budget = default_node_budget()) {
  if (env_a.num_actions() != env_b.num_actions() || !(env_a.alphabet() == env_b.alphabet()))
    throw ValidationError("total variation needs matching action and percept alphabets");
  std::size_t nodes = 0;
  History work = h;
  double acc = 0.0;
  const auto recurse = [&](auto&& self, const EnvState& sa, const EnvState& sb, double pa, double pb,
                           Time k) -> void {
    if (pa == 0.0 || pb == 0.0 || k > m) {
      acc += std::abs(pa - pb);
      return;
    }
    if (++nodes > node_budget) throw BudgetExceeded("total variation enumeration exceeded node budget");
    const auto qa = policy_a.action_distribution(work);
    const auto qb = policy_b.action_distribution(work);
    for (std::uint32_t a = 0; a < qa.size(); ++a) {
      if (qa[a] <= 0.0 && qb[a] <= 0.0) continue;
      const auto ea = qa[a] > 0.0 ? env_a.predict(sa, k, Action(a)) : Distribution(env_a.alphabet().size(), 0.0);
      const auto eb = qb[a] > 0.0 ? env_b.predict(sb, k, Action(a)) : Distribution(env_b.alphabet().size(), 0.0);
      for (PerceptIndex e = 0; e < ea.size(); ++e) {
        const double na = pa * qa[a] * ea[e];
        const double nb = pb * qb[a] * eb[e];
        if (na == 0.0 && nb == 0.0) continue;
        if (na == 0.0 || nb == 0.0) {
          acc += na + nb;
          continue;
        }
        work.push(Action(a), e);
        self(self, env_a.advance(sa, k, Action(a), e), env_b.advance(sb, k, Action(a), e), na, nb, k + 1);
        work.pop();
      }
    }
  };
  recurse(recurse, env_a.state_after(h), env_b.state_after(h), 1.0, 1.0, h.time());
  return 0.5 * acc;
}

/// Deterministic policy that follows an environment's truncated optimal plan
/// with horizon m. Nodes missing from the stored plan (e.g. after a percept the
/// environment deemed impossible) are planned on demand.
class PlanPolicy final : public Policy {
 public:
  PlanPolicy(EnvPtr env, DiscountPtr d, Time horizon, std::shared_ptr<const PlanResult> plan = nullptr,
             std::size_t node_budget = default_node_budget())
      : env_(std::move(env)), d_(std::move(d)), horizon_(horizon), plan_(std::move(plan)), budget_(node_budget) {}

  std::size_t num_actions() const override { return env_->num_actions(); }

  Distribution action_distribution(const History& h) const override {
    return point_mass(env_->num_actions(), action_at(env_->state_after(h), h.time()).id);
  }

  Action action_at(const EnvState& s, Time t) const {
    if (t > horizon_) return Action(0);
    if (plan_)
      if (const auto* n = plan_->find(s, t)) return n->chosen;
    PlanOptions opt;
    opt.node_budget = budget_;
    return plan_from(*env_, *d_, s, t, horizon_, opt).root_action;
  }

  const Environment& environment() const { return *env_; }
  Time horizon() const { return horizon_; }

 private:
  EnvPtr env_;
  DiscountPtr d_;
  Time horizon_;
  std::shared_ptr<const PlanResult> plan_;
  std::size_t budget_;
};

}  // namespace grl
