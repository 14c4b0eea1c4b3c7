#pragma once

// Decision-making policies: Thompson sampling over an environment class, the
// Bayes-optimal agent, the informed optimal agent, and simple baselines.
//
// Agents are values: copying one forks its whole internal state (belief,
// sampled environment, block plan, private random stream).

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "grl/bayes.hpp"
#include "grl/core.hpp"
#include "grl/discount.hpp"
#include "grl/planner.hpp"

namespace grl {

class Agent {
 public:
  virtual ~Agent() = default;

  virtual std::string name() const = 0;
  virtual std::size_t num_actions() const = 0;
  /// Brings internal state up to date for history h (e.g. starts a new block).
  virtual void prepare(const History& h) { (void)h; }
  /// Action at time h.time(); calls prepare(h) first.
  virtual Action act(const History& h) = 0;
  /// Percept e followed action a at the current time.
  virtual void observe(Action a, PerceptIndex e) = 0;
  virtual std::unique_ptr<Agent> clone() const = 0;

  virtual const BeliefState* belief() const { return nullptr; }
  /// Deterministic policy the agent would follow from h up to horizon m
  /// without further internal randomness. Call prepare(h) first.
  virtual PolicyPtr continuation_policy(const History& h, Time m) const = 0;
  /// The agent's whole policy when it is a fixed function of history, else null.
  virtual PolicyPtr fixed_policy() const { return nullptr; }
};

/// Makes a fresh agent that draws from the given private stream.
using AgentFactory = std::function<std::unique_ptr<Agent>(RandomStream)>;

namespace detail {

inline Time block_horizon(const DiscountSchedule& d, Time t, double eps) {
  if (!d.has_mass(t)) return 1;
  return std::max<Time>(1, effective_horizon(d, t, eps));
}

}  // namespace detail

/// One Thompson-sampling block: the sampled environment is followed on [start, end).
struct BlockRecord {
  Time start = 0;
  Time end = 0;
  std::size_t sampled_index = 0;
  /// Gamma_end / Gamma_start, the value lost by truncating the plan at end - 1.
  double truncation_bound = 0.0;
};

/// Thompson sampling: at each resampling time t draw rho from the posterior and
/// follow rho's optimal plan, truncated at t + H_t(eps_t) - 1, for H_t(eps_t)
/// steps. The belief is updated after every percept, inside blocks too.
class ThompsonAgent final : public Agent {
 public:
  ThompsonAgent(ClassPtr cls, DiscountPtr d, EpsilonSchedule eps, RandomStream rng,
                BeliefState::Options belief_options = {}, std::size_t node_budget = default_node_budget())
      : belief_(std::move(cls), belief_options),
        d_(std::move(d)),
        eps_(std::move(eps)),
        rng_(rng),
        budget_(node_budget) {}

  std::string name() const override { return "thompson{" + eps_.name() + "}"; }
  std::size_t num_actions() const override { return belief_.environment_class().num_actions(); }

  void prepare(const History& h) override {
    if (h.time() != belief_.time()) throw ValidationError("thompson agent: history out of sync with belief");
    if (!rho_ || h.time() >= block_end_) resample(h.time());
  }

  Action act(const History& h) override {
    prepare(h);
    const Time t = h.time();
    if (const auto* node = plan_->find(rho_state_, t)) return node->chosen;
    // rho's own plan never reached this node (rho deemed the percepts impossible);
    // pi*_rho is still defined here, so plan from it to the block horizon.
    PlanOptions opt;
    opt.node_budget = budget_;
    plan_ = std::make_shared<const PlanResult>(plan_from(*rho_, *d_, rho_state_, t, plan_->horizon, opt));
    return plan_->root_action;
  }

  void observe(Action a, PerceptIndex e) override {
    const Time t = belief_.time();
    belief_ = belief_.update(a, e);
    if (rho_) rho_state_ = rho_->advance(rho_state_, t, a, e);
  }

  std::unique_ptr<Agent> clone() const override { return std::make_unique<ThompsonAgent>(*this); }
  const BeliefState* belief() const override { return &belief_; }

  PolicyPtr continuation_policy(const History&, Time m) const override {
    if (!rho_) throw ValidationError("thompson agent has no active block; call prepare first");
    return std::make_shared<PlanPolicy>(rho_, d_, m, nullptr, budget_);
  }

  std::optional<std::size_t> sampled_index() const { return sampled_; }
  Time block_end() const { return block_end_; }
  const std::vector<BlockRecord>& blocks() const { return blocks_; }

 private:
  void resample(Time t) {
    belief_ = belief_.resolved(belief_.options().delta_sample);
    const auto draw = belief_.sample_posterior(rng_);
    sampled_ = draw.index;
    rho_ = draw.environment;
    rho_state_ = belief_.member_state(draw.index);
    const Time H = detail::block_horizon(*d_, t, eps_(t));
    PlanOptions opt;
    opt.node_budget = budget_;
    plan_ = std::make_shared<const PlanResult>(plan_from(*rho_, *d_, rho_state_, t, t + H - 1, opt));
    block_end_ = t + H;
    blocks_.push_back({t, block_end_, draw.index, d_->has_mass(t) ? d_->tail_ratio(t, H) : 0.0});
  }

  BeliefState belief_;
  DiscountPtr d_;
  EpsilonSchedule eps_;
  RandomStream rng_;
  std::size_t budget_;

  std::optional<std::size_t> sampled_;
  EnvPtr rho_;
  EnvState rho_state_;
  std::shared_ptr<const PlanResult> plan_;
  Time block_end_ = 0;
  std::vector<BlockRecord> blocks_;
};

/// Bayes-optimal agent: expectimax in the posterior mixture, horizon t + H_t(eps_t) - 1.
class BayesAgent final : public Agent {
 public:
  BayesAgent(ClassPtr cls, DiscountPtr d, EpsilonSchedule eps_plan, BeliefState::Options belief_options = {},
             std::size_t node_budget = default_node_budget())
      : belief_(std::move(cls), belief_options), d_(std::move(d)), eps_(std::move(eps_plan)), budget_(node_budget) {}

  std::string name() const override { return "bayes{" + eps_.name() + "}"; }
  std::size_t num_actions() const override { return belief_.environment_class().num_actions(); }

  void prepare(const History& h) override {
    if (h.time() != belief_.time()) throw ValidationError("bayes agent: history out of sync with belief");
    belief_ = belief_.resolved(belief_.options().delta_mix);
  }

  Action act(const History& h) override {
    prepare(h);
    const Time t = h.time();
    PlanOptions opt;
    opt.node_budget = budget_;
    return optimal_plan_in_mixture(belief_, *d_, t + detail::block_horizon(*d_, t, eps_(t)) - 1, opt).root_action;
  }

  void observe(Action a, PerceptIndex e) override { belief_ = belief_.update(a, e); }
  std::unique_ptr<Agent> clone() const override { return std::make_unique<BayesAgent>(*this); }
  const BeliefState* belief() const override { return &belief_; }

  PolicyPtr continuation_policy(const History&, Time m) const override {
    return std::make_shared<PlanPolicy>(MixtureEnvironment::of_front(belief_), d_, m, nullptr, budget_);
  }

 private:
  BeliefState belief_;
  DiscountPtr d_;
  EpsilonSchedule eps_;
  std::size_t budget_;
};

/// Knows the true environment and plays its truncated optimal policy.
class InformedAgent final : public Agent {
 public:
  InformedAgent(EnvPtr env, DiscountPtr d, EpsilonSchedule eps_plan, std::size_t node_budget = default_node_budget())
      : env_(std::move(env)), d_(std::move(d)), eps_(std::move(eps_plan)), budget_(node_budget),
        state_(env_->initial_state()) {}

  std::string name() const override { return "informed"; }
  std::size_t num_actions() const override { return env_->num_actions(); }

  Action act(const History& h) override {
    if (h.time() != t_) throw ValidationError("informed agent: history out of sync");
    PlanOptions opt;
    opt.node_budget = budget_;
    return plan_from(*env_, *d_, state_, t_, t_ + detail::block_horizon(*d_, t_, eps_(t_)) - 1, opt).root_action;
  }

  void observe(Action a, PerceptIndex e) override { state_ = env_->advance(state_, t_++, a, e); }
  std::unique_ptr<Agent> clone() const override { return std::make_unique<InformedAgent>(*this); }

  PolicyPtr continuation_policy(const History&, Time m) const override {
    return std::make_shared<PlanPolicy>(env_, d_, m, nullptr, budget_);
  }

 private:
  EnvPtr env_;
  DiscountPtr d_;
  EpsilonSchedule eps_;
  std::size_t budget_;
  EnvState state_;
  Time t_ = 1;
};

class RandomAgent final : public Agent {
 public:
  RandomAgent(std::size_t num_actions, RandomStream rng) : n_(num_actions), rng_(rng) {}

  std::string name() const override { return "random"; }
  std::size_t num_actions() const override { return n_; }
  Action act(const History&) override {
    const Distribution p(n_, 1.0);
    return Action(static_cast<std::uint32_t>(rng_.categorical(p)));
  }
  void observe(Action, PerceptIndex) override {}
  std::unique_ptr<Agent> clone() const override { return std::make_unique<RandomAgent>(*this); }
  PolicyPtr continuation_policy(const History&, Time) const override { return fixed_policy(); }
  PolicyPtr fixed_policy() const override { return std::make_shared<UniformPolicy>(n_); }

 private:
  std::size_t n_;
  RandomStream rng_;
};

/// Plays a declared time-indexed action schedule.
class ScheduledAgent final : public Agent {
 public:
  ScheduledAgent(std::string name, std::size_t num_actions, SchedulePolicy::Schedule schedule)
      : name_(std::move(name)), n_(num_actions), schedule_(std::move(schedule)) {}

  /// `rare` at t = 1, 2, 4, 8, ..., `usual` otherwise.
  static SchedulePolicy::Schedule powers_of_two(Action rare, Action usual) {
    return [=](Time t) { return (t & (t - 1)) == 0 ? rare : usual; };
  }

  std::string name() const override { return name_; }
  std::size_t num_actions() const override { return n_; }
  Action act(const History& h) override { return schedule_(h.time()); }
  void observe(Action, PerceptIndex) override {}
  std::unique_ptr<Agent> clone() const override { return std::make_unique<ScheduledAgent>(*this); }
  PolicyPtr continuation_policy(const History&, Time) const override { return fixed_policy(); }
  PolicyPtr fixed_policy() const override { return std::make_shared<SchedulePolicy>(n_, schedule_); }

 private:
  std::string name_;
  std::size_t n_;
  SchedulePolicy::Schedule schedule_;
};

// ---------------------------------------------------------------------------
// simulation

/// One trajectory of an agent in a true environment. Environment randomness
/// comes from its own stream, independent of the agent's.
class Simulation {
 public:
  Simulation(EnvPtr truth, std::unique_ptr<Agent> agent, RandomStream env_rng)
      : truth_(std::move(truth)), agent_(std::move(agent)), env_rng_(env_rng), state_(truth_->initial_state()) {
    if (agent_->num_actions() != truth_->num_actions())
      throw ValidationError("agent and environment disagree on the number of actions");
  }

  Simulation(const Simulation& o)
      : truth_(o.truth_), agent_(o.agent_->clone()), env_rng_(o.env_rng_), state_(o.state_), history_(o.history_),
        rewards_(o.rewards_) {}
  Simulation& operator=(const Simulation&) = delete;
  Simulation(Simulation&&) = default;

  /// Runs one interaction cycle and returns its reward.
  double step() {
    const Time t = history_.time();
    const Action a = agent_->act(history_);
    const auto e = static_cast<PerceptIndex>(env_rng_.categorical(truth_->predict(state_, t, a)));
    state_ = truth_->advance(state_, t, a, e);
    history_.push(a, e);
    agent_->observe(a, e);
    const double r = truth_->alphabet().reward(e);
    rewards_.push_back(r);
    return r;
  }

  /// Steps until the next action would be taken at time t.
  void run_until(Time t) {
    while (history_.time() < t) step();
  }

  const History& history() const { return history_; }
  Time time() const { return history_.time(); }
  const std::vector<double>& rewards() const { return rewards_; }
  double reward_sum(Time up_to) const {
    double s = 0.0;
    for (Time k = 1; k <= up_to && k <= static_cast<Time>(rewards_.size()); ++k) s += rewards_[static_cast<std::size_t>(k - 1)];
    return s;
  }
  Agent& agent() { return *agent_; }
  const Agent& agent() const { return *agent_; }
  const Environment& truth() const { return *truth_; }
  const EnvState& truth_state() const { return state_; }

 private:
  EnvPtr truth_;
  std::unique_ptr<Agent> agent_;
  RandomStream env_rng_;
  EnvState state_;
  History history_;
  std::vector<double> rewards_;
};

}  // namespace grl
