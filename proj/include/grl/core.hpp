#pragma once

// Interaction formalism: actions, percepts, histories, environments, policies
// and the joint measure they generate.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grl/rng.hpp"

namespace grl {

/// 1-based time index; the first action is taken at t = 1.
using Time = std::int64_t;

/// Index into an environment's percept alphabet.
using PerceptIndex = std::uint32_t;

/// Probability vector over a finite alphabet.
using Distribution = std::vector<double>;

// ---------------------------------------------------------------------------
// errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A search or enumeration would exceed its node budget.
struct BudgetExceeded : Error {
  using Error::Error;
};

/// A countable class could not be resolved to the requested tail mass.
struct TailNotResolved : Error {
  using Error::Error;
};

/// Every environment in the class assigns probability zero to an observation.
struct ZeroLikelihood : Error {
  using Error::Error;
};

/// Malformed parameters, specs or configs.
struct ValidationError : Error {
  using Error::Error;
};

/// A quantity is undefined at the requested point (e.g. an empty discount tail).
struct DomainError : Error {
  using Error::Error;
};

/// Default expectimax / enumeration node budget. GRL_NODE_BUDGET overrides it.
inline std::size_t default_node_budget() {
  if (const char* env = std::getenv("GRL_NODE_BUDGET")) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return 10'000'000;
}

// ---------------------------------------------------------------------------
// actions and percepts

struct Action {
  std::uint32_t id = 0;

  constexpr Action() = default;
  constexpr explicit Action(std::uint32_t i) : id(i) {}
  friend constexpr auto operator<=>(Action, Action) = default;
};

/// Exact rational number; rewards live in a finite declared level set.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  constexpr Rational() = default;
  constexpr Rational(std::int64_t n, std::int64_t d = 1) : num(n), den(d) { normalize(); }

  constexpr double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend constexpr bool operator==(const Rational& a, const Rational& b) {
    return a.num == b.num && a.den == b.den;
  }
  friend constexpr auto operator<=>(const Rational& a, const Rational& b) {
    // dens are positive after normalization
    return a.num * b.den <=> b.num * a.den;
  }

  friend constexpr Rational operator-(const Rational& a, const Rational& b) {
    return Rational(a.num * b.den - b.num * a.den, a.den * b.den);
  }
  friend constexpr Rational operator+(const Rational& a, const Rational& b) {
    return Rational(a.num * b.den + b.num * a.den, a.den * b.den);
  }

  std::string str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }

  /// Parses "p", "p/q" or a decimal string with at most 9 fractional digits.
  static Rational parse(const std::string& s) {
    auto fail = [&]() -> Rational { throw ValidationError("invalid rational '" + s + "'"); };
    if (s.empty()) return fail();
    try {
      if (auto slash = s.find('/'); slash != std::string::npos) {
        std::size_t p1 = 0, p2 = 0;
        const auto n = std::stoll(s.substr(0, slash), &p1);
        const auto d = std::stoll(s.substr(slash + 1), &p2);
        if (p1 != slash || p2 != s.size() - slash - 1 || d == 0) return fail();
        return Rational(n, d);
      }
      if (auto dot = s.find('.'); dot != std::string::npos) {
        const std::string frac = s.substr(dot + 1);
        if (frac.size() > 9 || frac.find_first_not_of("0123456789") != std::string::npos) return fail();
        const std::string whole = s.substr(0, dot);
        std::int64_t den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        const bool neg = !whole.empty() && whole[0] == '-';
        const std::int64_t w = (whole.empty() || whole == "-") ? 0 : std::stoll(whole);
        const std::int64_t f = frac.empty() ? 0 : std::stoll(frac);
        return Rational(w * den + (neg ? -f : f), den);
      }
      std::size_t pos = 0;
      const auto n = std::stoll(s, &pos);
      if (pos != s.size()) return fail();
      return Rational(n, 1);
    } catch (const std::logic_error&) {
      return fail();
    }
  }

 private:
  constexpr void normalize() {
    if (den == 0) throw ValidationError("rational with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const auto g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }
};

struct Percept {
  std::uint32_t observation = 0;
  Rational reward;

  friend bool operator==(const Percept&, const Percept&) = default;
};

/// The finite percept set E = O x reward-levels an environment can emit.
class PerceptAlphabet {
 public:
  PerceptAlphabet() = default;
  explicit PerceptAlphabet(std::vector<Percept> percepts) : percepts_(std::move(percepts)) {
    if (percepts_.empty()) throw ValidationError("percept alphabet must be nonempty");
    for (std::size_t i = 0; i < percepts_.size(); ++i) {
      const auto& p = percepts_[i];
      if (p.reward < Rational(0) || Rational(1) < p.reward)
        throw ValidationError("reward " + p.reward.str() + " outside [0,1]");
      for (std::size_t j = 0; j < i; ++j)
        if (percepts_[j] == p) throw ValidationError("duplicate percept in alphabet");
    }
  }

  /// One observation, one percept per reward level.
  static PerceptAlphabet rewards_only(const std::vector<Rational>& levels) {
    std::vector<Percept> ps;
    ps.reserve(levels.size());
    for (const auto& r : levels) ps.push_back({0, r});
    return PerceptAlphabet(std::move(ps));
  }

  std::size_t size() const { return percepts_.size(); }
  const Percept& operator[](PerceptIndex i) const { return percepts_.at(i); }
  double reward(PerceptIndex i) const { return percepts_.at(i).reward.value(); }

  std::optional<PerceptIndex> index_of(const Percept& p) const {
    for (std::size_t i = 0; i < percepts_.size(); ++i)
      if (percepts_[i] == p) return static_cast<PerceptIndex>(i);
    return std::nullopt;
  }

  friend bool operator==(const PerceptAlphabet&, const PerceptAlphabet&) = default;

 private:
  std::vector<Percept> percepts_;
};

// ---------------------------------------------------------------------------
// histories

struct Step {
  Action action;
  PerceptIndex percept = 0;

  friend bool operator==(const Step&, const Step&) = default;
};

/// Sequence of interaction cycles; a history of length t-1 is "the history up to time t".
class History {
 public:
  History() = default;
  explicit History(std::vector<Step> steps) : steps_(std::move(steps)) {}

  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  /// Time of the next action.
  Time time() const { return static_cast<Time>(steps_.size()) + 1; }

  const Step& operator[](std::size_t i) const { return steps_[i]; }
  auto begin() const { return steps_.begin(); }
  auto end() const { return steps_.end(); }
  const std::vector<Step>& steps() const { return steps_; }

  void push(Action a, PerceptIndex e) { steps_.push_back({a, e}); }
  void pop() { steps_.pop_back(); }

  History prefix(std::size_t n) const {
    return History(std::vector<Step>(steps_.begin(), steps_.begin() + static_cast<std::ptrdiff_t>(std::min(n, size()))));
  }
  History extended(Action a, PerceptIndex e) const {
    History h = *this;
    h.push(a, e);
    return h;
  }

  friend bool operator==(const History&, const History&) = default;

 private:
  std::vector<Step> steps_;
};

// ---------------------------------------------------------------------------
// environments

/// Opaque summary of a history inside one environment. Equal states at equal
/// times must have identical conditional futures.
struct EnvState {
  std::vector<std::int64_t> words;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct EnvStateHash {
  std::size_t operator()(const EnvState& s) const noexcept {
    std::uint64_t h = 0x84222325cbf29ce4ULL ^ s.words.size();
    for (auto w : s.words) h = splitmix64(h ^ static_cast<std::uint64_t>(w));
    return static_cast<std::size_t>(h);
  }
};

/// Conditional percept distribution nu(e | history, action).
///
/// Environments are queried incrementally through an opaque EnvState so that
/// long trajectories do not replay their history at every step. The history
/// API (percept_distribution, state_key) is derived from the incremental one.
/// Implementations must be pure: no mutation through the query interface.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t num_actions() const = 0;
  virtual const PerceptAlphabet& alphabet() const = 0;

  virtual EnvState initial_state() const = 0;
  /// Percept distribution for action a taken at time t from state s.
  virtual Distribution predict(const EnvState& s, Time t, Action a) const = 0;
  virtual EnvState advance(const EnvState& s, Time t, Action a, PerceptIndex e) const = 0;

  /// True when states are compact summaries rather than encoded histories,
  /// i.e. memoizing on them is worthwhile.
  virtual bool compact_state() const { return false; }
  /// Part of the state key that depends on time; the future from (s, t) and
  /// (s, t') must coincide whenever the signatures agree.
  virtual std::int64_t time_signature(Time t) const { return t; }

  /// Maximal undiscounted expected reward sum over m steps, when known in closed form.
  virtual std::optional<double> optimal_reward_sum(Time /*m*/) const { return std::nullopt; }

  EnvState state_after(const History& h) const {
    EnvState s = initial_state();
    Time t = 1;
    for (const auto& step : h) s = advance(s, t++, step.action, step.percept);
    return s;
  }

  Distribution percept_distribution(const History& h, Action a) const {
    return predict(state_after(h), h.time(), a);
  }

  /// Compact future-equivalent key for h, when the environment exposes one.
  std::optional<EnvState> state_key(const History& h) const {
    if (!compact_state()) return std::nullopt;
    EnvState s = state_after(h);
    s.words.push_back(time_signature(h.time()));
    return s;
  }
};

using EnvPtr = std::shared_ptr<const Environment>;

/// Base for environments defined directly on histories; their state is the
/// encoded history itself.
class HistoryEnvironment : public Environment {
 public:
  EnvState initial_state() const final { return {}; }

  Distribution predict(const EnvState& s, Time /*t*/, Action a) const final {
    return distribution(decode(s), a);
  }

  EnvState advance(const EnvState& s, Time /*t*/, Action a, PerceptIndex e) const final {
    EnvState next = s;
    next.words.push_back(a.id);
    next.words.push_back(e);
    return next;
  }

  static History decode(const EnvState& s) {
    std::vector<Step> steps;
    steps.reserve(s.words.size() / 2);
    for (std::size_t i = 0; i + 1 < s.words.size(); i += 2)
      steps.push_back({Action(static_cast<std::uint32_t>(s.words[i])), static_cast<PerceptIndex>(s.words[i + 1])});
    return History(std::move(steps));
  }

 protected:
  virtual Distribution distribution(const History& h, Action a) const = 0;
};

// ---------------------------------------------------------------------------
// policies

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::size_t num_actions() const = 0;
  virtual Distribution action_distribution(const History& h) const = 0;
};

using PolicyPtr = std::shared_ptr<const Policy>;

inline Distribution point_mass(std::size_t n, std::size_t i) {
  Distribution d(n, 0.0);
  d.at(i) = 1.0;
  return d;
}

class UniformPolicy final : public Policy {
 public:
  explicit UniformPolicy(std::size_t n) : n_(n) {
    if (n == 0) throw ValidationError("policy needs at least one action");
  }
  std::size_t num_actions() const override { return n_; }
  Distribution action_distribution(const History&) const override {
    return Distribution(n_, 1.0 / static_cast<double>(n_));
  }

 private:
  std::size_t n_;
};

/// Policy given by an arbitrary function of the history.
class FunctionPolicy final : public Policy {
 public:
  using Fn = std::function<Distribution(const History&)>;
  FunctionPolicy(std::size_t n, Fn fn) : n_(n), fn_(std::move(fn)) {}
  std::size_t num_actions() const override { return n_; }
  Distribution action_distribution(const History& h) const override { return fn_(h); }

 private:
  std::size_t n_;
  Fn fn_;
};

/// Deterministic time-indexed policy.
class SchedulePolicy final : public Policy {
 public:
  using Schedule = std::function<Action(Time)>;
  SchedulePolicy(std::size_t n, Schedule schedule) : n_(n), schedule_(std::move(schedule)) {}
  std::size_t num_actions() const override { return n_; }
  Distribution action_distribution(const History& h) const override {
    return point_mass(n_, schedule_(h.time()).id);
  }

 private:
  std::size_t n_;
  Schedule schedule_;
};

// ---------------------------------------------------------------------------
// the joint measure nu^pi

/// nu^pi(h) = prod_k pi(a_k | h_<k) nu(e_k | h_<k a_k); 1 for the empty history.
inline double joint_probability(const Environment& env, const Policy& policy, const History& h) {
  double p = 1.0;
  EnvState s = env.initial_state();
  History prefix;
  for (const auto& step : h) {
    const Time t = prefix.time();
    p *= policy.action_distribution(prefix).at(step.action.id);
    if (p == 0.0) return 0.0;
    p *= env.predict(s, t, step.action).at(step.percept);
    if (p == 0.0) return 0.0;
    s = env.advance(s, t, step.action, step.percept);
    prefix.push(step.action, step.percept);
  }
  return p;
}

/// Samples a length-`horizon` history from nu^pi. Policy and environment draw
/// from separate streams derived from `seed`.
inline History rollout(const Environment& env, const Policy& policy, Time horizon, std::uint64_t seed) {
  RandomStream policy_rng(seed, StreamRole::policy);
  RandomStream env_rng(seed, StreamRole::environment);
  History h;
  EnvState s = env.initial_state();
  for (Time t = 1; t <= horizon; ++t) {
    const Action a(static_cast<std::uint32_t>(policy_rng.categorical(policy.action_distribution(h))));
    const auto e = static_cast<PerceptIndex>(env_rng.categorical(env.predict(s, t, a)));
    s = env.advance(s, t, a, e);
    h.push(a, e);
  }
  return h;
}

/// All positive-probability continuations of `from` of length `depth`, with
/// their conditional probabilities nu^pi(. | from).
inline std::vector<std::pair<History, double>> enumerate_histories(const Environment& env, const Policy& policy,
                                                                   const History& from, int depth,
                                                                   std::size_t node_budget = default_node_budget()) {
  if (depth < 0) throw ValidationError("enumeration depth must be nonnegative");
  std::vector<std::pair<History, double>> out;
  std::size_t nodes = 0;
  History h = from;
  const auto recurse = [&](auto&& self, const EnvState& s, double p, int remaining) -> void {
    if (++nodes > node_budget) throw BudgetExceeded("history enumeration exceeded node budget");
    if (remaining == 0) {
      out.emplace_back(h, p);
      return;
    }
    const Time t = h.time();
    const auto pa = policy.action_distribution(h);
    for (std::uint32_t a = 0; a < pa.size(); ++a) {
      if (pa[a] <= 0.0) continue;
      const auto pe = env.predict(s, t, Action(a));
      for (PerceptIndex e = 0; e < pe.size(); ++e) {
        if (pe[e] <= 0.0) continue;
        h.push(Action(a), e);
        self(self, env.advance(s, t, Action(a), e), p * pa[a] * pe[e], remaining - 1);
        h.pop();
      }
    }
  };
  recurse(recurse, env.state_after(from), 1.0, depth);
  return out;
}

/// Reward of the percept at step k (0-based) of h.
inline double reward_at(const Environment& env, const History& h, std::size_t k) {
  return env.alphabet().reward(h[k].percept);
}

}  // namespace grl
