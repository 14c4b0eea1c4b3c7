#pragma once

// Concrete environments and classes: deterministic finite automata with time
// guards (Example-1 family, traps), Bernoulli and deterministic bandits,
// random test environments, and the class constructors built from them.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "grl/bayes.hpp"
#include "grl/core.hpp"

namespace grl {

// ---------------------------------------------------------------------------
// finite automata

/// When a transition applies: always, for t < threshold, or for t >= threshold.
enum class Guard { always, before, from };

struct AutomatonTransition {
  std::uint32_t from = 0;
  std::uint32_t action = 0;
  std::uint32_t to = 0;
  Rational reward;
  Guard guard = Guard::always;
  Time threshold = 0;

  bool applies(Time t) const {
    switch (guard) {
      case Guard::before: return t < threshold;
      case Guard::from: return t >= threshold;
      case Guard::always: break;
    }
    return true;
  }

  friend bool operator==(const AutomatonTransition&, const AutomatonTransition&) = default;
};

struct AutomatonSpec {
  std::string name;
  std::size_t num_actions = 0;
  std::vector<std::string> states;
  /// Observation emitted on entering each state.
  std::vector<std::uint32_t> observations;
  std::size_t num_observations = 1;
  std::vector<Rational> reward_levels;
  std::uint32_t initial = 0;
  std::vector<AutomatonTransition> transitions;

  friend bool operator==(const AutomatonSpec&, const AutomatonSpec&) = default;
};

inline const char* guard_name(Guard g) {
  switch (g) {
    case Guard::before: return "before";
    case Guard::from: return "from";
    case Guard::always: break;
  }
  return "always";
}

inline nlohmann::json to_json(const AutomatonSpec& spec) {
  using nlohmann::json;
  json j;
  j["name"] = spec.name;
  j["actions"] = spec.num_actions;
  j["states"] = spec.states;
  j["observations"] = spec.num_observations;
  j["observation_map"] = spec.observations;
  json levels = json::array();
  for (const auto& r : spec.reward_levels) levels.push_back(r.str());
  j["reward_levels"] = levels;
  j["initial"] = spec.states.at(spec.initial);
  json ts = json::array();
  for (const auto& tr : spec.transitions) {
    json o{{"from", spec.states.at(tr.from)},
           {"action", tr.action},
           {"to", spec.states.at(tr.to)},
           {"reward", tr.reward.str()}};
    if (tr.guard != Guard::always) o["when"] = {{"guard", guard_name(tr.guard)}, {"t", tr.threshold}};
    ts.push_back(o);
  }
  j["transitions"] = ts;
  return j;
}

inline AutomatonSpec automaton_from_json(const nlohmann::json& j) {
  AutomatonSpec spec;
  try {
    spec.name = j.value("name", std::string("automaton"));
    spec.num_actions = j.at("actions").get<std::size_t>();
    spec.states = j.at("states").get<std::vector<std::string>>();
    spec.num_observations = j.value("observations", std::size_t{1});
    spec.observations = j.contains("observation_map") ? j.at("observation_map").get<std::vector<std::uint32_t>>()
                                                      : std::vector<std::uint32_t>(spec.states.size(), 0);
    for (const auto& r : j.at("reward_levels")) {
      spec.reward_levels.push_back(r.is_string() ? Rational::parse(r.get<std::string>())
                                                 : Rational(r.get<std::int64_t>()));
    }
    const auto index_of = [&](const std::string& s) -> std::uint32_t {
      auto it = std::find(spec.states.begin(), spec.states.end(), s);
      if (it == spec.states.end()) throw ValidationError("unknown automaton state '" + s + "'");
      return static_cast<std::uint32_t>(it - spec.states.begin());
    };
    spec.initial = index_of(j.at("initial").get<std::string>());
    for (const auto& o : j.at("transitions")) {
      AutomatonTransition tr;
      tr.from = index_of(o.at("from").get<std::string>());
      tr.action = o.at("action").get<std::uint32_t>();
      tr.to = index_of(o.at("to").get<std::string>());
      const auto& r = o.at("reward");
      tr.reward = r.is_string() ? Rational::parse(r.get<std::string>()) : Rational(r.get<std::int64_t>());
      if (o.contains("when")) {
        const auto g = o.at("when").at("guard").get<std::string>();
        if (g == "before") tr.guard = Guard::before;
        else if (g == "from") tr.guard = Guard::from;
        else throw ValidationError("unknown guard '" + g + "'");
        tr.threshold = o.at("when").at("t").get<Time>();
      }
      spec.transitions.push_back(tr);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed automaton spec: ") + e.what());
  }
  return spec;
}

/// Deterministic finite automaton: (state, action, t) -> (next state, reward);
/// the percept is (observation of the next state, reward).
class FiniteAutomatonEnv final : public Environment {
 public:
  explicit FiniteAutomatonEnv(AutomatonSpec spec) : spec_(std::move(spec)) {
    validate();
    std::vector<Percept> ps;
    for (std::uint32_t o = 0; o < spec_.num_observations; ++o)
      for (const auto& r : spec_.reward_levels) ps.push_back({o, r});
    alphabet_ = PerceptAlphabet(std::move(ps));
    table_.assign(spec_.states.size() * spec_.num_actions, {});
    for (std::size_t i = 0; i < spec_.transitions.size(); ++i) {
      const auto& tr = spec_.transitions[i];
      table_[tr.from * spec_.num_actions + tr.action].push_back(i);
      if (tr.guard != Guard::always) max_threshold_ = std::max(max_threshold_, tr.threshold);
    }
  }

  const AutomatonSpec& spec() const { return spec_; }

  std::string name() const override { return spec_.name; }
  std::size_t num_actions() const override { return spec_.num_actions; }
  const PerceptAlphabet& alphabet() const override { return alphabet_; }
  bool compact_state() const override { return true; }
  std::int64_t time_signature(Time t) const override { return std::min<Time>(t, max_threshold_ + 1); }

  EnvState initial_state() const override { return {{static_cast<std::int64_t>(spec_.initial)}}; }

  Distribution predict(const EnvState& s, Time t, Action a) const override {
    const auto& tr = transition(s, t, a);
    return point_mass(alphabet_.size(), percept_of(tr));
  }

  EnvState advance(const EnvState& s, Time t, Action a, PerceptIndex) const override {
    return {{static_cast<std::int64_t>(transition(s, t, a).to)}};
  }

  std::uint32_t state_index(const EnvState& s) const { return static_cast<std::uint32_t>(s.words.at(0)); }
  const std::string& state_name(const EnvState& s) const { return spec_.states.at(state_index(s)); }

 private:
  const AutomatonTransition& transition(const EnvState& s, Time t, Action a) const {
    for (auto i : table_.at(static_cast<std::size_t>(s.words.at(0)) * spec_.num_actions + a.id)) {
      const auto& tr = spec_.transitions[i];
      if (tr.applies(t)) return tr;
    }
    throw ValidationError("automaton '" + spec_.name + "' has no transition");  // excluded by validate()
  }

  PerceptIndex percept_of(const AutomatonTransition& tr) const {
    const auto levels = spec_.reward_levels.size();
    const auto r = std::find(spec_.reward_levels.begin(), spec_.reward_levels.end(), tr.reward);
    return static_cast<PerceptIndex>(spec_.observations[tr.to] * levels +
                                     static_cast<std::size_t>(r - spec_.reward_levels.begin()));
  }

  void validate() const {
    auto fail = [&](const std::string& why) { throw ValidationError("automaton '" + spec_.name + "': " + why); };
    if (spec_.num_actions == 0) fail("needs at least one action");
    if (spec_.states.empty()) fail("needs at least one state");
    if (spec_.observations.size() != spec_.states.size()) fail("observation map size differs from state count");
    if (spec_.reward_levels.empty()) fail("needs reward levels");
    if (spec_.initial >= spec_.states.size()) fail("initial state out of range");
    for (auto o : spec_.observations)
      if (o >= spec_.num_observations) fail("observation id out of range");
    std::set<std::string> names(spec_.states.begin(), spec_.states.end());
    if (names.size() != spec_.states.size()) fail("duplicate state names");
    std::set<Rational, std::less<>> levels;
    for (const auto& r : spec_.reward_levels) {
      if (r < Rational(0) || Rational(1) < r) fail("reward level " + r.str() + " outside [0,1]");
      levels.insert(r);
    }
    if (levels.size() != spec_.reward_levels.size()) fail("duplicate reward levels");
    for (const auto& tr : spec_.transitions) {
      if (tr.from >= spec_.states.size() || tr.to >= spec_.states.size()) fail("transition state out of range");
      if (tr.action >= spec_.num_actions) fail("transition action out of range");
      if (!levels.count(tr.reward)) fail("transition reward " + tr.reward.str() + " not a declared level");
      if (tr.guard != Guard::always && tr.threshold < 1) fail("guard threshold must be >= 1");
    }
    // Totality and determinism: applicability is piecewise constant between thresholds.
    for (std::uint32_t s = 0; s < spec_.states.size(); ++s) {
      for (std::uint32_t a = 0; a < spec_.num_actions; ++a) {
        std::set<Time> probes{1};
        for (const auto& tr : spec_.transitions)
          if (tr.from == s && tr.action == a && tr.guard != Guard::always) {
            probes.insert(tr.threshold);
            if (tr.threshold > 1) probes.insert(tr.threshold - 1);
          }
        for (Time t : probes) {
          int n = 0;
          for (const auto& tr : spec_.transitions) n += tr.from == s && tr.action == a && tr.applies(t);
          if (n != 1)
            fail("state '" + spec_.states[s] + "' action " + std::to_string(a) + " has " + std::to_string(n) +
                 " applicable transitions at t=" + std::to_string(t));
        }
      }
    }
  }

  AutomatonSpec spec_;
  PerceptAlphabet alphabet_;
  std::vector<std::vector<std::size_t>> table_;
  Time max_threshold_ = 0;
};

inline std::shared_ptr<const FiniteAutomatonEnv> make_finite_automaton(AutomatonSpec spec) {
  return std::make_shared<const FiniteAutomatonEnv>(std::move(spec));
}

inline std::shared_ptr<const FiniteAutomatonEnv> load_automaton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open automaton spec '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse automaton spec '" + path + "': " + e.what());
  }
  return make_finite_automaton(automaton_from_json(j));
}

// ---------------------------------------------------------------------------
// Example 1: nu_infinity and nu_k

namespace example1 {

inline constexpr std::uint32_t alpha = 0;
inline constexpr std::uint32_t beta = 1;

inline std::vector<Rational> reward_levels() { return {Rational(0), Rational(1, 2), Rational(1)}; }

}  // namespace example1

/// k = 0 builds nu_infinity; k >= 1 builds nu_k, whose path to s3 opens at t >= k.
inline std::shared_ptr<const FiniteAutomatonEnv> make_example1_env(Time k) {
  using namespace example1;
  if (k < 0) throw ValidationError("example-1 index must be >= 0");
  AutomatonSpec spec;
  spec.num_actions = 2;
  spec.reward_levels = reward_levels();
  spec.num_observations = 1;
  const Rational zero(0), half(1, 2), one(1);
  if (k == 0) {
    spec.name = "example1_nu_inf";
    spec.states = {"s0", "s1", "s2"};
    spec.transitions = {
        {0, beta, 0, half}, {0, alpha, 1, zero},                       // s0
        {1, beta, 0, zero}, {1, alpha, 2, zero},                       // s1
        {2, alpha, 0, zero}, {2, beta, 0, zero},                       // s2: "*, 0"
    };
  } else {
    spec.name = "example1_nu_" + std::to_string(k);
    spec.states = {"s0", "s1", "s2", "s3", "s4"};
    spec.transitions = {
        {0, beta, 0, half},
        {0, alpha, 1, zero, Guard::before, k},
        {0, alpha, 3, zero, Guard::from, k},
        {1, beta, 0, zero}, {1, alpha, 2, zero},
        {2, alpha, 0, zero}, {2, beta, 0, zero},
        {3, alpha, 4, zero}, {3, beta, 0, zero},
        {4, alpha, 4, one}, {4, beta, 2, zero},
    };
  }
  spec.observations.assign(spec.states.size(), 0);
  spec.initial = 0;
  return make_finite_automaton(std::move(spec));
}

/// {nu_inf, nu_1..nu_K} with w(nu_inf) = 1/2 and w(nu_k) proportional to 2^-k.
/// The countable variant enumerates nu_inf, nu_1, nu_2, ... with w(nu_k) = 2^-(k+1).
inline ClassPtr make_example1_class(Time K, bool countable = false) {
  if (countable) {
    return std::make_shared<const EnvironmentClass>(
        "example1",
        [](std::size_t i) -> EnvPtr { return make_example1_env(static_cast<Time>(i)); },
        [](std::size_t i) { return i == 0 ? 0.5 : std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(i + 1, 1074))); },
        [](std::size_t n) { return n == 0 ? 1.0 : std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(n, 1074))); });
  }
  if (K < 1) throw ValidationError("example-1 class needs K >= 1");
  std::vector<EnvPtr> ms{make_example1_env(0)};
  std::vector<double> w{0.5};
  double total = 0.0;
  for (Time k = 1; k <= K; ++k) total += std::ldexp(1.0, -static_cast<int>(k));
  for (Time k = 1; k <= K; ++k) {
    ms.push_back(make_example1_env(k));
    w.push_back(0.5 * std::ldexp(1.0, -static_cast<int>(k)) / total);
  }
  return std::make_shared<const EnvironmentClass>("example1_K" + std::to_string(K), std::move(ms), std::move(w));
}

// ---------------------------------------------------------------------------
// bandits

/// Arm a emits reward 1 with probability means[a], else 0; one observation.
class BernoulliBanditEnv final : public Environment {
 public:
  explicit BernoulliBanditEnv(std::vector<double> means)
      : means_(std::move(means)), alphabet_(PerceptAlphabet::rewards_only({Rational(0), Rational(1)})) {
    if (means_.empty()) throw ValidationError("bandit needs at least one arm");
    for (double m : means_)
      if (!(m >= 0.0 && m <= 1.0)) throw ValidationError("bandit means must lie in [0,1]");
  }

  const std::vector<double>& means() const { return means_; }
  std::string name() const override { return "bernoulli_bandit"; }
  std::size_t num_actions() const override { return means_.size(); }
  const PerceptAlphabet& alphabet() const override { return alphabet_; }
  bool compact_state() const override { return true; }
  std::int64_t time_signature(Time) const override { return 0; }
  EnvState initial_state() const override { return {}; }
  Distribution predict(const EnvState&, Time, Action a) const override {
    const double m = means_.at(a.id);
    return {1.0 - m, m};
  }
  EnvState advance(const EnvState& s, Time, Action, PerceptIndex) const override { return s; }
  std::optional<double> optimal_reward_sum(Time m) const override {
    return static_cast<double>(m) * *std::max_element(means_.begin(), means_.end());
  }

 private:
  std::vector<double> means_;
  PerceptAlphabet alphabet_;
};

/// Arm a always pays payoffs[a]; the alphabet is the declared level set.
class DeterministicBanditEnv final : public Environment {
 public:
  DeterministicBanditEnv(std::string name, std::vector<Rational> payoffs, std::vector<Rational> levels)
      : name_(std::move(name)), payoffs_(std::move(payoffs)), alphabet_(PerceptAlphabet::rewards_only(levels)) {
    if (payoffs_.empty()) throw ValidationError("bandit needs at least one arm");
    for (const auto& p : payoffs_) {
      const auto idx = alphabet_.index_of({0, p});
      if (!idx) throw ValidationError("payoff " + p.str() + " is not a declared reward level");
      index_.push_back(*idx);
    }
  }

  const std::vector<Rational>& payoffs() const { return payoffs_; }
  std::string name() const override { return name_; }
  std::size_t num_actions() const override { return payoffs_.size(); }
  const PerceptAlphabet& alphabet() const override { return alphabet_; }
  bool compact_state() const override { return true; }
  std::int64_t time_signature(Time) const override { return 0; }
  EnvState initial_state() const override { return {}; }
  Distribution predict(const EnvState&, Time, Action a) const override {
    return point_mass(alphabet_.size(), index_.at(a.id));
  }
  EnvState advance(const EnvState& s, Time, Action, PerceptIndex) const override { return s; }
  std::optional<double> optimal_reward_sum(Time m) const override {
    return static_cast<double>(m) * std::max_element(payoffs_.begin(), payoffs_.end())->value();
  }

 private:
  std::string name_;
  std::vector<Rational> payoffs_;
  PerceptAlphabet alphabet_;
  std::vector<PerceptIndex> index_;
};

inline std::shared_ptr<const BernoulliBanditEnv> make_bernoulli_bandit(std::vector<double> means) {
  return std::make_shared<const BernoulliBanditEnv>(std::move(means));
}

/// Rational within 1e-9 of x, for turning configured reals into exact reward levels.
inline Rational to_rational(double x) {
  return Rational(static_cast<std::int64_t>(std::llround(x * 1e9)), 1'000'000'000);
}

/// n deterministic (n+1)-armed bandits under a uniform prior. Bandit i (1..n)
/// pays 1 - eps on the safe action 0, 1 on action i and 0 on the others.
inline ClassPtr make_discussion_bandit_class(std::size_t n, double eps) {
  if (n < 1) throw ValidationError("discussion bandit class needs n >= 1");
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("discussion bandit class needs 0 < eps < 1");
  const Rational safe = Rational(1) - to_rational(eps);
  const std::vector<Rational> levels{Rational(0), safe, Rational(1)};
  std::vector<EnvPtr> ms;
  for (std::size_t i = 1; i <= n; ++i) {
    std::vector<Rational> pay(n + 1, Rational(0));
    pay[0] = safe;
    pay[i] = Rational(1);
    ms.push_back(std::make_shared<const DeterministicBanditEnv>("discussion_bandit_" + std::to_string(i), pay, levels));
  }
  return EnvironmentClass::uniform("discussion_bandits_n" + std::to_string(n), std::move(ms));
}

/// Two actions: alpha (0) keeps reward 1, beta (1) moves irreversibly into an
/// absorbing zero-reward state.
inline std::shared_ptr<const FiniteAutomatonEnv> make_trap_env() {
  AutomatonSpec spec;
  spec.name = "trap";
  spec.num_actions = 2;
  spec.states = {"free", "trapped"};
  spec.observations = {0, 0};
  spec.reward_levels = {Rational(0), Rational(1)};
  spec.transitions = {
      {0, 0, 0, Rational(1)}, {0, 1, 1, Rational(0)},
      {1, 0, 1, Rational(0)}, {1, 1, 1, Rational(0)},
  };
  return make_finite_automaton(std::move(spec));
}

// ---------------------------------------------------------------------------
// random test environments

namespace detail {

inline Distribution hashed_distribution(std::uint64_t key, std::size_t n, double zero_prob) {
  RandomStream rng(key, StreamRole::test);
  Distribution p(n);
  double total = 0.0;
  for (auto& x : p) {
    x = rng.uniform() < zero_prob ? 0.0 : 0.05 + rng.uniform();
    total += x;
  }
  if (total == 0.0) {
    p[rng() % n] = 1.0;
    return p;
  }
  for (auto& x : p) x /= total;
  return p;
}

inline std::uint64_t history_hash(std::uint64_t seed, const History& h, std::uint64_t salt) {
  std::uint64_t k = derive_seed({seed, salt, h.size()});
  for (const auto& s : h) k = splitmix64(k ^ derive_seed({s.action.id, s.percept}));
  return k;
}

}  // namespace detail

/// Reward levels 0, 1/(n-1), ..., 1 with a single observation.
inline PerceptAlphabet uniform_reward_alphabet(std::size_t n) {
  std::vector<Rational> levels;
  for (std::size_t i = 0; i < n; ++i)
    levels.push_back(n == 1 ? Rational(0) : Rational(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
  return PerceptAlphabet::rewards_only(levels);
}

/// Fully history-dependent stochastic environment with pseudorandom conditionals.
class RandomHistoryEnvironment final : public HistoryEnvironment {
 public:
  RandomHistoryEnvironment(std::uint64_t seed, std::size_t actions, std::size_t percepts, double zero_prob = 0.0)
      : seed_(seed), actions_(actions), alphabet_(uniform_reward_alphabet(percepts)), zero_prob_(zero_prob) {}

  std::string name() const override { return "random_history{" + std::to_string(seed_) + "}"; }
  std::size_t num_actions() const override { return actions_; }
  const PerceptAlphabet& alphabet() const override { return alphabet_; }

 protected:
  Distribution distribution(const History& h, Action a) const override {
    return detail::hashed_distribution(detail::history_hash(seed_, h, 1000 + a.id), alphabet_.size(), zero_prob_);
  }

 private:
  std::uint64_t seed_;
  std::size_t actions_;
  PerceptAlphabet alphabet_;
  double zero_prob_;
};

/// Stochastic history-dependent policy with pseudorandom action probabilities.
class RandomHistoryPolicy final : public Policy {
 public:
  RandomHistoryPolicy(std::uint64_t seed, std::size_t actions, double zero_prob = 0.0)
      : seed_(seed), actions_(actions), zero_prob_(zero_prob) {}
  std::size_t num_actions() const override { return actions_; }
  Distribution action_distribution(const History& h) const override {
    return detail::hashed_distribution(detail::history_hash(seed_, h, 7), actions_, zero_prob_);
  }

 private:
  std::uint64_t seed_;
  std::size_t actions_;
  double zero_prob_;
};

/// Finite-state stochastic environment: each (state, action) has a random
/// joint distribution over (next state, reward level); the state is observed.
class RandomMdpEnvironment final : public Environment {
 public:
  RandomMdpEnvironment(std::uint64_t seed, std::size_t states, std::size_t actions, std::size_t reward_levels,
                       double zero_prob = 0.3)
      : seed_(seed), states_(states), actions_(actions), levels_(reward_levels) {
    if (states == 0 || actions == 0 || reward_levels == 0) throw ValidationError("random MDP needs positive sizes");
    std::vector<Percept> ps;
    const auto base = uniform_reward_alphabet(reward_levels);
    for (std::uint32_t s = 0; s < states; ++s)
      for (std::size_t r = 0; r < reward_levels; ++r) ps.push_back({s, base[static_cast<PerceptIndex>(r)].reward});
    alphabet_ = PerceptAlphabet(std::move(ps));
    for (std::size_t s = 0; s < states; ++s)
      for (std::size_t a = 0; a < actions; ++a)
        table_.push_back(detail::hashed_distribution(derive_seed({seed, s, a}), alphabet_.size(), zero_prob));
  }

  std::string name() const override { return "random_mdp{" + std::to_string(seed_) + "}"; }
  std::size_t num_actions() const override { return actions_; }
  const PerceptAlphabet& alphabet() const override { return alphabet_; }
  bool compact_state() const override { return true; }
  std::int64_t time_signature(Time) const override { return 0; }
  EnvState initial_state() const override { return {{0}}; }
  Distribution predict(const EnvState& s, Time, Action a) const override {
    return table_.at(static_cast<std::size_t>(s.words.at(0)) * actions_ + a.id);
  }
  EnvState advance(const EnvState&, Time, Action, PerceptIndex e) const override {
    return {{static_cast<std::int64_t>(e / levels_)}};
  }

 private:
  std::uint64_t seed_;
  std::size_t states_, actions_, levels_;
  PerceptAlphabet alphabet_;
  std::vector<Distribution> table_;
};

}  // namespace grl
