#pragma once

// Priors over countable environment classes, Bayesian mixtures, posterior
// updates and posterior sampling.
//
// A class is either finite or a lazily enumerated countable sequence with a
// certified prior tail bound. Beliefs keep an enumeration "front" of members
// whose likelihoods are tracked exactly; everything beyond the front is
// covered by the bound  tail posterior <= T_n / (F + T_n),  where T_n bounds the
// prior tail and F is the front's weighted likelihood (likelihoods are <= 1).

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <cstring>
#include <string>
#include <vector>

#include "grl/core.hpp"

namespace grl {

class EnvironmentClass {
 public:
  using Enumerator = std::function<EnvPtr(std::size_t)>;
  using PriorFn = std::function<double(std::size_t)>;

  /// Finite class; the prior is renormalized to sum to one.
  EnvironmentClass(std::string name, std::vector<EnvPtr> members, std::vector<double> prior)
      : name_(std::move(name)), cache_(std::make_shared<Cache>()) {
    if (members.empty()) throw ValidationError("environment class must be nonempty");
    if (members.size() != prior.size()) throw ValidationError("prior size does not match class size");
    double total = 0.0;
    for (double w : prior) {
      if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("prior weights must be positive");
      total += w;
    }
    size_ = members.size();
    prior_.reserve(prior.size());
    for (double w : prior) prior_.push_back(w / total);
    tail_.assign(size_ + 1, 0.0);
    for (std::size_t i = size_; i-- > 0;) tail_[i] = tail_[i + 1] + prior_[i];
    cache_->members = std::move(members);
    validate_member(*cache_->members.front(), *cache_->members.front());
    for (const auto& m : cache_->members) validate_member(*cache_->members.front(), *m);
  }

  /// Uniform prior over a finite list.
  static std::shared_ptr<const EnvironmentClass> uniform(std::string name, std::vector<EnvPtr> members) {
    std::vector<double> prior(members.size(), 1.0);
    return std::make_shared<const EnvironmentClass>(std::move(name), std::move(members), std::move(prior));
  }

  /// Countable class. `prior_tail(n)` must bound sum_{i >= n} prior(i) and the prior must sum to one.
  EnvironmentClass(std::string name, Enumerator enumerate, PriorFn prior, PriorFn prior_tail)
      : name_(std::move(name)),
        enumerate_(std::move(enumerate)),
        prior_fn_(std::move(prior)),
        tail_fn_(std::move(prior_tail)),
        cache_(std::make_shared<Cache>()) {
    if (!(tail_fn_(0) <= 1.0 + 1e-12)) throw ValidationError("prior tail bound at 0 exceeds one");
    validate_member(*member(0), *member(0));
  }

  const std::string& name() const { return name_; }
  bool finite() const { return size_ > 0; }
  /// Number of members for finite classes.
  std::optional<std::size_t> size() const { return finite() ? std::optional(size_) : std::nullopt; }
  /// Largest front any belief may use.
  std::size_t max_index() const { return finite() ? size_ : std::numeric_limits<std::size_t>::max(); }

  EnvPtr member(std::size_t i) const {
    if (finite()) return cache_->members.at(i);
    std::lock_guard lock(cache_->mutex);
    auto& ms = cache_->members;
    while (ms.size() <= i) {
      ms.push_back(enumerate_(ms.size()));
      if (!ms.empty() && ms.size() > 1) validate_member(*ms.front(), *ms.back());
    }
    return ms[i];
  }

  double prior(std::size_t i) const {
    if (finite()) return prior_.at(i);
    const double w = prior_fn_(i);
    if (!(w > 0.0)) throw ValidationError("countable prior must be positive at every index");
    return w;
  }

  /// Upper bound on sum_{i >= n} prior(i); exact for finite classes.
  double prior_tail_bound(std::size_t n) const {
    if (finite()) return n >= size_ ? 0.0 : tail_[n];
    return tail_fn_(n);
  }

  std::size_t num_actions() const { return member(0)->num_actions(); }
  const PerceptAlphabet& alphabet() const { return member(0)->alphabet(); }

 private:
  struct Cache {
    std::mutex mutex;
    std::vector<EnvPtr> members;
  };

  static void validate_member(const Environment& ref, const Environment& m) {
    if (m.num_actions() != ref.num_actions() || !(m.alphabet() == ref.alphabet()))
      throw ValidationError("class member '" + m.name() + "' has a different action or percept alphabet");
  }

  std::string name_;
  std::size_t size_ = 0;
  std::vector<double> prior_;
  std::vector<double> tail_;
  Enumerator enumerate_;
  PriorFn prior_fn_;
  PriorFn tail_fn_;
  std::shared_ptr<Cache> cache_;
};

using ClassPtr = std::shared_ptr<const EnvironmentClass>;

namespace detail {

inline double log_sum_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline std::int64_t double_bits(double x) {
  std::int64_t b;
  static_assert(sizeof b == sizeof x);
  std::memcpy(&b, &x, sizeof b);
  return b;
}

inline double bits_double(std::int64_t b) {
  double x;
  std::memcpy(&x, &b, sizeof x);
  return x;
}

}  // namespace detail

struct PosteriorSample {
  std::size_t index;
  EnvPtr environment;
};

/// Posterior over an environment class after a history. Immutable value:
/// update() and resolved() return new states.
class BeliefState {
 public:
  struct Options {
    /// Largest tolerated tail posterior bound for mixture predictions.
    double delta_mix = 1e-6;
    /// Largest tolerated tail posterior bound when sampling.
    double delta_sample = 1e-9;
    /// Front size a fresh belief starts with (clamped to the class size).
    std::size_t initial_front = 1;
    /// Hard cap on front growth for countable classes.
    std::size_t max_front = 1u << 16;
  };

  explicit BeliefState(ClassPtr cls) : BeliefState(std::move(cls), Options{}) {}
  BeliefState(ClassPtr cls, Options options) : cls_(std::move(cls)), options_(options) {
    if (!cls_) throw ValidationError("belief needs an environment class");
    const std::size_t n0 = cls_->finite() ? *cls_->size() : std::max<std::size_t>(1, options_.initial_front);
    extend_to(n0);
  }

  const EnvironmentClass& environment_class() const { return *cls_; }
  const ClassPtr& class_ptr() const { return cls_; }
  const Options& options() const { return options_; }
  const History& history() const { return history_; }
  Time time() const { return history_.time(); }

  std::size_t front_size() const { return states_.size(); }
  EnvPtr member(std::size_t i) const { return cls_->member(i); }
  const EnvState& member_state(std::size_t i) const { return states_.at(i); }
  /// log nu_i(e_{<t} | a_{<t}); -inf once nu_i is falsified.
  double log_likelihood(std::size_t i) const { return log_likelihoods_.at(i); }

  /// Upper bound on the posterior mass of all members beyond the front.
  double tail_mass_bound() const {
    const double tail = cls_->prior_tail_bound(front_size());
    if (tail == 0.0) return 0.0;
    const double front = std::exp(log_front_mass());
    return tail / (front + tail);
  }

  /// Posterior weight w(nu_i | h), computed as if the tail held its full bound.
  /// Exact for finite classes; a lower bound (off by at most the tail bound) otherwise.
  double posterior(std::size_t i) const {
    const double lw = log_weight(i);
    if (lw == -std::numeric_limits<double>::infinity()) return 0.0;
    return std::exp(lw - log_normalizer());
  }

  /// Posterior restricted to the front and renormalized there.
  std::vector<double> front_posterior() const {
    std::vector<double> lw(front_size());
    for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = log_weight(i);
    const double z = detail::log_sum_exp(lw);
    std::vector<double> p(lw.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(lw[i] - z);
    return p;
  }

  /// w(S | h) = sum over S of posterior weights.
  double posterior_mass(std::span<const std::size_t> indices) const {
    double s = 0.0;
    for (auto i : indices) {
      if (i >= front_size()) throw ValidationError("posterior_mass index outside the resolved front");
      s += posterior(i);
    }
    return s;
  }

  /// A copy whose front covers at least n members (clamped to the class size).
  BeliefState extended_to(std::size_t n) const {
    BeliefState b = *this;
    b.extend_to(n);
    return b;
  }

  /// A copy whose tail posterior bound is below delta.
  BeliefState resolved(double delta) const {
    BeliefState b = *this;
    while (b.tail_mass_bound() >= delta && b.tail_mass_bound() > 0.0) {
      if (b.front_size() >= std::min(cls_->max_index(), options_.max_front))
        throw TailNotResolved("cannot resolve class '" + cls_->name() + "' to tail bound " + std::to_string(delta) +
                              " within " + std::to_string(b.front_size()) + " members");
      b.extend_to(std::max<std::size_t>(b.front_size() + 1, b.front_size() * 3 / 2));
    }
    return b;
  }

  /// xi(e | h a) over the front, renormalized; additive error at most the tail bound.
  Distribution mixture_predict(Action a) const {
    if (tail_mass_bound() > options_.delta_mix) return resolved(options_.delta_mix).mixture_predict(a);
    const auto w = front_posterior();
    Distribution out(cls_->alphabet().size(), 0.0);
    const Time t = time();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] == 0.0) continue;
      const auto p = member(i)->predict(states_[i], t, a);
      for (std::size_t e = 0; e < out.size(); ++e) out[e] += w[i] * p[e];
    }
    double total = 0.0;
    for (double x : out) total += x;
    for (double& x : out) x /= total;
    return out;
  }

  /// Posterior after observing percept e for action a.
  BeliefState update(Action a, PerceptIndex e) const {
    BeliefState b = *this;
    const Time t = time();
    bool any = false;
    for (std::size_t i = 0; i < b.states_.size(); ++i) {
      const auto env = member(i);
      if (b.log_likelihoods_[i] != -std::numeric_limits<double>::infinity()) {
        const double p = env->predict(b.states_[i], t, a).at(e);
        b.log_likelihoods_[i] += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
      }
      b.states_[i] = env->advance(b.states_[i], t, a, e);
      any = any || b.log_likelihoods_[i] != -std::numeric_limits<double>::infinity();
    }
    b.history_.push(a, e);
    while (!any) {
      // The front is falsified; a consistent member may still lie in the tail.
      if (cls_->prior_tail_bound(b.front_size()) == 0.0 ||
          b.front_size() >= std::min(cls_->max_index(), options_.max_front))
        throw ZeroLikelihood("every environment in class '" + cls_->name() +
                             "' assigns probability 0 to the observed percept at t=" + std::to_string(t));
      const std::size_t old = b.front_size();
      b.extend_to(old * 2);
      for (std::size_t i = old; i < b.front_size(); ++i)
        any = any || b.log_likelihoods_[i] != -std::numeric_limits<double>::infinity();
    }
    return b;
  }

  /// Exact inverse-CDF draw from the posterior after resolving the tail below delta_sample.
  PosteriorSample sample_posterior(RandomStream& rng) const {
    const BeliefState b = resolved(options_.delta_sample);
    const auto w = b.front_posterior();
    const std::size_t i = rng.categorical(w);
    return {i, b.member(i)};
  }

 private:
  double log_weight(std::size_t i) const { return std::log(cls_->prior(i)) + log_likelihoods_[i]; }

  double log_front_mass() const {
    std::vector<double> lw(front_size());
    for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = log_weight(i);
    return detail::log_sum_exp(lw);
  }

  double log_normalizer() const {
    const double tail = cls_->prior_tail_bound(front_size());
    const double lf = log_front_mass();
    if (tail == 0.0) return lf;
    return std::log(std::exp(lf) + tail);
  }

  void extend_to(std::size_t n) {
    n = std::min(n, cls_->max_index());
    while (states_.size() < n) {
      const std::size_t i = states_.size();
      const auto env = cls_->member(i);
      EnvState s = env->initial_state();
      double ll = 0.0;
      Time t = 1;
      for (const auto& step : history_) {
        if (ll != -std::numeric_limits<double>::infinity()) {
          const double p = env->predict(s, t, step.action).at(step.percept);
          ll += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
        }
        s = env->advance(s, t, step.action, step.percept);
        ++t;
      }
      states_.push_back(std::move(s));
      log_likelihoods_.push_back(ll);
    }
  }

  ClassPtr cls_;
  Options options_;
  History history_;
  std::vector<EnvState> states_;
  std::vector<double> log_likelihoods_;
};

/// Bayesian mixture xi = sum_i w_i nu_i over a finite list of members, as an
/// environment. Its state carries every member's state and log-likelihood,
/// i.e. its own posterior, so it can be planned in and can itself be a class
/// member.
class MixtureEnvironment final : public Environment {
 public:
  MixtureEnvironment(std::string name, std::vector<EnvPtr> members, std::vector<double> prior)
      : name_(std::move(name)), members_(std::move(members)) {
    if (members_.empty() || members_.size() != prior.size()) throw ValidationError("invalid mixture members / prior");
    double total = 0.0;
    for (double w : prior) {
      if (!(w > 0.0)) throw ValidationError("mixture weights must be positive");
      total += w;
    }
    for (double w : prior) log_prior_.push_back(std::log(w / total));
    for (const auto& m : members_)
      if (m->num_actions() != members_[0]->num_actions() || !(m->alphabet() == members_[0]->alphabet()))
        throw ValidationError("mixture members disagree on alphabets");
  }

  /// Mixture over a belief's resolved front with the class prior (renormalized over the front).
  static std::shared_ptr<const MixtureEnvironment> of_front(const BeliefState& b) {
    std::vector<EnvPtr> ms;
    std::vector<double> w;
    for (std::size_t i = 0; i < b.front_size(); ++i) {
      ms.push_back(b.member(i));
      w.push_back(b.environment_class().prior(i));
    }
    return std::make_shared<const MixtureEnvironment>("xi[" + b.environment_class().name() + "]", std::move(ms),
                                                      std::move(w));
  }

  /// The mixture state matching a belief over the same front.
  EnvState state_of(const BeliefState& b) const {
    if (b.front_size() != members_.size()) throw ValidationError("belief front does not match mixture members");
    std::vector<EnvState> states;
    std::vector<double> ll;
    for (std::size_t i = 0; i < members_.size(); ++i) {
      states.push_back(b.member_state(i));
      ll.push_back(b.log_likelihood(i));
    }
    return encode(states, ll);
  }

  std::string name() const override { return name_; }
  std::size_t num_actions() const override { return members_[0]->num_actions(); }
  const PerceptAlphabet& alphabet() const override { return members_[0]->alphabet(); }
  std::size_t size() const { return members_.size(); }
  const std::vector<EnvPtr>& members() const { return members_; }

  bool compact_state() const override {
    for (const auto& m : members_)
      if (!m->compact_state()) return false;
    return true;
  }

  EnvState initial_state() const override {
    std::vector<EnvState> states;
    for (const auto& m : members_) states.push_back(m->initial_state());
    return encode(states, std::vector<double>(members_.size(), 0.0));
  }

  Distribution predict(const EnvState& s, Time t, Action a) const override {
    auto [states, ll] = decode(s);
    const auto w = weights(ll);
    Distribution out(alphabet().size(), 0.0);
    for (std::size_t i = 0; i < members_.size(); ++i) {
      if (w[i] == 0.0) continue;
      const auto p = members_[i]->predict(states[i], t, a);
      for (std::size_t e = 0; e < out.size(); ++e) out[e] += w[i] * p[e];
    }
    double total = 0.0;
    for (double x : out) total += x;
    if (total > 0.0)
      for (double& x : out) x /= total;
    return out;
  }

  EnvState advance(const EnvState& s, Time t, Action a, PerceptIndex e) const override {
    auto [states, ll] = decode(s);
    for (std::size_t i = 0; i < members_.size(); ++i) {
      if (ll[i] != -std::numeric_limits<double>::infinity()) {
        const double p = members_[i]->predict(states[i], t, a).at(e);
        ll[i] += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
      }
      states[i] = members_[i]->advance(states[i], t, a, e);
    }
    return encode(states, ll);
  }

  /// Posterior weights of the members in state s.
  std::vector<double> posterior(const EnvState& s) const { return weights(decode(s).second); }

 private:
  std::vector<double> weights(const std::vector<double>& ll) const {
    std::vector<double> lw(ll.size());
    for (std::size_t i = 0; i < ll.size(); ++i) lw[i] = log_prior_[i] + ll[i];
    const double z = detail::log_sum_exp(lw);
    std::vector<double> w(lw.size(), 0.0);
    if (z == -std::numeric_limits<double>::infinity()) return w;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(lw[i] - z);
    return w;
  }

  static EnvState encode(const std::vector<EnvState>& states, const std::vector<double>& ll) {
    EnvState s;
    for (const auto& st : states) {
      s.words.push_back(static_cast<std::int64_t>(st.words.size()));
      s.words.insert(s.words.end(), st.words.begin(), st.words.end());
    }
    for (double x : ll) s.words.push_back(detail::double_bits(x));
    return s;
  }

  std::pair<std::vector<EnvState>, std::vector<double>> decode(const EnvState& s) const {
    std::vector<EnvState> states(members_.size());
    std::size_t pos = 0;
    for (auto& st : states) {
      const auto n = static_cast<std::size_t>(s.words.at(pos++));
      st.words.assign(s.words.begin() + static_cast<std::ptrdiff_t>(pos),
                      s.words.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
    }
    std::vector<double> ll(members_.size());
    for (auto& x : ll) x = detail::bits_double(s.words.at(pos++));
    return {std::move(states), std::move(ll)};
  }

  std::string name_;
  std::vector<EnvPtr> members_;
  std::vector<double> log_prior_;
};

/// Finite class extended by its own Bayesian mixture as an extra member with
/// prior `mixture_weight`; the remaining members share 1 - mixture_weight in
/// their original proportions.
inline ClassPtr with_mixture_member(const EnvironmentClass& base, double mixture_weight) {
  if (!base.finite()) throw ValidationError("mixture member needs a finite base class");
  if (!(mixture_weight > 0.0 && mixture_weight < 1.0)) throw ValidationError("mixture weight must lie in (0,1)");
  std::vector<EnvPtr> ms;
  std::vector<double> w;
  for (std::size_t i = 0; i < *base.size(); ++i) {
    ms.push_back(base.member(i));
    w.push_back(base.prior(i) * (1.0 - mixture_weight));
  }
  auto xi = std::make_shared<const MixtureEnvironment>("xi[" + base.name() + "]", ms, std::vector<double>(w));
  ms.push_back(xi);
  w.push_back(mixture_weight);
  return std::make_shared<const EnvironmentClass>(base.name() + "+xi", std::move(ms), std::move(w));
}

}  // namespace grl
