#pragma once

// Experiment runner: JSON configuration, constructor registries, seeded
// simulation across a worker pool, metric aggregation, and CSV + sidecar output.
//
// Output is a pure function of (config, base seed): every seed owns its random
// streams, seeds are merged in seed order, and numbers are printed with 17
// significant digits.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "grl/agents.hpp"
#include "grl/bayes.hpp"
#include "grl/core.hpp"
#include "grl/discount.hpp"
#include "grl/envs.hpp"
#include "grl/metrics.hpp"
#include "grl/planner.hpp"

namespace grl::harness {

using nlohmann::json;

inline constexpr const char* version = "0.1.0";

// ---------------------------------------------------------------------------
// json helpers

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  return j.at(key);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return require(j, key, where).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": bad value for '" + key + "': " + e.what());
  }
}

/// Accepts either "name" or {"type": "name", ...}.
inline std::string type_of(const json& spec, const std::string& where) {
  if (spec.is_string()) return spec.get<std::string>();
  if (spec.is_object() && spec.contains("type") && spec.at("type").is_string()) return spec.at("type").get<std::string>();
  throw ValidationError(where + ": expected a name or an object with a 'type'");
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

/// FNV-1a 64 over the canonical dump, as 16 hex digits.
inline std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// registries

template <class Built>
struct Entry {
  std::string params;
  std::string description;
  std::function<Built(const json&)> build;
};

template <class Built>
using Registry = std::map<std::string, Entry<Built>>;

inline const Registry<DiscountPtr>& discount_registry() {
  static const Registry<DiscountPtr> r{
      {"geometric", {"gamma", "gamma_t = gamma^t", [](const json& j) {
         const double g = detail::get<double>(j, "gamma", "geometric discount");
         return geometric(g);
       }}},
      {"sqrt_exp", {"", "gamma_t = exp(-sqrt t) / sqrt t", [](const json&) { return sqrt_exp(); }}},
      {"table", {"values, tail_bound", "explicit gamma_1..gamma_n plus declared tail mass", [](const json& j) -> DiscountPtr {
         return std::make_shared<TableDiscount>(detail::get<std::vector<double>>(j, "values", "table discount"),
                                                detail::get_or<double>(j, "tail_bound", 0.0));
       }}},
  };
  return r;
}

inline DiscountPtr make_discount(const json& spec) {
  const auto type = detail::type_of(spec, "discount");
  const auto& reg = discount_registry();
  auto it = reg.find(type);
  if (it == reg.end()) throw ValidationError("unknown discount '" + type + "'");
  return it->second.build(spec.is_object() ? spec : json::object());
}

inline EpsilonSchedule make_epsilon(const json& spec) {
  if (spec.is_null()) return EpsilonSchedule::standard();
  if (spec.is_number()) return EpsilonSchedule::constant(spec.get<double>());
  const auto type = detail::type_of(spec, "eps");
  if (type == "default") return EpsilonSchedule::standard();
  if (type == "constant") return EpsilonSchedule::constant(detail::get<double>(spec, "value", "constant eps"));
  if (type == "power")
    return EpsilonSchedule::power(detail::get<double>(spec, "scale", "power eps"),
                                  detail::get<double>(spec, "exponent", "power eps"),
                                  detail::get_or<double>(spec, "cap", 0.5));
  throw ValidationError("unknown eps schedule '" + type + "'");
}

inline EnvPtr make_environment(const json& spec);

inline const Registry<EnvPtr>& environment_registry() {
  static const Registry<EnvPtr> r{
      {"example1", {"k (0 = nu_inf)", "Example-1 automaton nu_k", [](const json& j) -> EnvPtr {
         return make_example1_env(detail::get_or<Time>(j, "k", 0));
       }}},
      {"bernoulli_bandit", {"means", "Bernoulli bandit", [](const json& j) -> EnvPtr {
         return make_bernoulli_bandit(detail::get<std::vector<double>>(j, "means", "bernoulli_bandit"));
       }}},
      {"trap", {"", "alpha keeps reward 1, beta traps forever", [](const json&) -> EnvPtr { return make_trap_env(); }}},
      {"discussion_bandit", {"n, eps, index", "member `index` (0-based) of the discussion bandit class",
                             [](const json& j) -> EnvPtr {
                               const auto n = detail::get<std::size_t>(j, "n", "discussion_bandit");
                               const auto i = detail::get<std::size_t>(j, "index", "discussion_bandit");
                               if (i >= n) throw ValidationError("discussion_bandit: index out of range");
                               return make_discussion_bandit_class(n, detail::get<double>(j, "eps", "discussion_bandit"))
                                   ->member(i);
                             }}},
      {"automaton", {"file | spec", "finite automaton from a JSON spec file or inline spec", [](const json& j) -> EnvPtr {
         if (j.contains("file")) return load_automaton(j.at("file").get<std::string>());
         try {
           return make_finite_automaton(automaton_from_json(detail::require(j, "spec", "automaton")));
         } catch (const json::exception& e) {
           throw ValidationError(std::string("automaton spec: ") + e.what());
         }
       }}},
      {"random_mdp", {"seed, states, actions, levels", "pseudorandom finite-state environment", [](const json& j) -> EnvPtr {
         return std::make_shared<RandomMdpEnvironment>(
             detail::get_or<std::uint64_t>(j, "seed", 0), detail::get_or<std::size_t>(j, "states", 3),
             detail::get_or<std::size_t>(j, "actions", 2), detail::get_or<std::size_t>(j, "levels", 3));
       }}},
  };
  return r;
}

inline EnvPtr make_environment(const json& spec) {
  const auto type = detail::type_of(spec, "environment");
  const auto& reg = environment_registry();
  auto it = reg.find(type);
  if (it == reg.end()) throw ValidationError("unknown environment '" + type + "'");
  return it->second.build(spec.is_object() ? spec : json::object());
}

inline const Registry<ClassPtr>& class_registry() {
  static const Registry<ClassPtr> r{
      {"example1", {"K, countable", "{nu_inf, nu_1..nu_K} or the countable class", [](const json& j) {
         return make_example1_class(detail::get_or<Time>(j, "K", 10), detail::get_or<bool>(j, "countable", false));
       }}},
      {"discussion_bandits", {"n, eps", "n deterministic bandits sharing a safe arm", [](const json& j) {
         return make_discussion_bandit_class(detail::get<std::size_t>(j, "n", "discussion_bandits"),
                                             detail::get<double>(j, "eps", "discussion_bandits"));
       }}},
      {"finite", {"members, prior", "explicit list of environment specs with prior weights", [](const json& j) {
         std::vector<EnvPtr> ms;
         for (const auto& m : detail::require(j, "members", "finite class")) ms.push_back(make_environment(m));
         auto w = detail::get_or<std::vector<double>>(j, "prior", std::vector<double>(ms.size(), 1.0));
         return std::make_shared<const EnvironmentClass>(detail::get_or<std::string>(j, "name", "finite"),
                                                         std::move(ms), std::move(w));
       }}},
  };
  return r;
}

inline ClassPtr make_class(const json& spec) {
  const auto type = detail::type_of(spec, "class");
  const auto& reg = class_registry();
  auto it = reg.find(type);
  if (it == reg.end()) throw ValidationError("unknown class '" + type + "'");
  const json params = spec.is_object() ? spec : json::object();
  auto cls = it->second.build(params);
  if (params.contains("with_mixture")) cls = with_mixture_member(*cls, params.at("with_mixture").get<double>());
  return cls;
}

/// What an agent constructor may draw on.
struct AgentContext {
  ClassPtr cls;
  EnvPtr truth;
  DiscountPtr discount;
  std::size_t node_budget = default_node_budget();
};

using AgentBuilder = std::function<AgentFactory(const json&, const AgentContext&)>;

inline ClassPtr need_class(const AgentContext& ctx, const char* agent) {
  if (!ctx.cls) throw ValidationError(std::string("agent '") + agent + "' needs a 'class'");
  return ctx.cls;
}

inline SchedulePolicy::Schedule make_schedule(const json& j) {
  const auto kind = detail::get_or<std::string>(j, "schedule", "list");
  if (kind == "powers_of_two")
    return ScheduledAgent::powers_of_two(Action(detail::get<std::uint32_t>(j, "rare", "scheduled agent")),
                                         Action(detail::get<std::uint32_t>(j, "usual", "scheduled agent")));
  if (kind == "constant") {
    const Action a(detail::get<std::uint32_t>(j, "action", "scheduled agent"));
    return [a](Time) { return a; };
  }
  if (kind == "list") {
    auto list = detail::get<std::vector<std::uint32_t>>(j, "actions", "scheduled agent");
    const Action fallback(detail::get_or<std::uint32_t>(j, "default", 0));
    return [list, fallback](Time t) {
      return t <= static_cast<Time>(list.size()) ? Action(list[static_cast<std::size_t>(t - 1)]) : fallback;
    };
  }
  throw ValidationError("unknown schedule '" + kind + "'");
}

inline BeliefState::Options belief_options(const json& j) {
  BeliefState::Options o;
  o.delta_mix = detail::get_or<double>(j, "delta_mix", o.delta_mix);
  o.delta_sample = detail::get_or<double>(j, "delta_sample", o.delta_sample);
  return o;
}

inline const Registry<AgentBuilder>& agent_registry() {
  static const Registry<AgentBuilder> r{
      {"thompson", {"eps, delta_sample", "Thompson sampling with effective-horizon blocks",
                    [](const json& j) -> AgentBuilder {
                      return [j](const json&, const AgentContext& ctx) -> AgentFactory {
                        auto cls = need_class(ctx, "thompson");
                        auto eps = make_epsilon(j.value("eps", json()));
                        auto opt = belief_options(j);
                        return [=](RandomStream rng) {
                          return std::make_unique<ThompsonAgent>(cls, ctx.discount, eps, rng, opt, ctx.node_budget);
                        };
                      };
                    }}},
      {"bayes", {"eps, delta_mix", "Bayes-optimal agent planning in the posterior mixture",
                 [](const json& j) -> AgentBuilder {
                   return [j](const json&, const AgentContext& ctx) -> AgentFactory {
                     auto cls = need_class(ctx, "bayes");
                     auto eps = make_epsilon(j.value("eps", json()));
                     auto opt = belief_options(j);
                     return [=](RandomStream) {
                       return std::make_unique<BayesAgent>(cls, ctx.discount, eps, opt, ctx.node_budget);
                     };
                   };
                 }}},
      {"informed", {"eps", "truncated optimal policy of the true environment", [](const json& j) -> AgentBuilder {
         return [j](const json&, const AgentContext& ctx) -> AgentFactory {
           auto eps = make_epsilon(j.value("eps", json()));
           return [=](RandomStream) { return std::make_unique<InformedAgent>(ctx.truth, ctx.discount, eps, ctx.node_budget); };
         };
       }}},
      {"random", {"", "uniformly random actions", [](const json&) -> AgentBuilder {
         return [](const json&, const AgentContext& ctx) -> AgentFactory {
           const auto n = ctx.truth->num_actions();
           return [n](RandomStream rng) { return std::make_unique<RandomAgent>(n, rng); };
         };
       }}},
      {"scheduled", {"schedule (powers_of_two: rare, usual | constant: action | list: actions, default)",
                     "declared time-indexed action schedule", [](const json& j) -> AgentBuilder {
                       return [j](const json&, const AgentContext& ctx) -> AgentFactory {
                         auto schedule = make_schedule(j);
                         const auto n = ctx.truth->num_actions();
                         const auto name = "scheduled{" + detail::get_or<std::string>(j, "schedule", "list") + "}";
                         return [=](RandomStream) { return std::make_unique<ScheduledAgent>(name, n, schedule); };
                       };
                     }}},
  };
  return r;
}

inline AgentFactory make_agent_factory(const json& spec, const AgentContext& ctx) {
  const auto type = detail::type_of(spec, "agent");
  const auto& reg = agent_registry();
  auto it = reg.find(type);
  if (it == reg.end()) throw ValidationError("unknown agent '" + type + "'");
  const json params = spec.is_object() ? spec : json::object();
  return it->second.build(params)(params, ctx);
}

// ---------------------------------------------------------------------------
// configuration

/// Metrics averaged over seeds (reported with a confidence interval).
inline const std::set<std::string>& seed_metrics() {
  static const std::set<std::string> s{"regret", "regret_rate", "value_gap", "bayes_tv", "posterior_truth"};
  return s;
}
/// Metrics computed exactly once per run (empty confidence interval).
inline const std::set<std::string>& exact_metrics() {
  static const std::set<std::string> s{"exact_regret", "exact_value_gap", "recoverability"};
  return s;
}

struct ExperimentConfig {
  json resolved;
  std::string name;
  std::vector<Time> checkpoints;
  std::size_t n_seeds = 0;
  std::uint64_t base_seed = 0;
  std::vector<std::string> metrics;
  double eval_eps = 0.01;
  std::size_t node_budget = default_node_budget();
  std::size_t workers = 1;
  bool per_seed = false;

  DiscountPtr discount;
  ClassPtr cls;
  /// Fixed truth, or null when the truth is drawn from the prior per seed.
  EnvPtr truth;
  std::optional<std::size_t> truth_member;
  bool truth_from_prior = false;
  json agent_spec;
};

/// Validates and resolves a configuration. Throws ValidationError.
inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  ExperimentConfig c;
  c.resolved = j;
  c.name = detail::get_or<std::string>(j, "name", "experiment");
  if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos)
    throw ValidationError("config name must be a nonempty file stem");
  c.checkpoints = detail::get<std::vector<Time>>(j, "checkpoints", "config");
  if (c.checkpoints.empty()) throw ValidationError("config: checkpoints must be nonempty");
  for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
    if (c.checkpoints[i] < 1) throw ValidationError("config: checkpoints must be >= 1");
    if (i && c.checkpoints[i] <= c.checkpoints[i - 1]) throw ValidationError("config: checkpoints must strictly increase");
  }
  c.n_seeds = detail::get<std::size_t>(j, "n_seeds", "config");
  if (c.n_seeds < 1) throw ValidationError("config: n_seeds must be >= 1");
  c.base_seed = detail::get_or<std::uint64_t>(j, "base_seed", 0);
  c.metrics = detail::get<std::vector<std::string>>(j, "metrics", "config");
  if (c.metrics.empty()) throw ValidationError("config: metrics must be nonempty");
  std::set<std::string> seen;
  bool any_seed_metric = false;
  for (const auto& m : c.metrics) {
    if (!seed_metrics().count(m) && !exact_metrics().count(m)) throw ValidationError("config: unknown metric '" + m + "'");
    if (!seen.insert(m).second) throw ValidationError("config: metric '" + m + "' listed twice");
    any_seed_metric = any_seed_metric || seed_metrics().count(m);
  }
  if (any_seed_metric && c.n_seeds < 2)
    throw ValidationError("config: Monte-Carlo metrics need n_seeds >= 2 for a confidence interval");
  c.eval_eps = detail::get_or<double>(j, "eval_eps", 0.01);
  if (!(c.eval_eps > 0.0 && c.eval_eps < 1.0)) throw ValidationError("config: eval_eps must lie in (0,1)");
  c.node_budget = detail::get_or<std::size_t>(j, "node_budget", default_node_budget());
  c.workers = std::max<std::size_t>(1, detail::get_or<std::size_t>(j, "workers", 1));
  c.per_seed = detail::get_or<bool>(j, "per_seed", false);

  c.discount = make_discount(detail::require(j, "discount", "config"));
  if (j.contains("class")) c.cls = make_class(j.at("class"));
  if (j.contains("environment")) {
    c.truth = make_environment(j.at("environment"));
  } else if (j.contains("truth")) {
    if (!c.cls) throw ValidationError("config: 'truth' refers to a class member but no 'class' is given");
    const auto& t = j.at("truth");
    if (t.is_object() && t.contains("member")) {
      const auto i = t.at("member").get<std::size_t>();
      if (c.cls->finite() && i >= *c.cls->size()) throw ValidationError("config: truth member out of range");
      c.truth = c.cls->member(i);
      c.truth_member = i;
    } else if (detail::get_or<std::string>(t, "draw", "") == "prior") {
      if (!c.cls->finite()) throw ValidationError("config: drawing the truth needs a finite class");
      c.truth_from_prior = true;
    } else {
      throw ValidationError("config: truth must be {\"member\": i} or {\"draw\": \"prior\"}");
    }
  } else {
    throw ValidationError("config: give an 'environment' or a class 'truth'");
  }
  c.agent_spec = detail::require(j, "agent", "config");
  const auto agent_type = detail::type_of(c.agent_spec, "agent");
  if (!agent_registry().count(agent_type)) throw ValidationError("unknown agent '" + agent_type + "'");

  for (const auto& m : c.metrics) {
    if (exact_metrics().count(m) && !c.truth) throw ValidationError("metric '" + m + "' needs a fixed truth");
    if ((m == "exact_regret" || m == "exact_value_gap") && agent_type != "scheduled" && agent_type != "random")
      throw ValidationError("metric '" + m + "' needs a fixed-policy agent (scheduled or random)");
    if (m == "posterior_truth" && !c.truth_member && !c.truth_from_prior)
      throw ValidationError("metric 'posterior_truth' needs the truth to be a class member");
    if (m == "bayes_tv" && agent_type != "thompson" && agent_type != "bayes")
      throw ValidationError("metric 'bayes_tv' needs an agent with a belief (thompson or bayes)");
  }
  // Building one factory surfaces agent parameter errors before any simulation.
  if (c.truth) make_agent_factory(c.agent_spec, {c.cls, c.truth, c.discount, c.node_budget});
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse config '" + path.string() + "': " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// running

struct SeedResult {
  /// values[metric index][checkpoint index]; only seed metrics are filled.
  std::vector<std::vector<double>> values;
  std::size_t truth_member = 0;
  std::vector<BlockRecord> blocks;
};

struct RunRecord {
  std::string name;
  std::string hash;
  json config;
  std::vector<MetricSeries> series;
  std::vector<SeedResult> seeds;
  double wall_seconds = 0.0;
  std::size_t workers = 1;
};

namespace detail {

/// Re-raises the active exception with the failing seed and time prepended, keeping its type.
[[noreturn]] inline void rethrow_located(std::size_t seed, Time t) {
  const std::string where = "seed " + std::to_string(seed) + ", t=" + std::to_string(t) + ": ";
  try {
    throw;
  } catch (const BudgetExceeded& e) {
    throw BudgetExceeded(where + e.what());
  } catch (const TailNotResolved& e) {
    throw TailNotResolved(where + e.what());
  } catch (const ZeroLikelihood& e) {
    throw ZeroLikelihood(where + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  } catch (const DomainError& e) {
    throw DomainError(where + e.what());
  } catch (const std::exception& e) {
    throw Error(where + e.what());
  }
}

inline SeedResult run_seed(const ExperimentConfig& c, std::size_t seed) {
  SeedResult out;
  EnvPtr truth = c.truth;
  if (c.truth_from_prior) {
    RandomStream pick(c.base_seed, seed, StreamRole::truth);
    std::vector<double> w;
    for (std::size_t i = 0; i < *c.cls->size(); ++i) w.push_back(c.cls->prior(i));
    out.truth_member = pick.categorical(w);
    truth = c.cls->member(out.truth_member);
  } else if (c.truth_member) {
    out.truth_member = *c.truth_member;
  }
  const auto factory = make_agent_factory(c.agent_spec, {c.cls, truth, c.discount, c.node_budget});
  auto sim = make_simulation(truth, factory, c.base_seed, seed);
  const auto& d = *c.discount;

  const std::size_t nm = c.metrics.size(), nc = c.checkpoints.size();
  out.values.assign(nm, std::vector<double>(nc, 0.0));
  std::vector<Time> horizon(nc);
  Time last = c.checkpoints.back();
  for (std::size_t k = 0; k < nc; ++k) {
    horizon[k] = evaluation_horizon(d, c.checkpoints[k], c.eval_eps);
    for (const auto& m : c.metrics)
      if (m == "value_gap") last = std::max(last, horizon[k]);
  }

  Time now = 1;
  try {
    for (std::size_t k = 0; k < nc; ++k) {
      now = c.checkpoints[k];
      sim.run_until(now);
      for (std::size_t i = 0; i < nm; ++i) {
        const auto& m = c.metrics[i];
        if (m == "value_gap") {
          PlanOptions opt;
          opt.node_budget = c.node_budget;
          out.values[i][k] = plan_from(*truth, d, sim.truth_state(), now, horizon[k], opt).root_value;
        } else if (m == "bayes_tv") {
          out.values[i][k] = agent_bayes_expected_tv(sim.agent(), sim.history(), horizon[k], c.node_budget);
        } else if (m == "posterior_truth") {
          const auto* b = sim.agent().belief();
          if (!b) throw ValidationError("posterior_truth needs an agent with a belief");
          const auto resolved = b->resolved(b->options().delta_mix);
          out.values[i][k] = out.truth_member < resolved.front_size() ? resolved.posterior(out.truth_member) : 0.0;
        }
      }
    }
    now = last + 1;
    sim.run_until(now);
  } catch (...) {
    rethrow_located(seed, std::max<Time>(1, std::min(now, sim.time())));
  }
  for (std::size_t k = 0; k < nc; ++k) {
    const Time t = c.checkpoints[k];
    for (std::size_t i = 0; i < nm; ++i) {
      const auto& m = c.metrics[i];
      if (m == "value_gap") {
        out.values[i][k] -= normalized_return(d, sim.rewards(), t, horizon[k]);
      } else if (m == "regret" || m == "regret_rate") {
        const double r = optimal_reward_sum(*truth, t, c.node_budget) - sim.reward_sum(t);
        out.values[i][k] = m == "regret" ? r : r / static_cast<double>(t);
      }
    }
  }
  if (const auto* ts = dynamic_cast<const ThompsonAgent*>(&sim.agent())) out.blocks = ts->blocks();
  return out;
}

inline double exact_metric(const ExperimentConfig& c, const std::string& m, Time t) {
  const auto& env = *c.truth;
  const auto& d = *c.discount;
  const Time horizon = evaluation_horizon(d, t, c.eval_eps);
  if (m == "recoverability") return recoverability_gap(env, d, t, horizon, c.node_budget);
  const auto agent = make_agent_factory(c.agent_spec, {c.cls, c.truth, c.discount, c.node_budget})(
      RandomStream(c.base_seed, 0, StreamRole::agent));
  const auto policy = agent->fixed_policy();
  if (m == "exact_regret") return exact_regret(env, *policy, t, c.node_budget);
  return exact_expected_value_gap(env, *policy, d, t, horizon, c.node_budget);
}

}  // namespace detail

/// Simulates all seeds (in parallel over `workers` threads) and aggregates.
inline RunRecord run(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.name = c.name;
  rec.config = c.resolved;
  rec.hash = config_hash(c.resolved);
  rec.workers = c.workers;

  bool need_seeds = false;
  for (const auto& m : c.metrics) need_seeds = need_seeds || seed_metrics().count(m);
  if (need_seeds) {
    rec.seeds.resize(c.n_seeds);
    std::vector<std::exception_ptr> errors(c.n_seeds);
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
      for (std::size_t s; (s = next.fetch_add(1)) < c.n_seeds;) {
        try {
          rec.seeds[s] = detail::run_seed(c, s);
        } catch (...) {
          errors[s] = std::current_exception();
        }
      }
    };
    const std::size_t nw = std::min(c.workers, c.n_seeds);
    if (nw <= 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(work);
      for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  for (std::size_t i = 0; i < c.metrics.size(); ++i) {
    const auto& m = c.metrics[i];
    MetricSeries series(m);
    for (std::size_t k = 0; k < c.checkpoints.size(); ++k) {
      const Time t = c.checkpoints[k];
      if (seed_metrics().count(m)) {
        std::vector<double> xs;
        xs.reserve(rec.seeds.size());
        for (const auto& s : rec.seeds) xs.push_back(s.values[i][k]);
        series.add(t, monte_carlo_estimate(xs));
      } else {
        try {
          series.add(t, exact_estimate(detail::exact_metric(c, m, t)));
        } catch (...) {
          detail::rethrow_located(0, t);
        }
      }
    }
    rec.series.push_back(std::move(series));
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

// ---------------------------------------------------------------------------
// output

inline constexpr const char* csv_header = "metric,t,mean,ci_halfwidth,n_seeds";

/// Aggregate CSV: one row per (metric, checkpoint), metrics in config order.
inline std::string to_csv(const RunRecord& rec) {
  std::ostringstream os;
  os << csv_header << "\n";
  for (const auto& s : rec.series)
    for (const auto& p : s.points())
      os << s.name() << "," << p.t << "," << detail::format_double(p.value.mean) << ","
         << (p.value.ci_halfwidth ? detail::format_double(*p.value.ci_halfwidth) : "") << "," << p.value.n << "\n";
  return os.str();
}

/// Per-seed CSV: metric,t,seed,value for the seed-averaged metrics.
inline std::string to_seed_csv(const RunRecord& rec) {
  std::ostringstream os;
  os << "metric,t,seed,value\n";
  for (std::size_t i = 0; i < rec.series.size(); ++i) {
    if (!seed_metrics().count(rec.series[i].name())) continue;
    const auto& pts = rec.series[i].points();
    for (std::size_t k = 0; k < pts.size(); ++k)
      for (std::size_t s = 0; s < rec.seeds.size(); ++s)
        os << rec.series[i].name() << "," << pts[k].t << "," << s << "," << detail::format_double(rec.seeds[s].values[i][k])
           << "\n";
  }
  return os.str();
}

inline json sidecar(const RunRecord& rec) {
  json blocks = json::array();
  for (std::size_t s = 0; s < rec.seeds.size(); ++s) {
    json rows = json::array();
    for (const auto& b : rec.seeds[s].blocks) rows.push_back({b.start, b.end, b.sampled_index, b.truncation_bound});
    blocks.push_back({{"seed", s}, {"truth_member", rec.seeds[s].truth_member}, {"blocks", rows}});
  }
  return {
      {"name", rec.name},
      {"config_hash", rec.hash},
      {"config", rec.config},
      {"version", version},
      {"csv_schema", csv_header},
      {"wall_seconds", rec.wall_seconds},
      {"workers", rec.workers},
      {"notes",
       {"value_gap: V*_m(h_t) minus the realized normalized return over [t, m], m = t + H_t(eval_eps) - 1",
        "bayes_tv: computed for the deterministic continuation policy of the current sampling block",
        "Thompson plans are truncated at the block end; per-block truncation bound Gamma_end/Gamma_start is "
        "listed as the fourth entry of each block row [start, end, sampled_index, bound]"}},
      {"agent_blocks", blocks},
  };
}

struct OutputPaths {
  std::filesystem::path csv, sidecar, seeds;
};

inline OutputPaths write_outputs(const RunRecord& rec, const std::filesystem::path& dir, bool per_seed) {
  std::filesystem::create_directories(dir);
  OutputPaths p{dir / (rec.name + ".csv"), dir / (rec.name + ".meta.json"), {}};
  std::ofstream(p.csv, std::ios::binary) << to_csv(rec);
  std::ofstream(p.sidecar, std::ios::binary) << sidecar(rec).dump(2) << "\n";
  if (per_seed) {
    p.seeds = dir / (rec.name + ".seeds.csv");
    std::ofstream(p.seeds, std::ios::binary) << to_seed_csv(rec);
  }
  return p;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepEntry {
  std::string config_file;
  std::string name;
  std::string hash;
  bool ok = false;
  std::string error;
  OutputPaths outputs;
};

/// Runs every *.json config in `dir` (sorted by file name) and writes index.json
/// into `out`. A failing config is recorded in the index without stopping the others.
inline std::vector<SweepEntry> sweep(const std::filesystem::path& dir, const std::filesystem::path& out,
                                     std::optional<std::size_t> workers = std::nullopt) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("config directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::vector<SweepEntry> entries;
  for (const auto& f : files) {
    SweepEntry entry;
    entry.config_file = f.filename().string();
    try {
      auto cfg = load_config(f);
      if (workers) cfg.workers = *workers;
      entry.name = cfg.name;
      entry.hash = config_hash(cfg.resolved);
      const auto rec = run(cfg);
      entry.outputs = write_outputs(rec, out, cfg.per_seed);
      entry.ok = true;
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    entries.push_back(std::move(entry));
  }
  json index = json::array();
  for (const auto& e : entries)
    index.push_back({{"config_file", e.config_file},
                     {"name", e.name},
                     {"config_hash", e.hash},
                     {"status", e.ok ? "ok" : "error"},
                     {"error", e.error},
                     {"csv", e.ok ? e.outputs.csv.filename().string() : ""},
                     {"sidecar", e.ok ? e.outputs.sidecar.filename().string() : ""}});
  std::filesystem::create_directories(out);
  std::ofstream(out / "index.json", std::ios::binary) << index.dump(2) << "\n";
  return entries;
}

}  // namespace grl::harness
