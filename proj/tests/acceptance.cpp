// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance              run everything
//   acceptance --only NAME  run one criterion
//   acceptance --list       print criterion names

#include <bit>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "grl/grl.hpp"

using namespace grl;
using nlohmann::json;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> check;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string fmt_estimate(const Estimate& e) { return fmt("%.4f +/- %.4f", e.mean, e.ci_halfwidth.value_or(0.0)); }

Outcome from_property(const PropertyResult& r) {
  return {r.passed, fmt("%zu cases", r.cases) + (r.passed ? "" : "; " + r.witness)};
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Thompson sampling on nu_inf inside the K = 10 Example-1 class, sqrt_exp discount.
json trend_config(const std::string& name, const std::vector<Time>& checkpoints, const std::string& metric) {
  return {{"name", name},
          {"class", {{"type", "example1"}, {"K", 10}}},
          {"truth", {{"member", 0}}},
          {"discount", "sqrt_exp"},
          {"agent", {{"type", "thompson"}}},
          {"metrics", {metric}},
          {"checkpoints", checkpoints},
          {"n_seeds", 100},
          {"base_seed", 0},
          {"workers", worker_count()}};
}

MetricSeries run_series(const json& cfg) { return harness::run(harness::parse_config(cfg)).series.at(0); }

// ---------------------------------------------------------------------------

Outcome value_difference_bound() {
  const auto start = std::chrono::steady_clock::now();
  auto out = from_property(check_value_difference_bound(200));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  constexpr double max_seconds = 60.0;
  out.detail += fmt(", %.1fs (limit %.0fs)", secs, max_seconds);
  out.passed = out.passed && secs < max_seconds;
  return out;
}

Outcome posterior_martingale() { return from_property(check_posterior_martingale()); }
Outcome weight_identities() { return from_property(check_weight_identities()); }
Outcome discount_assumption() { return from_property(check_discount_assumption_suite()); }

Outcome example2_reproduction() {
  constexpr double tol = 1e-9;
  constexpr double gamma = 0.5;
  const auto env = make_bernoulli_bandit({0.0, 1.0});
  const SchedulePolicy pol(2, ScheduledAgent::powers_of_two(Action(0), Action(1)));
  const auto d = geometric(gamma);
  bool ok = true;
  std::string detail;
  for (Time m : {8, 64, 1024}) {
    const double r = exact_regret(*env, pol, m);
    const double want = static_cast<double>(std::bit_width(static_cast<std::uint64_t>(m)));
    ok = ok && std::abs(r - want) <= tol;
    detail += fmt("R_%ld=%.12g (want %.0f) ", static_cast<long>(m), r, want);
  }
  double min_gap = 1.0;
  for (Time t = 1; t <= 1024; t *= 2) {
    const double g = exact_expected_value_gap(*env, pol, *d, t, evaluation_horizon(*d, t, 0.01));
    min_gap = std::min(min_gap, g);
    ok = ok && g >= (1.0 - gamma) - tol;
  }
  detail += fmt("min gap over t=2^n<=1024: %.12g (want >= %.1f)", min_gap, 1.0 - gamma);
  return {ok, detail};
}

Outcome discussion_bandit_dichotomy() {
  constexpr std::size_t n = 6;
  constexpr double gamma = 0.9, eps = 0.05;
  constexpr int bayes_steps = 50;
  constexpr std::size_t thompson_seeds = 4000;
  constexpr double centre = 3.0, tol = 0.6;
  const auto cls = make_discussion_bandit_class(n, eps);
  const auto d = geometric(gamma);

  int off_safe = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Simulation sim(cls->member(i), std::make_unique<BayesAgent>(cls, d, EpsilonSchedule::standard()),
                   RandomStream(0, i, StreamRole::environment));
    for (int k = 0; k < bayes_steps; ++k) {
      sim.step();
      off_safe += sim.history()[sim.history().size() - 1].action != Action(0);
    }
  }

  std::vector<double> counts(thompson_seeds);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stalled{false};
  const auto work = [&] {
    for (std::size_t s; (s = next.fetch_add(1)) < thompson_seeds;) {
      RandomStream pick(0, s, StreamRole::truth);
      const auto truth = cls->member(pick.categorical(std::vector<double>(n, 1.0)));
      auto sim = make_simulation(
          truth, [&](RandomStream r) { return std::make_unique<ThompsonAgent>(cls, d, EpsilonSchedule::standard(), r); },
          0, s);
      std::set<std::uint32_t> arms;
      for (;;) {
        const double r = sim.step();
        const auto a = sim.history()[sim.history().size() - 1].action;
        if (a != Action(0)) arms.insert(a.id);
        if (r == 1.0) break;
        if (sim.time() > 2000) {
          stalled = true;
          break;
        }
      }
      counts[s] = static_cast<double>(arms.size());
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < worker_count(); ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  const auto e = monte_carlo_estimate(counts);

  const bool ok = off_safe == 0 && !stalled && std::abs(e.mean - centre) <= tol;
  return {ok, fmt("bayes off-safe pulls %d over %zu x %d steps; thompson distinct arms %s over %zu seeds (want %.1f "
                  "+/- %.1f)%s",
                  off_safe, n, bayes_steps, fmt_estimate(e).c_str(), thompson_seeds, centre, tol,
                  stalled ? "; some seed never observed reward 1" : "")};
}

Outcome thompson_value_gap_trend() {
  const auto s = run_series(trend_config("value_gap_trend", {8, 512}, "value_gap"));
  const auto& early = s.at(8).value;
  const auto& late = s.at(512).value;
  return {separated_below(late, early),
          "t=8: " + fmt_estimate(early) + ", t=512: " + fmt_estimate(late) + " (need disjoint CIs, later lower)"};
}

/// Fraction of seeds in which Thompson sampling, run on nu_inf, at some point
/// commits inside a block to an action losing at least the threshold.
Outcome example1_witness(double gamma) {
  constexpr std::size_t seeds = 200;
  constexpr Time t_max = 2000;
  constexpr double required = 0.95;
  constexpr Time lookahead = 80;
  const double threshold = (gamma - gamma * gamma) / 2 - 0.01;
  const auto cls = make_example1_class(0, true);
  const auto truth = std::dynamic_pointer_cast<const FiniteAutomatonEnv>(cls->member(0));
  const auto d = geometric(gamma);
  const AgentFactory factory = [&](RandomStream r) {
    return std::make_unique<ThompsonAgent>(cls, d, EpsilonSchedule::standard(), r);
  };
  std::vector<int> hit(seeds, 0);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t s; (s = next.fetch_add(1)) < seeds;) {
      auto sim = make_simulation(truth, factory, 0, s);
      while (sim.time() <= t_max && !hit[s]) {
        const Time t = sim.time();
        if (truth->state_index(sim.truth_state()) == 1) {  // reached only by exploring from s0
          auto& agent = dynamic_cast<ThompsonAgent&>(sim.agent());
          agent.prepare(sim.history());
          if (agent.blocks().back().start < t) {
            const Action a = agent.act(sim.history());
            hit[s] = action_gap(*truth, *d, sim.truth_state(), t, t + lookahead, a) >= threshold;
          }
        }
        sim.step();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < worker_count(); ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  int hits = 0;
  for (int h : hit) hits += h;
  const double frac = hits / static_cast<double>(seeds);
  return {frac >= required, fmt("gamma=%.2f threshold %.4f: %d/%zu seeds (%.3f, need >= %.2f)", gamma, threshold, hits,
                                seeds, frac, required)};
}

Outcome bayes_tv_trend() {
  const auto s = run_series(trend_config("bayes_tv_trend", {4, 64}, "bayes_tv"));
  const auto& early = s.at(4).value;
  const auto& late = s.at(64).value;
  return {separated_below(late, early),
          "t=4: " + fmt_estimate(early) + ", t=64: " + fmt_estimate(late) + " (need disjoint CIs, later lower)"};
}

Outcome regret_rate_trend() {
  const auto s = run_series(trend_config("regret_rate_trend", {64, 256, 1024}, "regret_rate"));
  const auto& a = s.at(64).value;
  const auto& b = s.at(256).value;
  const auto& c = s.at(1024).value;
  const bool ok = a.mean > b.mean && b.mean > c.mean && separated_below(c, a);
  return {ok, "R_m/m at m=64: " + fmt_estimate(a) + ", 256: " + fmt_estimate(b) + ", 1024: " + fmt_estimate(c)};
}

Outcome recoverability() {
  constexpr double tol = 1e-9;
  const auto d = geometric(0.5);
  double worst_bandit = 0.0;
  for (const auto& means : std::vector<std::vector<double>>{{0.0, 1.0}, {0.2, 0.7}, {0.5, 0.5, 0.9}, {0.3}})
    for (Time t = 1; t <= 6; ++t)
      worst_bandit = std::max(worst_bandit, std::abs(recoverability_gap(*make_bernoulli_bandit(means), *d, t, t + 10)));
  const auto trap = make_trap_env();
  double worst_trap = 0.0;
  for (Time t = 2; t <= 8; ++t) worst_trap = std::max(worst_trap, std::abs(recoverability_gap(*trap, *d, t, t + 60) - 1.0));
  return {worst_bandit <= tol && worst_trap <= tol,
          fmt("bandits max |gap| %.3g, trap max |gap - 1| %.3g (tolerance %.0e)", worst_bandit, worst_trap, tol)};
}

Outcome reproducibility() {
  json cfg = trend_config("reproducibility", {4, 16, 64}, "value_gap");
  cfg["metrics"] = {"value_gap", "regret", "bayes_tv", "posterior_truth"};
  cfg["n_seeds"] = 24;
  const auto csv_with = [&](std::size_t workers) {
    auto c = harness::parse_config(cfg);
    c.workers = workers;
    const auto rec = harness::run(c);
    return harness::to_csv(rec) + harness::to_seed_csv(rec);
  };
  const auto first = csv_with(1), second = csv_with(1), parallel = csv_with(8);
  const bool same_runs = first == second, same_workers = first == parallel;
  return {same_runs && same_workers,
          fmt("two runs %s, 1 vs 8 workers %s (%zu bytes)", same_runs ? "identical" : "DIFFER",
              same_workers ? "identical" : "DIFFER", first.size())};
}

std::vector<Criterion> criteria() {
  return {
      {"value_difference_bound", value_difference_bound},
      {"posterior_martingale", posterior_martingale},
      {"weight_identities", weight_identities},
      {"discount_assumption", discount_assumption},
      {"example2_reproduction", example2_reproduction},
      {"discussion_bandit_dichotomy", discussion_bandit_dichotomy},
      {"thompson_value_gap_trend", thompson_value_gap_trend},
      {"example1_witness", [] { return example1_witness(0.5); }},
      {"example1_witness_gamma09", [] { return example1_witness(0.9); }},
      {"bayes_tv_trend", bayes_tv_trend},
      {"regret_rate_trend", regret_rate_trend},
      {"recoverability", recoverability},
      {"reproducibility", reproducibility},
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string only;
  bool list = false;
  app.add_option("--only", only, "run a single criterion");
  app.add_flag("--list", list, "print criterion names");
  CLI11_PARSE(app, argc, argv);

  const auto all = criteria();
  if (list) {
    for (const auto& c : all) std::printf("%s\n", c.name.c_str());
    return 0;
  }
  bool any = false, failed = false;
  for (const auto& c : all) {
    if (!only.empty() && c.name != only) continue;
    any = true;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s: %s [%.1fs]\n", o.passed ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed = failed || !o.passed;
  }
  if (!any) {
    std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
    return 2;
  }
  return failed ? 1 : 0;
}
