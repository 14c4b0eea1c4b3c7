// Command-line front end: run, verify, sweep, list-envs, list-agents.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "grl/harness.hpp"
#include "grl/properties.hpp"

namespace {

enum Exit : int { ok = 0, validation = 2, budget = 3, property_failure = 4 };

int report(const std::exception& e, int code) {
  std::cerr << "error: " << e.what() << "\n";
  return code;
}

/// Maps library errors onto exit codes.
template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const grl::BudgetExceeded& e) {
    return report(e, budget);
  } catch (const grl::TailNotResolved& e) {
    return report(e, budget);
  } catch (const grl::ValidationError& e) {
    return report(e, validation);
  } catch (const grl::ZeroLikelihood& e) {
    return report(e, validation);
  } catch (const std::exception& e) {
    return report(e, validation);
  }
}

template <class Registry>
void list(const Registry& reg) {
  for (const auto& [name, entry] : reg) {
    std::cout << name;
    if (!entry.params.empty()) std::cout << "{" << entry.params << "}";
    std::cout << "  " << entry.description << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  namespace h = grl::harness;
  CLI::App app{"Thompson-sampling laboratory for general reinforcement learning"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run one experiment config");
  std::string config;
  std::optional<std::size_t> seeds, workers;
  std::string out = "results";
  bool per_seed = false;
  run->add_option("--config", config, "experiment config (JSON)")->required();
  run->add_option("--seeds", seeds, "override n_seeds");
  run->add_option("--out", out, "output directory")->capture_default_str();
  run->add_option("--workers", workers, "worker threads across seeds");
  run->add_flag("--per-seed", per_seed, "also write per-seed values");

  auto* verify = app.add_subcommand("verify", "run the property suite");
  std::string filter;
  verify->add_option("--filter", filter, "only properties whose name contains this text");

  auto* sweep = app.add_subcommand("sweep", "run every config in a directory");
  std::string config_dir;
  sweep->add_option("--config-dir", config_dir, "directory of *.json configs")->required();
  sweep->add_option("--out", out, "output directory")->capture_default_str();
  sweep->add_option("--workers", workers, "worker threads across seeds");

  auto* list_envs = app.add_subcommand("list-envs", "list environment, class and discount constructors");
  auto* list_agents = app.add_subcommand("list-agents", "list agent constructors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : validation;
  }

  if (*run) {
    return guarded([&] {
      auto cfg = h::load_config(config);
      if (seeds || workers || per_seed) {
        auto j = cfg.resolved;
        if (seeds) j["n_seeds"] = *seeds;
        cfg = h::parse_config(j);
      }
      if (workers) cfg.workers = *workers;
      cfg.per_seed = cfg.per_seed || per_seed;
      const auto rec = h::run(cfg);
      const auto paths = h::write_outputs(rec, out, cfg.per_seed);
      std::cout << "wrote " << paths.csv.string() << " and " << paths.sidecar.string() << " (config " << rec.hash
                << ", " << rec.wall_seconds << " s)\n";
      return static_cast<int>(ok);
    });
  }
  if (*verify) {
    return guarded([&] {
      const auto rep = grl::verify(filter);
      if (rep.results.empty()) throw grl::ValidationError("no property matches '" + filter + "'");
      std::size_t failed = 0;
      for (const auto& r : rep.results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.cases << " cases)";
        if (!r.passed) {
          std::cout << ": " << r.witness;
          ++failed;
        }
        std::cout << "\n";
      }
      std::cout << rep.results.size() - failed << "/" << rep.results.size() << " properties hold\n";
      return static_cast<int>(failed ? property_failure : ok);
    });
  }
  if (*sweep) {
    return guarded([&] {
      const auto entries = h::sweep(config_dir, out, workers);
      bool all_ok = true;
      for (const auto& e : entries) {
        std::cout << (e.ok ? "ok    " : "error ") << e.config_file;
        if (!e.ok) std::cout << ": " << e.error;
        std::cout << "\n";
        all_ok = all_ok && e.ok;
      }
      std::cout << "index: " << (std::filesystem::path(out) / "index.json").string() << "\n";
      return static_cast<int>(all_ok ? ok : validation);
    });
  }
  if (*list_envs) {
    std::cout << "environments:\n";
    list(h::environment_registry());
    std::cout << "\nclasses:\n";
    list(h::class_registry());
    std::cout << "\ndiscounts:\n";
    list(h::discount_registry());
    return ok;
  }
  if (*list_agents) {
    list(h::agent_registry());
    return ok;
  }
  return ok;
}
