#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "grl/harness.hpp"
#include "grl/properties.hpp"

using namespace grl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json example2() {
  return {{"name", "ex2"},
          {"environment", {{"type", "bernoulli_bandit"}, {"means", {0.0, 1.0}}}},
          {"discount", {{"type", "geometric"}, {"gamma", 0.5}}},
          {"agent", {{"type", "scheduled"}, {"schedule", "powers_of_two"}, {"rare", 0}, {"usual", 1}}},
          {"metrics", {"exact_regret"}},
          {"checkpoints", {8, 64}},
          {"n_seeds", 1}};
}

json small_thompson() {
  return {{"name", "small"},
          {"class", {{"type", "example1"}, {"K", 4}}},
          {"truth", {{"member", 0}}},
          {"discount", {{"type", "geometric"}, {"gamma", 0.9}}},
          {"agent", {{"type", "thompson"}}},
          {"metrics", {"value_gap", "regret", "bayes_tv", "posterior_truth"}},
          {"checkpoints", {2, 8, 20}},
          {"n_seeds", 12}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("grl_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int exit_code_of(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, RejectsInvalidFields) {
  const auto with = [](const char* key, json value) {
    auto j = small_thompson();
    j[key] = std::move(value);
    return j;
  };
  EXPECT_THROW(harness::parse_config(with("n_seeds", 0)), ValidationError);
  EXPECT_THROW(harness::parse_config(with("n_seeds", 1)), ValidationError);  // MC metrics need an interval
  EXPECT_THROW(harness::parse_config(with("metrics", {"speed"})), ValidationError);
  EXPECT_THROW(harness::parse_config(with("metrics", {"regret", "regret"})), ValidationError);
  EXPECT_THROW(harness::parse_config(with("checkpoints", {4, 4})), ValidationError);
  EXPECT_THROW(harness::parse_config(with("checkpoints", json::array())), ValidationError);
  EXPECT_THROW(harness::parse_config(with("metrics", {"exact_regret"})), ValidationError);
  EXPECT_THROW(harness::parse_config(with("agent", {{"type", "oracle"}})), ValidationError);
  EXPECT_THROW(harness::parse_config(with("discount", {{"type", "geometric"}, {"gamma", 1.5}})), ValidationError);
  EXPECT_THROW(harness::parse_config(with("truth", {{"member", 9}})), ValidationError);
  EXPECT_THROW(harness::parse_config(json::array()), ValidationError);

  auto random_tv = example2();
  random_tv["agent"] = {{"type", "random"}};
  random_tv["metrics"] = {"bayes_tv"};
  random_tv["n_seeds"] = 4;
  EXPECT_THROW(harness::parse_config(random_tv), ValidationError);
}

TEST(Config, HashTracksContent) {
  auto a = example2(), b = example2();
  EXPECT_EQ(harness::config_hash(a), harness::config_hash(b));
  b["discount"]["gamma"] = 0.9;
  EXPECT_NE(harness::config_hash(a), harness::config_hash(b));
}

TEST(Config, ShippedConfigsParse) {
  for (const auto& e : fs::directory_iterator(GRL_CONFIG_DIR))
    if (e.path().extension() == ".json") EXPECT_NO_THROW(harness::load_config(e.path())) << e.path();
}

TEST(Run, ExactMetricsHaveNoInterval) {
  const auto rec = harness::run(harness::parse_config(example2()));
  std::istringstream csv(harness::to_csv(rec));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, harness::csv_header);
  for (const auto& [t, regret] : {std::pair{"8", 4.0}, std::pair{"64", 7.0}}) {
    std::getline(csv, line);
    std::vector<std::string> cells;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    ASSERT_EQ(cells.size(), 5u) << line;
    EXPECT_EQ(cells[0], "exact_regret");
    EXPECT_EQ(cells[1], t);
    EXPECT_NEAR(std::stod(cells[2]), regret, 1e-9);
    EXPECT_EQ(cells[3], "");
    EXPECT_EQ(cells[4], "1");
  }
}

TEST(Run, WorkersDoNotChangeResults) {
  auto one = harness::parse_config(small_thompson());
  auto many = one;
  many.workers = 8;
  const auto a = harness::run(one), b = harness::run(many), c = harness::run(one);
  EXPECT_EQ(harness::to_csv(a), harness::to_csv(b));
  EXPECT_EQ(harness::to_seed_csv(a), harness::to_seed_csv(b));
  EXPECT_EQ(harness::to_csv(a), harness::to_csv(c));
  EXPECT_EQ(harness::sidecar(a)["agent_blocks"], harness::sidecar(b)["agent_blocks"]);
}

TEST(Run, SeedsAggregateIntoTheCsv) {
  const auto rec = harness::run(harness::parse_config(small_thompson()));
  ASSERT_EQ(rec.series.size(), 4u);
  for (const auto& s : rec.series)
    for (const auto& p : s.points()) {
      EXPECT_EQ(p.value.n, 12u);
      EXPECT_TRUE(p.value.ci_halfwidth.has_value());
    }
  const auto& posterior = rec.series[3];
  EXPECT_GT(posterior.at(20).value.mean, 0.0);
  EXPECT_LE(posterior.at(20).value.mean, 1.0);
}

TEST(Outputs, CsvSidecarAndSeeds) {
  const auto dir = fresh_dir("outputs");
  const auto rec = harness::run(harness::parse_config(small_thompson()));
  const auto p = harness::write_outputs(rec, dir, true);
  EXPECT_EQ(p.csv, dir / "small.csv");
  EXPECT_EQ(slurp(p.csv), harness::to_csv(rec));
  const auto seeds = slurp(p.seeds);
  EXPECT_EQ(seeds.substr(0, seeds.find('\n')), "metric,t,seed,value");
  const auto meta = json::parse(slurp(p.sidecar));
  for (const char* key : {"name", "config_hash", "config", "version", "csv_schema", "wall_seconds", "workers", "notes",
                          "agent_blocks"})
    EXPECT_TRUE(meta.contains(key)) << key;
  EXPECT_EQ(meta["config_hash"], rec.hash);
  EXPECT_EQ(meta["agent_blocks"].size(), 12u);
  const auto& first_block = meta["agent_blocks"][0]["blocks"][0];
  EXPECT_EQ(first_block[0], 1);
  fs::remove_all(dir);
}

TEST(Sweep, WritesAnIndexEvenWhenEmptyOrFailing) {
  const auto in = fresh_dir("sweep_in"), out = fresh_dir("sweep_out");
  harness::sweep(in, out);
  EXPECT_EQ(json::parse(slurp(out / "index.json")), json::array());

  std::ofstream(in / "a_good.json") << example2().dump();
  std::ofstream(in / "b_bad.json") << R"({"name": "bad"})";
  const auto entries = harness::sweep(in, out);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_TRUE(entries[0].ok);
  EXPECT_FALSE(entries[1].ok);
  const auto index = json::parse(slurp(out / "index.json"));
  EXPECT_EQ(index[0]["status"], "ok");
  EXPECT_EQ(index[0]["csv"], "ex2.csv");
  EXPECT_EQ(index[1]["status"], "error");
  EXPECT_TRUE(fs::exists(out / "ex2.meta.json"));
  EXPECT_THROW(harness::sweep(in / "missing", out), ValidationError);
  fs::remove_all(in);
  fs::remove_all(out);
}

TEST(Registries, ListTheDocumentedConstructors) {
  for (const char* env : {"example1", "bernoulli_bandit", "trap", "discussion_bandit", "automaton", "random_mdp"})
    EXPECT_TRUE(harness::environment_registry().count(env)) << env;
  for (const char* agent : {"thompson", "bayes", "informed", "random", "scheduled"})
    EXPECT_TRUE(harness::agent_registry().count(agent)) << agent;
}

TEST(Verify, SuiteHoldsAndCatchesACorruptedSchedule) {
  const auto rep = verify();
  EXPECT_GE(rep.results.size(), 12u);
  for (const auto& r : rep.results) EXPECT_TRUE(r.passed) << r.name << ": " << r.witness;

  const auto bad = std::make_shared<CorruptedDiscount>(geometric(0.9), 37);
  const auto r = check_gamma_recursion({bad}, 100);
  EXPECT_FALSE(r.passed);
  EXPECT_NE(r.witness.find("t=36"), std::string::npos) << r.witness;
}

TEST(Cli, ExitCodes) {
  const std::string cli = GRL_CLI_PATH;
  const auto dir = fresh_dir("cli");
  std::ofstream(dir / "bad.json") << R"({"name": "bad", "n_seeds": 0})";
  std::ofstream(dir / "good.json") << example2().dump();

  EXPECT_EQ(exit_code_of(cli + " run --config " + (dir / "bad.json").string() + " --out " + dir.string()), 2);
  EXPECT_EQ(exit_code_of(cli + " run --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(exit_code_of(cli + " run --config " + (dir / "good.json").string() + " --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "ex2.csv"));
  EXPECT_EQ(exit_code_of(cli + " verify --filter memo"), 0);
  EXPECT_EQ(exit_code_of(cli + " verify --filter no_such_property"), 2);
  EXPECT_EQ(exit_code_of(cli + " list-envs"), 0);
  EXPECT_EQ(exit_code_of(cli + " list-agents"), 0);
  EXPECT_EQ(exit_code_of(cli + " frobnicate"), 2);

  auto tight = example2();
  tight["node_budget"] = 3;
  tight["agent"] = {{"type", "informed"}, {"eps", 0.001}};
  tight["metrics"] = {"regret"};
  tight["n_seeds"] = 2;
  std::ofstream(dir / "tight.json") << tight.dump();
  EXPECT_EQ(exit_code_of(cli + " run --config " + (dir / "tight.json").string() + " --out " + dir.string()), 3);
  fs::remove_all(dir);
}
