#include "helpers.hpp"

#include "lprox/runner.hpp"
#include "lprox/serialize.hpp"

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace lprox;
using namespace testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lprox_runner_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LPROX_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_path(const std::string& name) { return std::string(LPROX_SOURCE_DIR) + "/configs/" + name; }

Json minimal_doc() {
  return Json::parse(R"({
    "experiment": "tiny",
    "seed": 4,
    "schedule": {"T": 3, "abar": [1.0, 0.01], "gamma": [0.05, 0.01], "inner_steps": 4},
    "score": {"kind": "linear_gaussian", "factor": [[1, 0], [0, 1]], "offset": [0.5, -0.5]}
  })");
}

std::string error_of(const Json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("runner") {

TEST_CASE("minimal document resolves every default") {
  const RunConfig cfg = parse_config(minimal_doc());
  CHECK(cfg.chains == 1);
  CHECK(cfg.sampler.mode == SamplerMode::unconstrained);
  CHECK_FALSE(cfg.defaults.empty());
  // Every defaulted key is spelled out in the resolved document.
  for (const auto& path : cfg.defaults) {
    const Json* node = &cfg.resolved;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) {
      REQUIRE_MESSAGE(node->contains(part), path);
      node = &node->at(part);
    }
  }
  const RunConfig again = parse_config(cfg.resolved);
  CHECK(again.resolved == cfg.resolved);
}

TEST_CASE("strict schema errors") {
  Json doc = minimal_doc();
  doc["schedule"]["gama"] = doc["schedule"]["gamma"];
  doc["schedule"].erase("gamma");
  const std::string e = error_of(doc);
  CHECK(e.find("gama") != std::string::npos);
  CHECK(e.find("gamma") != std::string::npos);

  Json noseed = minimal_doc();
  noseed.erase("seed");
  CHECK(error_of(noseed).find("seed") != std::string::npos);

  Json extra = minimal_doc();
  extra["chians"] = 3;
  CHECK(error_of(extra).find("chains") != std::string::npos);

  CHECK(edit_distance("gama", "gamma") == 1);
  CHECK(edit_distance("", "abc") == 3);
}

TEST_CASE("parse errors carry line and column") {
  const fs::path p = scratch("bad.json");
  spit(p, "{\n  \"seed\": 1,\n  \"chains\": ,\n}\n");
  try {
    load_config(p.string());
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(p.string() + ":3:") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config((p.parent_path() / "missing.json").string()), ConfigError);
}

TEST_CASE("render_grid bytes") {
  CHECK(grid_byte(-1.0) == 0);
  CHECK(grid_byte(1.0) == 255);
  CHECK(grid_byte(0.0) == 128);
  const fs::path p = scratch("g.pgm");
  render_grid(ImageGrid::from_rows({{-1, -1}, {-1, -1}}), p.string());
  CHECK(slurp(p) == std::string("P5\n2 2\n255\n") + std::string(4, '\0'));
  render_grid(ImageGrid::from_rows({{1, 1, 1}}), p.string());
  CHECK(slurp(p) == std::string("P5\n3 1\n255\n") + std::string(3, '\xff'));
  render_grid(ImageGrid::from_rows({{0.0}}), p.string());
  CHECK(slurp(p).back() == '\x80');
  CHECK_THROWS_AS(render_grid(ImageGrid::from_rows({{0.0}}), "/nonexistent-dir/x.pgm"), Error);
}

TEST_CASE("porosity experiment: every chain exact, replay bit-exact") {
  const fs::path out = scratch("porosity");
  const RunConfig cfg = load_config(config_path("porosity.json"), ConfigOverrides{std::nullopt, std::nullopt, out.string()});
  const RunOutcome run = run_experiment(cfg);
  CHECK(run.exit_code == kExitOk);
  CHECK(run.manifest["checks"]["porosity_exact"]["passed"].get<bool>());
  int exact = 0;
  for (const auto& c : run.chains) exact += porosity(c.trace.final_ambient) == cfg.sampler.constraint->porosity_target;
  CHECK(exact == 20);
  CHECK(fs::exists(out / "grids"));

  // Nothing is written beside the output directory.
  std::set<std::string> before;
  for (const auto& e : fs::directory_iterator(out.parent_path())) before.insert(e.path().filename().string());

  const fs::path replay = scratch("porosity_replay");
  const RunConfig again =
      load_config((out / "manifest.json").string(), ConfigOverrides{std::nullopt, std::nullopt, replay.string()});
  run_experiment(again);
  CHECK(slurp(out / "metrics.csv") == slurp(replay / "metrics.csv"));
  CHECK(slurp(out / "levels.csv") == slurp(replay / "levels.csv"));
  CHECK(slurp(out / "samples.txt") == slurp(replay / "samples.txt"));
  std::set<std::string> after;
  for (const auto& e : fs::directory_iterator(out.parent_path())) after.insert(e.path().filename().string());
  after.erase("porosity_replay");
  CHECK(before == after);
}

TEST_CASE("thread count does not change the metrics") {
  Json doc = minimal_doc();
  doc["chains"] = 6;
  doc["record"] = "full";
  const fs::path a = scratch("t1"), b = scratch("t3");
  doc["output"] = a.string();
  doc["threads"] = 1;
  run_experiment(parse_config(doc));
  doc["output"] = b.string();
  doc["threads"] = 3;
  run_experiment(parse_config(doc));
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
}

TEST_CASE("whole-space constraint matches the unconstrained run") {
  Json plain = minimal_doc();
  plain["chains"] = 4;
  plain["record"] = "full";
  Json vac = plain;
  vac["constraint"] = Json{{"kind", "vacuous"}, {"dim", 2}};
  vac["sampler"] = Json{{"mode", "projected_ambient"}};
  const fs::path a = scratch("plain"), b = scratch("vacuous");
  plain["output"] = a.string();
  vac["output"] = b.string();
  run_experiment(parse_config(plain));
  run_experiment(parse_config(vac));
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
}

TEST_CASE("design experiment improves from step 2 onward") {
  const fs::path out = scratch("design");
  const RunConfig cfg = load_config(config_path("design.json"), ConfigOverrides{std::nullopt, 4, out.string()});
  const RunOutcome run = run_experiment(cfg);
  std::ifstream in(out / "metrics.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "chain,step,mse");
  std::map<int, std::vector<double>> mse;
  while (std::getline(in, line)) {
    int chain = 0, step = 0;
    double v = 0;
    char c1, c2;
    std::istringstream(line) >> chain >> c1 >> step >> c2 >> v;
    mse[chain].push_back(v);
  }
  CHECK(mse.size() == 4);
  for (const auto& [chain, series] : mse) {
    REQUIRE(series.size() == 6);
    for (std::size_t s = 2; s < series.size(); ++s) CHECK(series[s] < series[0]);
  }
  CHECK(run.exit_code == kExitOk);
}

TEST_CASE("train-score writes a loadable score field") {
  Json doc = minimal_doc();
  doc["train"] = Json{{"data", {{"kind", "linear_gaussian"}, {"factor", {{1, 0}, {0, 1}}}, {"offset", {0.5, -0.5}}}},
                      {"samples", 200},
                      {"epochs", 5},
                      {"hidden1", 8},
                      {"hidden2", 8}};
  const fs::path out = scratch("train");
  doc["output"] = out.string();
  const RunOutcome run = run_experiment(parse_config(doc));
  CHECK(run.exit_code == kExitOk);
  const ScoreField f = score_from_json(read_json_file((out / "score.json").string()));
  CHECK(f.kind() == ScoreKind::mlp);
  CHECK(f.dim() == 2);
}

TEST_CASE("cli exit codes and subcommands") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  CHECK(run_cli("sample --config " + config_path("porosity.json") + " --chains 2 --out " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "manifest.json"));
  // Porosity is not a convex kind: the contraction check refuses it.
  CHECK(run_cli("diagnose --run " + (dir / "run").string()) == 3);
  CHECK(run_cli("sample --config " + config_path("halfspace.json") + " --chains 3 --out " + (dir / "hs").string()) == 0);
  CHECK(run_cli("diagnose --run " + (dir / "hs").string()) == 0);
  CHECK(run_cli("diagnose --run " + (dir / "hs").string() + " --min-fraction 1.01") == 2);

  Json bad = minimal_doc();
  bad["schedule"]["gama"] = 1;
  spit(dir / "bad.json", bad.dump());
  CHECK(run_cli("sample --config " + (dir / "bad.json").string()) == 3);
  CHECK(run_cli("design --config " + config_path("porosity.json") + " --out " + (dir / "x").string()) == 3);

  Json demand = minimal_doc();
  demand["constraint"] = Json{{"kind", "porosity"}, {"rows", 1}, {"cols", 2}, {"target", 2}};
  demand["decoder"] = Json{{"kind", "linear"}, {"weight", {{1, 0}, {0, 1}}}};
  demand["sampler"] = Json{{"mode", "proximal_latent"}};
  demand["checks"] = Json{{"porosity_exact", true}};
  spit(dir / "proj.json", demand.dump());
  spit(dir / "in.txt", "0.5 -0.25\n");
  CHECK(run_cli("project --config " + (dir / "proj.json").string() + " --input " + (dir / "in.txt").string() +
                " --out " + (dir / "out.txt").string()) == 0);
  std::istringstream res(slurp(dir / "out.txt"));
  double a = 0, b = 0;
  res >> a >> b;
  CHECK(a == -1e-3);
  CHECK(b == -0.25);

  // A chain that blows up exits with the divergence code.
  Json boom = minimal_doc();
  boom["schedule"]["gamma"] = Json::array({1e300, 1e300});
  spit(dir / "boom.json", boom.dump());
  CHECK(run_cli("sample --config " + (dir / "boom.json").string() + " --out " + (dir / "boom").string()) == 4);
}

TEST_CASE("remove scratch directories") {
  fs::remove_all(fs::temp_directory_path() / ("lprox_runner_" + std::to_string(::getpid())));
}

}
