#include "lprox/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace lprox;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::optional<std::string> out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "configuration document or run manifest")->required();
  app->add_option("--seed", c.seed, "override the root seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--chains", c.chains, "override the chain count");
}

int run(const Common& c, const char* expect) {
  RunConfig cfg = load_config(c.config, ConfigOverrides{c.seed, c.chains, c.out});
  const std::string kind = cfg.train ? "train-score" : cfg.design ? "design" : "sample";
  if (kind != expect) throw ConfigError(std::string("this document describes a '") + kind + "' experiment");
  const RunOutcome out = run_experiment(cfg);
  std::cout << "experiment " << cfg.experiment << " (" << kind << ") -> " << out.output_dir << '\n';
  if (out.manifest.contains("checks"))
    for (const auto& [name, v] : out.manifest["checks"].items())
      std::cout << "  check " << name << ": " << (v["passed"].get<bool>() ? "pass" : "FAIL") << ' '
                << v["detail"].dump() << '\n';
  if (out.manifest.contains("summary")) std::cout << "  summary " << out.manifest["summary"].dump() << '\n';
  return out.exit_code;
}

Vec read_vector_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::vector<double> xs;
  double v;
  while (in >> v) xs.push_back(v);
  if (!in.eof()) throw ConfigError("'" + path + "': expected whitespace-separated decimals");
  return to_vec(xs);
}

int project_cmd(const Common& c, const std::string& input, std::optional<double> lambda) {
  RunConfig cfg = load_config(c.config, ConfigOverrides{c.seed, c.chains, std::nullopt});
  if (!cfg.sampler.constraint) throw ConfigError("project needs a constraint section");
  const ConstraintSpec& spec = *cfg.sampler.constraint;
  const Vec x = read_vector_file(input);
  Vec y;
  if (spec.has_exact_projection() || lambda) {
    y = prox(spec, x, lambda.value_or(spec.prox_weight));
  } else {
    y = alm_project(x, as_smooth_violation(spec), cfg.sampler.alm).y;
  }
  const std::string text = format_vector(y) + '\n';
  if (c.out) {
    std::ofstream o(*c.out);
    o << text;
    if (spec.kind == ConstraintKind::porosity && c.out->size() > 4) {
      render_grid(ImageGrid(spec.rows, spec.cols, y), *c.out + ".pgm");
    }
  } else {
    std::cout << text;
  }
  std::cerr << "violation " << violation(spec, y) << " (input " << violation(spec, x) << ")\n";
  return kExitOk;
}

int diagnose_cmd(const std::string& run_dir, double min_fraction) {
  const Json manifest = read_json_file(run_dir + "/manifest.json");
  RunConfig cfg = parse_config(manifest);
  const SamplerConfig& sc = cfg.sampler;
  if (!sc.constraint || !sc.decoder) throw ConfigError("diagnose needs a run with a constraint and a decoder");
  if (!sc.constraint->convex()) throw ConfigError("contraction check applies to convex constraint kinds");
  const double G = manifest.at("measured").at("G").get<double>();
  const double ell = *sc.decoder->lipschitz_bound();
  std::ifstream in(run_dir + "/levels.csv");
  if (!in) throw ConfigError("cannot open levels.csv in '" + run_dir + "'");
  std::string line;
  std::getline(in, line);
  struct Series {
    std::vector<int> level;
    std::vector<double> dist, gamma;
  };
  std::map<long, Series> chains;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string f[8];
    for (auto& s : f) std::getline(ss, s, ',');
    Series& s = chains[std::stol(f[0])];
    s.level.push_back(std::stoi(f[1]));
    s.gamma.push_back(std::stod(f[2]));
    s.dist.push_back(std::stod(f[3]));
  }
  long holding = 0, total = 0;
  bool pre_ok = true;
  for (const auto& [k, s] : chains) {
    const BoundReport rep = check_feasibility_contraction(s.level, s.dist, s.gamma, G, ell,
                                                          sc.constraint->prox_regularity, sc.constraint->smoothness);
    holding += rep.holding();
    total += static_cast<long>(rep.records.size());
    pre_ok = pre_ok && rep.precondition_ok;
    std::printf("chain %ld: %d/%zu transitions hold%s\n", k, rep.holding(), rep.records.size(),
                rep.precondition_ok ? "" : " (step-size precondition violated)");
  }
  const double frac = total ? static_cast<double>(holding) / static_cast<double>(total) : 1.0;
  std::printf("G = %.6g, ell = %.6g, fraction holding = %.4f (required %.4f)\n", G, ell, frac, min_fraction);
  return frac >= min_fraction ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained latent Langevin sampling"};
  app.require_subcommand(1);
  Common sample_opts, train_opts, design_opts, project_opts;
  auto* sample = app.add_subcommand("sample", "run a sampling experiment");
  add_common(sample, sample_opts);
  auto* train = app.add_subcommand("train-score", "train an MLP score model");
  add_common(train, train_opts);
  auto* design = app.add_subcommand("design", "run the simulator-in-the-loop design refinement");
  add_common(design, design_opts);
  auto* project = app.add_subcommand("project", "project or prox one vector onto the configured constraint");
  add_common(project, project_opts);
  std::string input;
  std::optional<double> lambda;
  project->add_option("--input", input, "whitespace-separated vector or row-major grid")->required();
  project->add_option("--lambda", lambda, "prox weight (defaults to the constraint's)");
  auto* diagnose = app.add_subcommand("diagnose", "re-check the feasibility contraction over a stored run");
  std::string run_dir;
  double min_fraction = 0.99;
  diagnose->add_option("--run", run_dir, "run output directory")->required();
  diagnose->add_option("--min-fraction", min_fraction, "required fraction of holding transitions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  try {
    if (*sample) return run(sample_opts, "sample");
    if (*train) return run(train_opts, "train-score");
    if (*design) return run(design_opts, "design");
    if (*project) return project_cmd(project_opts, input, lambda);
    if (*diagnose) return diagnose_cmd(run_dir, min_fraction);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
