#include "lprox/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

namespace fs = std::filesystem;

namespace lprox {

std::string format_vector(const Vec& v, char sep) {
  std::string out;
  char buf[40];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    if (i) out += sep;
    out += buf;
  }
  return out;
}

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string chain_name(std::uint64_t k, const char* ext) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "chain_%04llu%s", static_cast<unsigned long long>(k), ext);
  return buf;
}

template <typename F>
void parallel_for(int n, int threads, F&& body) {
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int k = next++; k < n; k = next++) body(k);
  };
  const int w = std::max(1, std::min(threads, n));
  if (w == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (int i = 0; i < w; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

}  // namespace

std::string format_metrics(const SampleTrace& trace, std::uint64_t chain) {
  std::string out;
  std::size_t row = 0;
  for (const auto& r : trace.rows) {
    out += std::to_string(chain) + ',' + std::to_string(row++) + ',' + std::to_string(r.level) + ',' +
           std::to_string(r.step) + ',' + to_string(r.phase) + ',' + num(r.gamma) + ',' + num(r.violation) + ',' +
           num(r.distance) + ',' + num(r.score_norm) + ',' + std::to_string(r.iterations) + ',' +
           format_vector(r.z) + '\n';
  }
  return out;
}

std::vector<ChainResult> run_chains(const SamplerConfig& cfg, int n, int threads) {
  cfg.validate();
  std::vector<ChainResult> results(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](int k) {
    ChainResult& r = results[static_cast<std::size_t>(k)];
    r.index = static_cast<std::uint64_t>(k);
    r.seed = derive_seed(cfg.seed, r.index);
    try {
      r.trace = sample_chain(cfg, r.index);
      r.ok = true;
    } catch (const DivergenceError& e) {
      r.error = e.what();
      r.diverged = true;
    } catch (const NumericError& e) {
      r.error = e.what();
      r.diverged = true;
    } catch (const Error& e) {
      r.error = e.what();
    }
  });
  return results;
}

unsigned char grid_byte(double v) {
  const double c = std::clamp(v, -1.0, 1.0);
  return static_cast<unsigned char>(std::floor((c + 1.0) / 2.0 * 255.0 + 0.5));
}

void render_grid(const ImageGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "P5\n" << grid.cols << ' ' << grid.rows << "\n255\n";
  for (Eigen::Index i = 0; i < grid.values.size(); ++i) out.put(static_cast<char>(grid_byte(grid.values[i])));
  if (!out) throw Error("write failed for '" + path + "'");
}

Mat sample_analytic(const ScoreField& field, int n, Rng& rng) {
  if (!field.analytic()) throw UnsupportedKindError("sample_analytic needs an analytic field");
  const auto& comps = field.components();
  std::vector<Mat> factors;
  std::vector<double> cdf;
  double acc = 0.0;
  for (const auto& c : comps) {
    factors.push_back(Eigen::LLT<Mat>(c.cov).matrixL());
    acc += c.weight;
    cdf.push_back(acc);
  }
  Mat out(field.dim(), n);
  for (int i = 0; i < n; ++i) {
    std::size_t k = 0;
    if (comps.size() > 1) {
      const double u = rng.uniform() * acc;
      while (k + 1 < cdf.size() && u >= cdf[k]) ++k;
    }
    out.col(i) = comps[k].mean + factors[k] * rng.normal_vec(field.dim());
  }
  return out;
}

namespace {

struct Summary {
  Json checks = Json::object();
  bool passed = true;

  void add(const std::string& name, bool ok, Json detail) {
    checks[name] = Json{{"passed", ok}, {"detail", std::move(detail)}};
    passed = passed && ok;
  }
};

RunOutcome run_sampling(const RunConfig& cfg, const fs::path& dir, Json& manifest) {
  const SamplerConfig& sc = cfg.sampler;
  RunOutcome outcome;
  const fs::path shards = dir / "shards";
  fs::create_directories(shards);

  std::vector<ChainResult> results(static_cast<std::size_t>(cfg.chains));
  sc.validate();
  parallel_for(cfg.chains, cfg.threads, [&](int k) {
    ChainResult& r = results[static_cast<std::size_t>(k)];
    r.index = static_cast<std::uint64_t>(k);
    r.seed = derive_seed(sc.seed, r.index);
    try {
      r.trace = sample_chain(sc, r.index);
      r.ok = true;
    } catch (const DivergenceError& e) {
      r.error = e.what();
      r.diverged = true;
    } catch (const NumericError& e) {
      r.error = e.what();
      r.diverged = true;
    } catch (const Error& e) {
      r.error = e.what();
    }
    // Each chain owns its shard; written as soon as the chain finishes.
    write_text(shards / chain_name(r.index, ".csv"), r.ok ? format_metrics(r.trace, r.index) : std::string());
  });

  std::string metrics = std::string(kMetricsHeader) + '\n';
  std::string levels = "chain,level,gamma,pre_distance,post_distance,corrections,max_score_norm,shortfall\n";
  std::string samples, latents;
  Json chains = Json::array();
  Json artifacts = Json::array({"metrics.csv", "levels.csv", "samples.txt", "latents.txt", "manifest.json"});
  const bool porosity = sc.constraint && sc.constraint->kind == ConstraintKind::porosity;
  if (porosity) fs::create_directories(dir / "grids");

  int ok_count = 0, feasible = 0, exact_porosity = 0;
  double G = 0.0;
  for (const auto& r : results) {
    Json c{{"index", r.index}, {"seed", r.seed}, {"ok", r.ok}};
    if (!r.ok) {
      c["error"] = r.error;
      chains.push_back(c);
      outcome.diverged = outcome.diverged || r.diverged;
      continue;
    }
    ++ok_count;
    const SampleTrace& t = r.trace;
    metrics += format_metrics(t, r.index);
    for (const auto& lv : t.levels)
      levels += std::to_string(r.index) + ',' + std::to_string(lv.level) + ',' + num(lv.gamma) + ',' +
                num(lv.pre_distance) + ',' + num(lv.post_distance) + ',' + std::to_string(lv.corrections) + ',' +
                num(lv.max_score_norm) + ',' + (lv.shortfall ? "1" : "0") + '\n';
    samples += format_vector(t.final_ambient) + '\n';
    latents += format_vector(t.final_latent) + '\n';
    G = std::max(G, t.max_score_norm);
    c["final_violation"] = t.final_violation;
    c["final_projected"] = t.final_projected;
    c["shortfalls"] = t.shortfalls;
    c["langevin_steps"] = t.langevin_steps;
    c["correction_steps"] = t.correction_steps;
    if (t.final_violation == 0.0) ++feasible;
    if (porosity) {
      const int p = lprox::porosity(t.final_ambient);
      c["porosity"] = p;
      const double err = std::abs(p - sc.constraint->porosity_target) /
                         static_cast<double>(sc.constraint->rows * sc.constraint->cols);
      c["porosity_error"] = err;
      c["porosity_error_over_10pct"] = err > 0.10;
      if (p == sc.constraint->porosity_target) ++exact_porosity;
      const std::string name = "grids/" + chain_name(r.index, ".pgm");
      render_grid(ImageGrid(sc.constraint->rows, sc.constraint->cols, t.final_ambient), (dir / name).string());
      artifacts.push_back(name);
    }
    chains.push_back(c);
  }
  write_text(dir / "metrics.csv", metrics);
  write_text(dir / "levels.csv", levels);
  write_text(dir / "samples.txt", samples);
  write_text(dir / "latents.txt", latents);

  Summary summary;
  Json measured{{"G", G}};
  if (sc.decoder && sc.decoder->lipschitz_bound()) measured["ell"] = *sc.decoder->lipschitz_bound();

  // Feasibility contraction report (convex kinds with a decoder).
  if (sc.constraint && sc.constraint->convex() && sc.decoder && sc.mode == SamplerMode::proximal_latent &&
      ok_count > 0) {
    long holding = 0, total = 0;
    bool pre_ok = true;
    for (const auto& r : results) {
      if (!r.ok) continue;
      const BoundReport rep = check_feasibility_contraction(r.trace, *sc.constraint, *sc.decoder,
                                                            sc.constraint->prox_regularity, G);
      holding += rep.holding();
      total += static_cast<long>(rep.records.size());
      pre_ok = pre_ok && rep.precondition_ok;
    }
    const double frac = total ? static_cast<double>(holding) / static_cast<double>(total) : 1.0;
    const double ell = *sc.decoder->lipschitz_bound();
    measured["beta_prime"] = sc.constraint->prox_regularity / (ell * sc.constraint->smoothness);
    manifest["diagnostics"]["feasibility_contraction"] =
        Json{{"transitions", total}, {"holding", holding}, {"fraction", frac}, {"step_size_precondition", pre_ok}};
    if (cfg.checks.contraction_min_fraction)
      summary.add("contraction_fraction", frac >= *cfg.checks.contraction_min_fraction,
                  Json{{"fraction", frac}, {"required", *cfg.checks.contraction_min_fraction}});
  }
  if (cfg.checks.final_feasible)
    summary.add("final_feasible", feasible == cfg.chains, Json{{"feasible", feasible}, {"chains", cfg.chains}});
  if (cfg.checks.porosity_exact)
    summary.add("porosity_exact", porosity && exact_porosity == cfg.chains,
                Json{{"exact", exact_porosity}, {"chains", cfg.chains}});
  if (ok_count != cfg.chains) summary.add("chains_completed", false, Json{{"ok", ok_count}, {"chains", cfg.chains}});

  manifest["chains"] = chains;
  manifest["measured"] = measured;
  manifest["summary"] = Json{{"chains", cfg.chains},   {"completed", ok_count},
                             {"feasible", feasible},   {"exact_porosity", exact_porosity},
                             {"porosity", porosity}};
  if (porosity)
    manifest["notes"].push_back(
        "porosity error is |porosity - K| / (rows * cols); chains with error above 0.10 are flagged");
  manifest["checks"] = summary.checks;
  manifest["artifacts"] = artifacts;
  outcome.checks_passed = summary.passed;
  outcome.chains = std::move(results);
  return outcome;
}

RunOutcome run_design(const RunConfig& cfg, const fs::path& dir, Json& manifest) {
  const SamplerConfig& sc = cfg.sampler;
  const DesignSettings& ds = *cfg.design;
  RunOutcome outcome;
  struct Item {
    bool ok = false;
    bool diverged = false;
    std::string error;
    DesignResult res;
  };
  std::vector<Item> items(static_cast<std::size_t>(cfg.chains));
  parallel_for(cfg.chains, cfg.threads, [&](int k) {
    Item& it = items[static_cast<std::size_t>(k)];
    const auto idx = static_cast<std::uint64_t>(k);
    try {
      Vec z0;
      if (ds.init == "sample") {
        z0 = sample_chain(sc, idx).final_latent;
      } else {
        Rng rng(derive_seed(sc.seed, idx));
        z0 = ds.init_scale * rng.normal_vec(sc.decoder->latent_dim());
      }
      DpoConfig dc = sc.dpo->config;
      dc.seed = derive_seed(dc.seed, idx);
      it.res = design_loop(z0, *sc.decoder, *sc.dpo->simulator, dc, ds.steps, ds.step_size, ds.tolerance);
      it.ok = true;
    } catch (const DivergenceError& e) {
      it.error = e.what();
      it.diverged = true;
    } catch (const Error& e) {
      it.error = e.what();
    }
  });
  std::string metrics = "chain,step,mse\n";
  std::string latents;
  Json chains = Json::array();
  Summary summary;
  int within = 0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const Item& it = items[k];
    Json c{{"index", k}, {"ok", it.ok}};
    if (!it.ok) {
      c["error"] = it.error;
      outcome.diverged = outcome.diverged || it.diverged;
      chains.push_back(c);
      continue;
    }
    for (std::size_t s = 0; s < it.res.mse.size(); ++s)
      metrics += std::to_string(k) + ',' + std::to_string(s) + ',' + num(it.res.mse[s]) + '\n';
    latents += format_vector(it.res.z) + '\n';
    const double ratio = it.res.mse.front() > 0.0 ? it.res.mse.back() / it.res.mse.front() : 0.0;
    c["mse_initial"] = it.res.mse.front();
    c["mse_final"] = it.res.mse.back();
    c["ratio"] = ratio;
    c["steps"] = it.res.steps_taken;
    if (cfg.checks.design_max_ratio && ratio <= *cfg.checks.design_max_ratio) ++within;
    chains.push_back(c);
  }
  write_text(dir / "metrics.csv", metrics);
  write_text(dir / "latents.txt", latents);
  if (cfg.checks.design_max_ratio)
    summary.add("design_ratio", within == cfg.chains,
                Json{{"within", within}, {"chains", cfg.chains}, {"max_ratio", *cfg.checks.design_max_ratio}});
  manifest["chains"] = chains;
  manifest["checks"] = summary.checks;
  manifest["artifacts"] = Json::array({"metrics.csv", "latents.txt", "manifest.json"});
  outcome.checks_passed = summary.passed;
  return outcome;
}

RunOutcome run_training(const RunConfig& cfg, const fs::path& dir, Json& manifest) {
  const TrainSettings& ts = *cfg.train;
  RunOutcome outcome;
  if (cfg.sampler.schedule.T < 1) throw ConfigError("train-score needs a schedule with T >= 1");
  Rng rng(derive_seed(cfg.seed, 0xda7a));
  const Mat data = sample_analytic(*ts.data, ts.samples, rng);
  try {
    TrainResult res = train_score(data, ts.mlp, cfg.sampler.schedule);
    std::string metrics = "epoch,loss\n";
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
      metrics += std::to_string(e + 1) + ',' + num(res.epoch_loss[e]) + '\n';
    write_text(dir / "metrics.csv", metrics);
    write_json_file((dir / "score.json").string(), score_to_json(res.field));
    manifest["artifacts"] = Json::array({"metrics.csv", "score.json", "manifest.json"});
    manifest["summary"] = Json{{"epochs", res.epoch_loss.size()},
                               {"final_loss", res.epoch_loss.empty() ? Json(nullptr) : Json(res.epoch_loss.back())}};
  } catch (const DivergenceError& e) {
    outcome.diverged = true;
    manifest["error"] = e.what();
  }
  manifest["checks"] = Json::object();
  return outcome;
}

}  // namespace

RunOutcome run_experiment(const RunConfig& cfg) {
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  const auto start = std::chrono::steady_clock::now();
  Json manifest;
  manifest["manifest_version"] = 1;
  manifest["version"] = kVersion;
  manifest["experiment"] = cfg.experiment;
  manifest["config"] = cfg.resolved;
  manifest["defaults_applied"] = cfg.defaults;
  manifest["notes"] = Json::array();
  Json seeds = Json::array();
  for (int k = 0; k < cfg.chains; ++k) seeds.push_back(derive_seed(cfg.seed, static_cast<std::uint64_t>(k)));
  manifest["chain_seeds"] = seeds;

  RunOutcome outcome;
  if (cfg.train) {
    manifest["kind"] = "train-score";
    outcome = run_training(cfg, dir, manifest);
  } else if (cfg.design) {
    manifest["kind"] = "design";
    outcome = run_design(cfg, dir, manifest);
  } else {
    manifest["kind"] = "sample";
    outcome = run_sampling(cfg, dir, manifest);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["timing"] = Json{{"seconds", seconds}, {"threads", cfg.threads}};
  manifest["checks_passed"] = outcome.checks_passed;
  outcome.exit_code = outcome.diverged ? kExitDivergence : outcome.checks_passed ? kExitOk : kExitAcceptance;
  manifest["exit_code"] = outcome.exit_code;
  write_json_file((dir / "manifest.json").string(), manifest);
  outcome.manifest = std::move(manifest);
  outcome.output_dir = dir.string();
  return outcome;
}

}  // namespace lprox
