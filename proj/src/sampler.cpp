#include "lprox/sampler.hpp"

#include <cmath>

namespace lprox {

std::string to_string(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::unconstrained: return "unconstrained";
    case SamplerMode::projected_ambient: return "projected_ambient";
    case SamplerMode::proximal_latent: return "proximal_latent";
  }
  return "?";
}

std::string to_string(InnerSolver solver) {
  switch (solver) {
    case InnerSolver::closed_form: return "closed_form";
    case InnerSolver::alm: return "alm";
    case InnerSolver::dpo: return "dpo";
  }
  return "?";
}

std::string to_string(RecordMode mode) {
  switch (mode) {
    case RecordMode::full: return "full";
    case RecordMode::levels: return "levels";
    case RecordMode::final_only: return "final";
  }
  return "?";
}

std::string to_string(Phase phase) { return phase == Phase::langevin ? "langevin" : "correction"; }

SamplerMode sampler_mode_from_string(const std::string& name) {
  for (auto m : {SamplerMode::unconstrained, SamplerMode::projected_ambient, SamplerMode::proximal_latent})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown sampler mode '" + name + "'");
}

InnerSolver inner_solver_from_string(const std::string& name) {
  for (auto s : {InnerSolver::closed_form, InnerSolver::alm, InnerSolver::dpo})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown inner solver '" + name + "'");
}

RecordMode record_mode_from_string(const std::string& name) {
  for (auto m : {RecordMode::full, RecordMode::levels, RecordMode::final_only})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown record mode '" + name + "'");
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

int SamplerConfig::latent_dim() const {
  if (decoder) return decoder->latent_dim();
  return score ? score->dim() : 0;
}

double SamplerConfig::resolved_lr() const {
  if (lr) return *lr;
  if (!decoder) return 0.5;
  double ell = 0.0;
  if (decoder->lipschitz_bound()) {
    ell = *decoder->lipschitz_bound();
  } else if (decoder->kind() == DecoderKind::linear) {
    ell = Eigen::JacobiSVD<Mat>(decoder->w1()).singularValues()(0);
  } else {
    throw ConfigError("decoder has no Lipschitz bound; estimate one or set lr explicitly");
  }
  if (!(ell > 0.0)) throw ConfigError("decoder Lipschitz bound must be positive");
  return 0.5 / (ell * ell);
}

void SamplerConfig::validate() const {
  schedule.validate();
  if (!score) throw ConfigError("sampler needs a score field");
  if (schedule.T > 0) {
    if (!score->bound() || static_cast<int>(score->abar().size()) != schedule.T + 1)
      throw ConfigError("score field is not bound to the sampler schedule");
  }
  if (decoder && decoder->latent_dim() != score->dim())
    throw ConfigError("score dimension does not match the decoder latent dimension");
  if (lr && !(*lr > 0.0)) throw ParameterError("lr", "must be positive");
  if (inner_cap < 1) throw ParameterError("inner_cap", "must be >= 1");
  if (constraint) constraint->validate();

  switch (mode) {
    case SamplerMode::unconstrained: break;
    case SamplerMode::projected_ambient:
      if (decoder) throw ConfigError("projected_ambient runs on the ambient space; drop the decoder");
      if (!constraint) throw ConfigError("projected_ambient needs a constraint");
      if (!constraint->has_exact_projection())
        throw ConfigError("projected_ambient needs a constraint with an exact projection, got " +
                          to_string(constraint->kind));
      break;
    case SamplerMode::proximal_latent:
      if (!decoder) throw ConfigError("proximal_latent needs a decoder");
      switch (solver) {
        case InnerSolver::closed_form:
          if (!constraint || !constraint->has_exact_projection())
            throw ConfigError("closed_form solver needs a constraint with an exact projection");
          break;
        case InnerSolver::alm:
          if (!constraint) throw ConfigError("alm solver needs a constraint");
          if (constraint->kind == ConstraintKind::porosity)
            throw ConfigError("porosity constraints use the closed_form solver");
          alm.validate();
          break;
        case InnerSolver::dpo:
          if (!dpo || !dpo->simulator) throw ConfigError("dpo solver needs a simulator");
          if (constraint && constraint->kind == ConstraintKind::porosity)
            throw ConfigError("porosity constraints use the closed_form solver");
          dpo->config.validate();
          if (dpo->config.target.size() != dpo->simulator->response_dim)
            throw ParameterError("target", "dimension must equal the simulator response dimension");
          break;
      }
      (void)resolved_lr();
      break;
  }
}

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

namespace {

Vec step_with_score(const Vec& z, const Vec& s, double gamma, Rng& rng, bool drift_only) {
  const Vec eps = rng.normal_vec(z.size());
  Vec out = z + gamma * s;
  if (!drift_only) out += std::sqrt(2.0 * gamma) * eps;
  return out;
}

}  // namespace

Vec langevin_step(const Vec& z, const ScoreField& score, int t, double gamma, Rng& rng, bool drift_only) {
  if (!(gamma > 0.0)) throw ParameterError("gamma", "must be positive");
  const Vec out = step_with_score(z, score.score(z, t), gamma, rng, drift_only);
  if (!out.allFinite()) throw DivergenceError("langevin_step produced a non-finite state", t);
  return out;
}

Vec finalize_with_projection(const Vec& z0, const DecoderMap& decoder, const ConstraintSpec& constraint) {
  if (!constraint.has_exact_projection())
    throw ConfigError("final projection needs an exact projection, got " + to_string(constraint.kind));
  return project_exact(constraint, decoder.decode(z0));
}

namespace {

class ChainRunner {
 public:
  ChainRunner(const SamplerConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng) {
    if (cfg.mode == SamplerMode::proximal_latent) lr_ = cfg.resolved_lr();
    if (cfg.dpo) {
      dpo_ = cfg.dpo->config;
      sim_ = cfg.dpo->simulator.get();
    }
  }

  SampleTrace run() {
    const int n = cfg_.latent_dim();
    tr_.root_seed = cfg_.seed;
    tr_.chain_seed = rng_.seed();
    Vec z = rng_.normal_vec(n);
    tr_.initial_latent = z;
    tr_.initial_distance = measure(decode(z)).second;

    const NoiseSchedule& sch = cfg_.schedule;
    for (int t = sch.T; t >= 1; --t) {
      const double gamma = sch.step_size(t);
      LevelRecord lv;
      lv.level = t;
      lv.gamma = gamma;
      TraceRow last;
      for (int i = 1; i <= sch.inner_steps; ++i) {
        const Vec s = cfg_.score->score(z, t - 1);
        const double snorm = s.norm();
        lv.max_score_norm = std::max(lv.max_score_norm, snorm);
        z = step_with_score(z, s, gamma, rng_, cfg_.drift_only);
        if (!z.allFinite()) throw DivergenceError("chain diverged during Langevin step", tr_.langevin_steps + 1);
        if (cfg_.mode == SamplerMode::projected_ambient) z = project_exact(*cfg_.constraint, z);
        ++tr_.langevin_steps;
        last = row(t, i, Phase::langevin, z, gamma, 0, snorm);
        push(last);
        if (cfg_.correct_every_step && cfg_.mode == SamplerMode::proximal_latent && i < sch.inner_steps) {
          const int used = correct(z, t, gamma, lv, last);
          lv.corrections += used;
        }
      }
      lv.pre_latent = z;
      lv.pre_distance = last.distance;
      if (cfg_.mode == SamplerMode::proximal_latent) lv.corrections += correct(z, t, gamma, lv, last);
      lv.post_latent = z;
      lv.post_distance = measure(decode(z)).second;
      tr_.max_score_norm = std::max(tr_.max_score_norm, lv.max_score_norm);
      if (lv.shortfall) ++tr_.shortfalls;
      tr_.levels.push_back(std::move(lv));
      last.level_end = true;
      if (cfg_.record == RecordMode::full && !tr_.rows.empty()) tr_.rows.back().level_end = true;
      if (cfg_.record == RecordMode::levels) tr_.rows.push_back(last);
    }

    tr_.final_latent = z;
    Vec x = decode(z);
    if (cfg_.final_projection && cfg_.constraint && cfg_.mode == SamplerMode::proximal_latent &&
        cfg_.constraint->has_exact_projection()) {
      x = project_exact(*cfg_.constraint, x);
      tr_.final_projected = true;
    }
    tr_.final_ambient = x;
    tr_.final_violation = measure(x).first;
    return std::move(tr_);
  }

 private:
  Vec decode(const Vec& z) const { return cfg_.decoder ? cfg_.decoder->decode(z) : z; }

  // (violation, distance) of an ambient point.
  std::pair<double, double> measure(const Vec& x) const {
    if (cfg_.mode == SamplerMode::proximal_latent && cfg_.solver == InnerSolver::dpo && sim_) {
      const double mse = tracking_mse(*sim_, x, dpo_.target);
      return {mse, mse};
    }
    if (!cfg_.constraint) return {0.0, 0.0};
    return {violation(*cfg_.constraint, x), distance(*cfg_.constraint, x)};
  }

  double stop_tolerance() const {
    if (cfg_.solver == InnerSolver::dpo) return cfg_.dpo->tolerance;
    return cfg_.constraint->tolerance;
  }

  TraceRow row(int level, int step, Phase phase, const Vec& z, double gamma, int iterations, double snorm) {
    TraceRow r;
    r.level = level;
    r.step = step;
    r.phase = phase;
    r.z = z;
    r.x = decode(z);
    const auto [v, d] = measure(r.x);
    r.violation = v;
    r.distance = d;
    r.gamma = gamma;
    r.iterations = iterations;
    r.score_norm = snorm;
    return r;
  }

  void push(const TraceRow& r) {
    if (cfg_.record == RecordMode::full) tr_.rows.push_back(r);
  }

  // Ambient-space gradient of the correction objective at x.
  Vec correction_gradient(const Vec& x, const Vec& anchor) {
    switch (cfg_.solver) {
      case InnerSolver::closed_form: return x - project_exact(*cfg_.constraint, x);
      case InnerSolver::alm: {
        const SmoothViolation g = as_smooth_violation(*cfg_.constraint);
        try {
          return x - alm_project(x, g, cfg_.alm).y;
        } catch (const AlmError& e) {
          return x - e.best;
        }
      }
      case InnerSolver::dpo: {
        DpoConfig c = dpo_;
        c.seed = derive_seed(dpo_.seed, static_cast<std::uint64_t>(dpo_calls_++));
        Vec grad = dpo_loss_grad(*sim_, x, c);
        return grad + (x - anchor) / cfg_.dpo->lambda;
      }
    }
    return Vec::Zero(x.size());
  }

  // Algorithm-1 style correction loop; returns iterations used.
  int correct(Vec& z, int level, double gamma, LevelRecord& lv, TraceRow& last) {
    Vec x = decode(z);
    if (cfg_.constraint && cfg_.constraint->kind == ConstraintKind::surrogate_centroid &&
        cfg_.constraint->gate_on_trigger && !centroid_trigger(*cfg_.constraint->centroid, x))
      return 0;
    const Vec anchor = x;
    const double tol = stop_tolerance();
    double g = measure(x).first;
    int used = 0;
    while (g >= tol && used < cfg_.inner_cap) {
      const Vec grad = correction_gradient(x, anchor);
      z -= lr_ * cfg_.decoder->vjp(z, grad);
      if (!z.allFinite()) throw DivergenceError("chain diverged during correction", tr_.correction_steps + 1);
      ++used;
      ++tr_.correction_steps;
      last = row(level, used, Phase::correction, z, gamma, used, 0.0);
      push(last);
      x = last.x;
      g = last.violation;
    }
    if (g >= tol) lv.shortfall = true;
    return used;
  }

  const SamplerConfig& cfg_;
  Rng& rng_;
  SampleTrace tr_;
  double lr_ = 0.0;
  DpoConfig dpo_;
  const Simulator* sim_ = nullptr;
  long dpo_calls_ = 0;
};

}  // namespace

SampleTrace sample(const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  return ChainRunner(cfg, rng).run();
}

SampleTrace sample_unconstrained(const SamplerConfig& cfg, Rng& rng) {
  if (cfg.mode != SamplerMode::unconstrained) throw ConfigError("sample_unconstrained needs mode unconstrained");
  return sample(cfg, rng);
}

SampleTrace sample_projected_ambient(const SamplerConfig& cfg, Rng& rng) {
  if (cfg.mode != SamplerMode::projected_ambient)
    throw ConfigError("sample_projected_ambient needs mode projected_ambient");
  return sample(cfg, rng);
}

SampleTrace sample_proximal_latent(const SamplerConfig& cfg, Rng& rng) {
  if (cfg.mode != SamplerMode::proximal_latent) throw ConfigError("sample_proximal_latent needs mode proximal_latent");
  return sample(cfg, rng);
}

SampleTrace sample_chain(const SamplerConfig& cfg, std::uint64_t chain) {
  Rng rng(derive_seed(cfg.seed, chain));
  SampleTrace tr = sample(cfg, rng);
  tr.chain_index = chain;
  return tr;
}

}  // namespace lprox
