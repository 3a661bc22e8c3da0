#include "lprox/dpo.hpp"

#include <csignal>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace lprox {

Vec Simulator::evaluate(const Vec& x) const {
  if (input_dim > 0) require_dim(x, input_dim, "simulator input");
  Vec y = fn(x);
  if (y.size() != response_dim) throw ShapeError("simulator '" + name + "' returned the wrong response size");
  return y;
}

Simulator linear_simulator(const Mat& a) {
  return {"linear", static_cast<int>(a.cols()), static_cast<int>(a.rows()), 1.0, true,
          [a](const Vec& x) -> Vec { return a * x; }};
}

Simulator saturating_simulator(const Mat& a, double scale) {
  if (!(scale > 0.0)) throw ParameterError("scale", "must be positive");
  return {"saturating", static_cast<int>(a.cols()), static_cast<int>(a.rows()), 1.0, true,
          [a, scale](const Vec& x) -> Vec { return scale * (a * x / scale).array().tanh().matrix(); }};
}

Simulator piecewise_simulator(const Mat& a, double slope) {
  return {"piecewise", static_cast<int>(a.cols()), static_cast<int>(a.rows()), 1.0, true,
          [a, slope](const Vec& x) -> Vec {
            Vec u = a * x;
            for (auto& v : u) v = v >= 0.0 ? v : slope * v;
            return u;
          }};
}

Simulator quadratic_simulator(int dim) {
  return {"quadratic", dim, 1, 1.0, true, [](const Vec& x) -> Vec { return Vec::Constant(1, x.squaredNorm()); }};
}

Simulator constant_simulator(const Vec& c, int input_dim) {
  return {"constant", input_dim, static_cast<int>(c.size()), 0.0, true, [c](const Vec&) -> Vec { return c; }};
}

namespace {

struct ChildProcess {
  pid_t pid = -1;
  FILE* to = nullptr;
  FILE* from = nullptr;
  std::mutex mu;

  ~ChildProcess() {
    if (to) std::fclose(to);
    if (from) std::fclose(from);
    if (pid > 0) {
      int status = 0;
      if (waitpid(pid, &status, WNOHANG) == 0) {
        kill(pid, SIGTERM);
        waitpid(pid, &status, 0);
      }
    }
  }
};

std::shared_ptr<ChildProcess> spawn(const std::vector<std::string>& argv) {
  if (argv.empty()) throw ParameterError("command", "process simulator needs a command");
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) throw SimulatorError("pipe() failed", -1);
  const pid_t pid = fork();
  if (pid < 0) throw SimulatorError("fork() failed", -1);
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  auto child = std::make_shared<ChildProcess>();
  child->pid = pid;
  child->to = fdopen(in_pipe[1], "w");
  child->from = fdopen(out_pipe[0], "r");
  return child;
}

}  // namespace

Simulator process_simulator(const std::vector<std::string>& argv, int input_dim, int response_dim) {
  if (response_dim < 1) throw ParameterError("response_dim", "must be >= 1");
  // Writing to a dead child must surface as an error, not kill the process.
  std::signal(SIGPIPE, SIG_IGN);
  auto child = spawn(argv);
  auto fn = [child, response_dim](const Vec& x) -> Vec {
    std::lock_guard<std::mutex> lock(child->mu);
    std::string line;
    char buf[32];
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      std::snprintf(buf, sizeof buf, i ? " %.17g" : "%.17g", x[i]);
      line += buf;
    }
    line += '\n';
    if (std::fputs(line.c_str(), child->to) < 0 || std::fflush(child->to) != 0)
      throw SimulatorError("process simulator: write failed", -1);
    std::string reply;
    int c;
    while ((c = std::fgetc(child->from)) != EOF && c != '\n') reply.push_back(static_cast<char>(c));
    if (c == EOF && reply.empty()) throw SimulatorError("process simulator: no response", -1);
    std::istringstream is(reply);
    Vec y(response_dim);
    for (int i = 0; i < response_dim; ++i)
      if (!(is >> y[i])) throw SimulatorError("process simulator: malformed response '" + reply + "'", -1);
    return y;
  };
  return {argv.front(), input_dim, response_dim, 100.0, false, fn};
}

std::string to_string(DpoGradMode mode) { return mode == DpoGradMode::chain_rule ? "chain_rule" : "literal"; }

DpoGradMode dpo_grad_mode_from_string(const std::string& name) {
  if (name == "chain_rule") return DpoGradMode::chain_rule;
  if (name == "literal") return DpoGradMode::literal;
  throw ConfigError("unknown dpo gradient mode '" + name + "'");
}

void DpoConfig::validate() const {
  if (!(nu > 0.0) || !std::isfinite(nu)) throw ParameterError("nu", "must be positive");
  if (samples < 1) throw ParameterError("samples", "must be >= 1");
}

namespace {

Vec checked_eval(const Simulator& sim, const Vec& x, long index) {
  Vec y;
  try {
    y = sim.evaluate(x);
  } catch (const SimulatorError& e) {
    throw SimulatorError(e.what(), index);
  }
  if (!y.allFinite()) throw SimulatorError("simulator '" + sim.name + "' returned a non-finite response", index);
  return y;
}

Mat sum_in_order(std::vector<Mat>& terms) { return pairwise_sum(std::span<const Mat>(terms)); }

// Mean as first + pairwise_sum(term - first) / M; exact when all terms agree.
Vec shifted_mean(const std::vector<Mat>& terms) {
  const Mat first = terms.front();
  std::vector<Mat> diffs(terms.size());
  for (std::size_t k = 0; k < terms.size(); ++k) diffs[k] = terms[k] - first;
  return first + sum_in_order(diffs) / static_cast<double>(terms.size());
}

}  // namespace

SmoothedEstimate smoothed_estimate(const Simulator& sim, const Vec& x, const DpoConfig& cfg) {
  cfg.validate();
  if (!x.allFinite()) throw NumericError("smoothed_estimate: non-finite input");
  Rng rng(cfg.seed);
  const auto m = static_cast<std::size_t>(cfg.samples);
  std::vector<Vec> eps(m);
  for (auto& e : eps) e = rng.normal_vec(x.size());

  std::vector<Mat> values(m), grads(m);
  const Vec base = cfg.baseline ? checked_eval(sim, x, -1) : Vec::Zero(sim.response_dim);
  for (std::size_t k = 0; k < m; ++k) {
    const Vec y = checked_eval(sim, x + cfg.nu * eps[k], static_cast<long>(k));
    values[k] = y;
    grads[k] = (y - base) * eps[k].transpose();
  }
  const double inv_m = 1.0 / static_cast<double>(cfg.samples);
  SmoothedEstimate out;
  out.value = shifted_mean(values);
  out.jacobian = sum_in_order(grads) * (cfg.absorb_nu ? inv_m : inv_m / cfg.nu);
  return out;
}

Vec smoothed_value(const Simulator& sim, const Vec& x, const DpoConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto m = static_cast<std::size_t>(cfg.samples);
  std::vector<Mat> values(m);
  for (std::size_t k = 0; k < m; ++k) {
    const Vec e = rng.normal_vec(x.size());
    values[k] = checked_eval(sim, x + cfg.nu * e, static_cast<long>(k));
  }
  return shifted_mean(values);
}

Mat smoothed_grad(const Simulator& sim, const Vec& x, const DpoConfig& cfg) {
  return smoothed_estimate(sim, x, cfg).jacobian;
}

Vec dpo_loss_grad(const Simulator& sim, const Vec& x, const DpoConfig& cfg) {
  if (cfg.target.size() != sim.response_dim)
    throw ParameterError("target", "dimension must equal the simulator response dimension");
  if (cfg.mode == DpoGradMode::literal) {
    if (sim.response_dim != x.size())
      throw ParameterError("mode", "literal residual needs response_dim equal to the input dimension");
    return smoothed_value(sim, x, cfg) - cfg.target;
  }
  const SmoothedEstimate est = smoothed_estimate(sim, x, cfg);
  return est.jacobian.transpose() * (est.value - cfg.target);
}

double tracking_mse(const Simulator& sim, const Vec& x, const Vec& target) {
  const Vec y = checked_eval(sim, x, -1);
  if (y.size() != target.size()) throw ParameterError("target", "dimension mismatch");
  return (y - target).squaredNorm() / static_cast<double>(y.size());
}

DesignResult design_loop(const Vec& z0, const DecoderMap& decoder, const Simulator& sim, const DpoConfig& cfg,
                         int steps, double step_size, double tolerance) {
  if (steps < 1) throw ParameterError("steps", "must be >= 1");
  if (!(step_size > 0.0)) throw ParameterError("step_size", "must be positive");
  cfg.validate();
  DesignResult out;
  out.z = z0;
  out.mse.push_back(tracking_mse(sim, decoder.decode(z0), cfg.target));
  for (int k = 0; k < steps; ++k) {
    if (out.mse.back() < tolerance) break;
    DpoConfig step_cfg = cfg;
    step_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k));
    const Vec x = decoder.decode(out.z);
    const Vec d = dpo_loss_grad(sim, x, step_cfg);
    out.z -= step_size * decoder.vjp(out.z, d);
    if (!out.z.allFinite()) throw DivergenceError("design_loop: latent became non-finite", k + 1);
    out.mse.push_back(tracking_mse(sim, decoder.decode(out.z), cfg.target));
    if (!std::isfinite(out.mse.back())) throw DivergenceError("design_loop: tracking error overflowed", k + 1);
    out.steps_taken = k + 1;
  }
  return out;
}

}  // namespace lprox
