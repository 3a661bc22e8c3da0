#include "lprox/config.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

namespace lprox {

// ---------------------------------------------------------------------------
// Simulator registry
// ---------------------------------------------------------------------------

namespace {

std::mutex& registry_mutex() {
  static std::mutex mu;
  return mu;
}

std::map<std::string, SimulatorFactory>& registry() {
  static std::map<std::string, SimulatorFactory> r = {
      {"linear", [](const Json& p) { return linear_simulator(mat_from_json(p.at("matrix"), "matrix")); }},
      {"saturating",
       [](const Json& p) {
         return saturating_simulator(mat_from_json(p.at("matrix"), "matrix"), p.at("scale").get<double>());
       }},
      {"piecewise",
       [](const Json& p) {
         return piecewise_simulator(mat_from_json(p.at("matrix"), "matrix"), p.value("slope", 0.25));
       }},
      {"quadratic", [](const Json& p) { return quadratic_simulator(p.at("dim").get<int>()); }},
      {"process",
       [](const Json& p) {
         return process_simulator(p.at("command").get<std::vector<std::string>>(), p.value("input_dim", 0),
                                  p.at("response_dim").get<int>());
       }},
  };
  return r;
}

}  // namespace

void register_simulator(const std::string& name, SimulatorFactory factory) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::vector<std::string> simulator_names() {
  std::lock_guard<std::mutex> lock(registry_mutex());
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

Simulator make_simulator(const Json& spec) {
  if (!spec.is_object() || !spec.contains("name")) throw ConfigError("simulator: expected an object with a name");
  const std::string name = spec.at("name").get<std::string>();
  SimulatorFactory f;
  {
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(name);
    if (it == registry().end()) throw ConfigError("unknown simulator '" + name + "'");
    f = it->second;
  }
  try {
    return f(spec);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("simulator '" + name + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Strict document reading
// ---------------------------------------------------------------------------

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError((path.empty() ? "document" : path) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) continue;
    std::string best;
    int best_d = 1 << 30;
    for (const char* a : allowed) {
      const int d = edit_distance(key, a);
      if (d < best_d) {
        best_d = d;
        best = a;
      }
    }
    std::string msg = "unknown key '" + join(path, key) + "'";
    if (!best.empty() && best_d <= std::max<int>(2, static_cast<int>(key.size()) / 3))
      msg += "; did you mean '" + best + "'?";
    throw ConfigError(msg);
  }
}

class Reader {
 public:
  Reader(std::uint64_t root, std::vector<std::string>& defaults) : root_(root), defaults_(defaults) {}

  template <typename T>
  T req(const Json& j, Json& out, const std::string& path, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("missing required key '" + join(path, key) + "'");
    T v = as<T>(j.at(key), join(path, key));
    out[key] = j.at(key);
    return v;
  }

  template <typename T>
  T opt(const Json& j, Json& out, const std::string& path, const std::string& key, T fallback) {
    if (j.contains(key) && !j.at(key).is_null()) {
      T v = as<T>(j.at(key), join(path, key));
      out[key] = j.at(key);
      return v;
    }
    out[key] = fallback;
    defaults_.push_back(join(path, key));
    return fallback;
  }

  template <typename T>
  T as(const Json& v, const std::string& path) {
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path + ": wrong value type (" + std::string(v.type_name()) + ")");
    }
  }

  Mat matrix(const Json& v, const std::string& path) {
    if (v.is_array()) return mat_from_json(v, path);
    if (!v.is_object() || !v.contains("generate")) throw ConfigError(path + ": expected a matrix or a generator");
    check_keys(v, path, {"generate", "rows", "cols", "seed", "scale"});
    const std::string kind = as<std::string>(v.at("generate"), path + ".generate");
    const int rows = as<int>(v.at("rows"), path + ".rows");
    const int cols = as<int>(v.at("cols"), path + ".cols");
    if (rows < 1 || cols < 1) throw ConfigError(path + ": rows and cols must be >= 1");
    const double scale = v.contains("scale") ? as<double>(v.at("scale"), path + ".scale") : 1.0;
    const std::uint64_t seed = v.contains("seed") ? as<std::uint64_t>(v.at("seed"), path + ".seed") : 0;
    Rng rng(derive_seed(seed, 0x6d6174));
    Mat m(rows, cols);
    if (kind == "identity") {
      m = Mat::Identity(rows, cols);
    } else if (kind == "gaussian") {
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
    } else if (kind == "orthonormal") {
      Mat g(std::max(rows, cols), std::min(rows, cols));
      for (Eigen::Index c = 0; c < g.cols(); ++c)
        for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
      const Eigen::HouseholderQR<Mat> qr(g);
      Mat q = qr.householderQ() * Mat::Identity(g.rows(), g.cols());
      // Fix signs so the factorization is unique.
      const Mat rdiag = qr.matrixQR().diagonal();
      for (Eigen::Index c = 0; c < q.cols(); ++c)
        if (rdiag(c) < 0.0) q.col(c) = -q.col(c);
      m = rows >= cols ? q : Mat(q.transpose());
    } else {
      throw ConfigError(path + ": unknown generator '" + kind + "'");
    }
    return scale * m;
  }

  Vec vector(const Json& v, const std::string& path) {
    if (v.is_array()) return vec_from_json(v, path);
    if (!v.is_object() || !v.contains("generate")) throw ConfigError(path + ": expected a vector or a generator");
    check_keys(v, path, {"generate", "size", "seed", "scale", "value"});
    const std::string kind = as<std::string>(v.at("generate"), path + ".generate");
    const int size = as<int>(v.at("size"), path + ".size");
    if (size < 1) throw ConfigError(path + ": size must be >= 1");
    if (kind == "constant") return Vec::Constant(size, v.contains("value") ? as<double>(v.at("value"), path) : 0.0);
    if (kind == "gaussian") {
      const std::uint64_t seed = v.contains("seed") ? as<std::uint64_t>(v.at("seed"), path + ".seed") : 0;
      Rng rng(derive_seed(seed, 0x766563));
      return (v.contains("scale") ? as<double>(v.at("scale"), path) : 1.0) * rng.normal_vec(size);
    }
    throw ConfigError(path + ": unknown generator '" + kind + "'");
  }

  Mat req_matrix(const Json& j, Json& out, const std::string& path, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("missing required key '" + join(path, key) + "'");
    Mat m = matrix(j.at(key), join(path, key));
    out[key] = mat_to_json(m);
    return m;
  }

  Vec req_vector(const Json& j, Json& out, const std::string& path, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("missing required key '" + join(path, key) + "'");
    Vec v = vector(j.at(key), join(path, key));
    out[key] = vec_to_json(v);
    return v;
  }

  Vec opt_vector(const Json& j, Json& out, const std::string& path, const std::string& key, const Vec& fallback) {
    if (j.contains(key) && !j.at(key).is_null()) return req_vector(j, out, path, key);
    out[key] = vec_to_json(fallback);
    defaults_.push_back(join(path, key));
    return fallback;
  }

  std::uint64_t root() const { return root_; }
  std::vector<std::string>& defaults() { return defaults_; }

 private:
  std::uint64_t root_;
  std::vector<std::string>& defaults_;
};

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

NoiseSchedule read_schedule(Reader& rd, const Json& j, Json& out) {
  const std::string p = "schedule";
  check_keys(j, p, {"T", "abar", "gamma", "inner_steps"});
  const int T = rd.req<int>(j, out, p, "T");
  const auto abar = rd.opt<std::vector<double>>(j, out, p, "abar", {1.0, 0.01});
  const auto gamma = rd.req<std::vector<double>>(j, out, p, "gamma");
  const int m = rd.opt<int>(j, out, p, "inner_steps", 1);
  if (abar.size() != 2) throw ConfigError("schedule.abar: expected [start, end]");
  if (gamma.size() != 2) throw ConfigError("schedule.gamma: expected [max, min]");
  try {
    if (T == 0) {
      NoiseSchedule s;
      s.inner_steps = m;
      s.validate();
      return s;
    }
    return make_schedule(T, abar[0], abar[1], gamma[0], gamma[1], m);
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
}

ScoreField read_score_body(Reader& rd, const Json& j, const std::string& p) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError(p + ": expected an object with a kind");
  Json scratch;
  if (j.contains("file")) {
    check_keys(j, p, {"kind", "file"});
    ScoreField f = score_from_json(read_json_file(j.at("file").get<std::string>()));
    if (to_string(f.kind()) != j.at("kind").get<std::string>()) throw ConfigError(p + ": kind does not match file");
    return f;
  }
  const ScoreKind kind = score_kind_from_string(rd.as<std::string>(j.at("kind"), p + ".kind"));
  try {
    switch (kind) {
      case ScoreKind::gaussian_mixture: {
        check_keys(j, p, {"kind", "dim", "components"});
        std::vector<GaussianComponent> comps;
        const Json& cs = j.at("components");
        if (!cs.is_array()) throw ConfigError(p + ".components: expected an array");
        for (std::size_t i = 0; i < cs.size(); ++i) {
          const std::string cp = p + ".components[" + std::to_string(i) + "]";
          check_keys(cs[i], cp, {"weight", "mean", "cov"});
          GaussianComponent c;
          c.weight = rd.as<double>(cs[i].at("weight"), cp + ".weight");
          c.mean = rd.vector(cs[i].at("mean"), cp + ".mean");
          const Json& cov = cs[i].at("cov");
          c.cov = cov.is_number() ? Mat(cov.get<double>() * Mat::Identity(c.mean.size(), c.mean.size()))
                                  : rd.matrix(cov, cp + ".cov");
          comps.push_back(std::move(c));
        }
        return ScoreField::gaussian_mixture(std::move(comps));
      }
      case ScoreKind::linear_gaussian: {
        check_keys(j, p, {"kind", "dim", "factor", "offset"});
        return ScoreField::linear_gaussian(rd.matrix(j.at("factor"), p + ".factor"),
                                           rd.vector(j.at("offset"), p + ".offset"));
      }
      case ScoreKind::mlp:
        check_keys(j, p, {"kind", "dim", "activation", "w1", "b1", "w2", "b2", "w3", "b3"});
        return score_from_json(j);
    }
  } catch (const ParameterError& e) {
    throw ConfigError(p + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(p + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(p + ": " + e.what());
  }
  throw ConfigError(p + ": unsupported kind");
}

DecoderMap read_decoder(Reader& rd, const Json& j, Json& out) {
  const std::string p = "decoder";
  check_keys(j, p, {"kind", "weight", "bias", "dim", "w1", "b1", "w2", "b2", "latent_dim", "ambient_dim",
                    "lipschitz_bound", "lipschitz_probes", "lipschitz_seed"});
  const std::string kind = rd.as<std::string>(j.at("kind"), p + ".kind");
  Json scratch;
  DecoderMap d;
  try {
    if (kind == "identity") {
      d = DecoderMap::identity(rd.req<int>(j, scratch, p, "dim"));
    } else if (kind == "linear") {
      const Mat w = rd.req_matrix(j, scratch, p, "weight");
      const Vec b = j.contains("bias") ? rd.req_vector(j, scratch, p, "bias") : Vec(Vec::Zero(w.rows()));
      d = DecoderMap::linear(w, b);
    } else if (kind == "smooth_mlp") {
      const Mat w1 = rd.req_matrix(j, scratch, p, "w1");
      const Mat w2 = rd.req_matrix(j, scratch, p, "w2");
      const Vec b1 = j.contains("b1") ? rd.req_vector(j, scratch, p, "b1") : Vec(Vec::Zero(w1.rows()));
      const Vec b2 = j.contains("b2") ? rd.req_vector(j, scratch, p, "b2") : Vec(Vec::Zero(w2.rows()));
      d = DecoderMap::smooth_mlp(w1, b1, w2, b2);
    } else {
      throw ConfigError(p + ".kind: unknown decoder kind '" + kind + "'");
    }
  } catch (const ParameterError& e) {
    throw ConfigError(p + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(p + ": " + e.what());
  }
  if (j.contains("lipschitz_bound") && !j.at("lipschitz_bound").is_null()) {
    d.set_lipschitz(rd.as<double>(j.at("lipschitz_bound"), p + ".lipschitz_bound"),
                    j.contains("lipschitz_probes") ? rd.as<int>(j.at("lipschitz_probes"), p) : 0);
  } else {
    const int probes = j.contains("lipschitz_probes") ? rd.as<int>(j.at("lipschitz_probes"), p) : 64;
    const std::uint64_t seed = j.contains("lipschitz_seed") ? rd.as<std::uint64_t>(j.at("lipschitz_seed"), p)
                                                            : derive_seed(rd.root(), 0x11b);
    Rng rng(seed);
    d.set_lipschitz(estimate_lipschitz(d, probes, rng), probes);
    rd.defaults().push_back(p + ".lipschitz_bound");
  }
  out = decoder_to_json(d);
  return d;
}

SmoothViolation read_custom(Reader& rd, const Json& j, const std::string& p, Json& out) {
  const std::string fn = rd.req<std::string>(j, out, p, "function");
  if (fn == "hyperplane")
    return hyperplane_violation(rd.req_vector(j, out, p, "normal"), rd.req<double>(j, out, p, "offset"));
  if (fn == "halfspace")
    return halfspace_violation(rd.req_vector(j, out, p, "normal"), rd.req<double>(j, out, p, "offset"));
  if (fn == "ball") return ball_violation(rd.req_vector(j, out, p, "center"), rd.req<double>(j, out, p, "radius"));
  if (fn == "quadratic") return quadratic_violation(rd.req<int>(j, out, p, "dim"));
  if (fn == "zero") return zero_violation();
  throw ConfigError(p + ".function: unknown function '" + fn + "'");
}

CentroidModel read_centroid_fit(Reader& rd, const Json& j, const std::string& p, double trigger) {
  check_keys(j, p, {"feature_map", "target_mean", "forbidden_mean", "spread", "samples", "seed"});
  Json scratch;
  const Mat fmap = rd.req_matrix(j, scratch, p, "feature_map");
  const Vec tm = rd.req_vector(j, scratch, p, "target_mean");
  const Vec fm = rd.req_vector(j, scratch, p, "forbidden_mean");
  if (tm.size() != fmap.rows() || fm.size() != fmap.rows())
    throw ConfigError(p + ": cluster means must live in the feature space");
  const double spread = rd.req<double>(j, scratch, p, "spread");
  const int n = rd.req<int>(j, scratch, p, "samples");
  const std::uint64_t seed = j.contains("seed") ? rd.as<std::uint64_t>(j.at("seed"), p + ".seed") : 0;
  Rng rng(derive_seed(seed, 0xc1));
  Mat a(tm.size(), n), b(fm.size(), n);
  for (int i = 0; i < n; ++i) a.col(i) = tm + spread * rng.normal_vec(tm.size());
  for (int i = 0; i < n; ++i) b.col(i) = fm + spread * rng.normal_vec(fm.size());
  CentroidModel m = fit_centroid_model(a, b, trigger, seed);
  m.feature_map = fmap;
  return m;
}

ConstraintSpec read_constraint(Reader& rd, const Json& j, Json& out) {
  const std::string p = "constraint";
  check_keys(j, p, {"kind", "tolerance", "prox_weight", "prox_regularity", "smoothness", "normal", "offset",
                    "center", "radius", "lower", "upper", "dim", "rows", "cols", "target", "fraction", "margin",
                    "model", "fit", "acceptance_radius", "gate_on_trigger", "trigger", "function"});
  const std::string kind_name = rd.req<std::string>(j, out, p, "kind");
  ConstraintSpec s;
  try {
    if (kind_name == "vacuous") {
      const int dim = rd.req<int>(j, out, p, "dim");
      s = ConstraintSpec::vacuous(dim);
    } else {
      switch (constraint_kind_from_string(kind_name)) {
        case ConstraintKind::halfspace:
          s.kind = ConstraintKind::halfspace;
          s.normal = rd.req_vector(j, out, p, "normal");
          s.offset = rd.req<double>(j, out, p, "offset");
          break;
        case ConstraintKind::l2_ball:
          s.kind = ConstraintKind::l2_ball;
          s.radius = rd.req<double>(j, out, p, "radius");
          s.center = rd.req_vector(j, out, p, "center");
          break;
        case ConstraintKind::box:
          s.kind = ConstraintKind::box;
          s.lower = rd.req_vector(j, out, p, "lower");
          s.upper = rd.req_vector(j, out, p, "upper");
          break;
        case ConstraintKind::porosity: {
          s.kind = ConstraintKind::porosity;
          s.rows = rd.req<int>(j, out, p, "rows");
          s.cols = rd.req<int>(j, out, p, "cols");
          if (j.contains("target")) {
            s.porosity_target = rd.req<int>(j, out, p, "target");
            if (j.contains("fraction")) out["fraction"] = j.at("fraction");
          } else if (j.contains("fraction")) {
            const double f = rd.req<double>(j, out, p, "fraction");
            s.porosity_target = porosity_target_from_fraction(f, s.rows * s.cols);
            out["target"] = s.porosity_target;
            rd.defaults().push_back(p + ".target");
          } else {
            throw ConfigError("porosity constraint needs 'target' or 'fraction'");
          }
          s.margin = rd.opt<double>(j, out, p, "margin", 1e-3);
          s.tolerance = 0.5;
          break;
        }
        case ConstraintKind::surrogate_centroid: {
          s.kind = ConstraintKind::surrogate_centroid;
          const double trigger = rd.opt<double>(j, out, p, "trigger", 0.5);
          CentroidModel m;
          if (j.contains("model")) {
            m = centroid_from_json(j.at("model"));
            m.trigger = trigger;
          } else if (j.contains("fit")) {
            m = read_centroid_fit(rd, j.at("fit"), p + ".fit", trigger);
          } else {
            throw ConfigError("surrogate_centroid needs 'model' or 'fit'");
          }
          out["model"] = centroid_to_json(m);
          s.centroid = std::make_shared<const CentroidModel>(std::move(m));
          s.acceptance_radius = rd.opt<double>(j, out, p, "acceptance_radius", 0.0);
          s.gate_on_trigger = rd.opt<bool>(j, out, p, "gate_on_trigger", true);
          s.tolerance = 1e-3;
          break;
        }
        case ConstraintKind::custom_g:
          s.kind = ConstraintKind::custom_g;
          s.custom = read_custom(rd, j, p, out);
          break;
      }
    }
    s.tolerance = rd.opt<double>(j, out, p, "tolerance", s.tolerance);
    s.prox_weight = rd.opt<double>(j, out, p, "prox_weight", 1.0);
    s.prox_regularity = rd.opt<double>(j, out, p, "prox_regularity", 1.0);
    s.smoothness = rd.opt<double>(j, out, p, "smoothness", 1.0);
    s.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(p + ": " + e.what());
  } catch (const DegeneracyError& e) {
    throw ConfigError(p + ": " + e.what());
  }
  return s;
}

AlmState read_alm(Reader& rd, const Json& j, Json& out, double tolerance) {
  const std::string p = "alm";
  check_keys(j, p, {"multiplier", "penalty", "growth", "penalty_max", "inner_step", "max_inner", "max_outer",
                    "tolerance"});
  AlmState s;
  s.multiplier = rd.opt<double>(j, out, p, "multiplier", s.multiplier);
  s.penalty = rd.opt<double>(j, out, p, "penalty", s.penalty);
  s.growth = rd.opt<double>(j, out, p, "growth", s.growth);
  s.penalty_max = rd.opt<double>(j, out, p, "penalty_max", s.penalty_max);
  s.inner_step = rd.opt<double>(j, out, p, "inner_step", s.inner_step);
  s.max_inner = rd.opt<int>(j, out, p, "max_inner", s.max_inner);
  s.max_outer = rd.opt<int>(j, out, p, "max_outer", s.max_outer);
  s.tolerance = rd.opt<double>(j, out, p, "tolerance", tolerance);
  try {
    s.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(p + ": " + e.what());
  }
  return s;
}

DpoCorrection read_dpo(Reader& rd, const Json& j, Json& out) {
  const std::string p = "dpo";
  check_keys(j, p, {"simulator", "nu", "samples", "seed", "target", "absorb_nu", "baseline", "mode", "tolerance", "lambda"});
  if (!j.contains("simulator")) throw ConfigError("missing required key 'dpo.simulator'");
  Json sim = j.at("simulator");
  if (sim.is_object() && sim.contains("matrix")) sim["matrix"] = mat_to_json(rd.matrix(sim.at("matrix"), p + ".simulator.matrix"));
  out["simulator"] = sim;
  DpoCorrection c;
  c.simulator = std::make_shared<const Simulator>(make_simulator(sim));
  c.config.nu = rd.opt<double>(j, out, p, "nu", 0.1);
  c.config.samples = rd.opt<int>(j, out, p, "samples", 10);
  c.config.seed = rd.opt<std::uint64_t>(j, out, p, "seed", derive_seed(rd.root(), 0xd90));
  c.config.target = rd.req_vector(j, out, p, "target");
  c.config.absorb_nu = rd.opt<bool>(j, out, p, "absorb_nu", false);
  c.config.baseline = rd.opt<bool>(j, out, p, "baseline", true);
  c.config.mode = dpo_grad_mode_from_string(rd.opt<std::string>(j, out, p, "mode", "chain_rule"));
  c.tolerance = rd.opt<double>(j, out, p, "tolerance", 1e-3);
  c.lambda = rd.opt<double>(j, out, p, "lambda", 1.0);
  if (!(c.lambda > 0.0)) throw ConfigError("dpo.lambda: must be positive");
  try {
    c.config.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(p + ": " + e.what());
  }
  if (c.config.target.size() != c.simulator->response_dim)
    throw ConfigError("dpo.target: dimension must equal the simulator response dimension");
  return c;
}

}  // namespace

RunConfig parse_config(const Json& input, const ConfigOverrides& overrides) {
  Json doc = input;
  if (doc.is_object() && doc.contains("manifest_version")) {
    if (!doc.contains("config")) throw ConfigError("manifest has no embedded config");
    doc = Json(doc.at("config"));
  }
  check_keys(doc, "", {"experiment", "seed", "chains", "threads", "output", "record", "schedule", "score",
                       "decoder", "constraint", "sampler", "alm", "dpo", "design", "train", "checks"});
  if (overrides.seed) doc["seed"] = *overrides.seed;
  if (overrides.chains) doc["chains"] = *overrides.chains;
  if (overrides.output) doc["output"] = *overrides.output;
  if (!doc.contains("seed")) throw ConfigError("missing required key 'seed' (runs are never seeded implicitly)");

  RunConfig cfg;
  Json& out = cfg.resolved;
  out = Json::object();
  std::uint64_t seed = 0;
  {
    std::vector<std::string> scratch;
    Reader pre(0, scratch);
    seed = pre.as<std::uint64_t>(doc.at("seed"), "seed");
  }
  Reader rd(seed, cfg.defaults);
  cfg.seed = rd.req<std::uint64_t>(doc, out, "", "seed");
  cfg.experiment = rd.opt<std::string>(doc, out, "", "experiment", "run");
  cfg.chains = rd.opt<int>(doc, out, "", "chains", 1);
  cfg.threads = rd.opt<int>(doc, out, "", "threads", 1);
  cfg.output = rd.opt<std::string>(doc, out, "", "output", "runs/" + cfg.experiment);
  if (cfg.chains < 1) throw ConfigError("chains: must be >= 1");
  if (cfg.threads < 1) throw ConfigError("threads: must be >= 1");
  SamplerConfig& sc = cfg.sampler;
  sc.seed = cfg.seed;
  sc.record = record_mode_from_string(rd.opt<std::string>(doc, out, "", "record", "levels"));

  if (doc.contains("schedule")) sc.schedule = read_schedule(rd, doc.at("schedule"), out["schedule"]);
  if (doc.contains("score")) {
    ScoreField f = read_score_body(rd, doc.at("score"), "score");
    f.bind_schedule(sc.schedule);
    out["score"] = score_to_json(f);
    sc.score = std::make_shared<const ScoreField>(std::move(f));
  }
  if (doc.contains("decoder")) sc.decoder = read_decoder(rd, doc.at("decoder"), out["decoder"]);
  if (doc.contains("constraint")) sc.constraint = read_constraint(rd, doc.at("constraint"), out["constraint"]);

  const Json empty = Json::object();
  {
    const Json& s = doc.contains("sampler") ? doc.at("sampler") : empty;
    const std::string p = "sampler";
    check_keys(s, p, {"mode", "solver", "lr", "inner_cap", "final_projection", "correct_every_step", "drift_only"});
    Json& so = out["sampler"];
    so = Json::object();
    sc.mode = sampler_mode_from_string(rd.opt<std::string>(s, so, p, "mode", "unconstrained"));
    sc.solver = inner_solver_from_string(rd.opt<std::string>(s, so, p, "solver", "closed_form"));
    if (s.contains("lr") && !s.at("lr").is_null()) sc.lr = rd.req<double>(s, so, p, "lr");
    sc.inner_cap = rd.opt<int>(s, so, p, "inner_cap", 500);
    sc.final_projection = rd.opt<bool>(s, so, p, "final_projection", true);
    sc.correct_every_step = rd.opt<bool>(s, so, p, "correct_every_step", false);
    sc.drift_only = rd.opt<bool>(s, so, p, "drift_only", false);
  }
  sc.alm = read_alm(rd, doc.contains("alm") ? doc.at("alm") : empty, out["alm"],
                    sc.constraint ? sc.constraint->tolerance : 1e-6);
  if (doc.contains("dpo")) sc.dpo = read_dpo(rd, doc.at("dpo"), out["dpo"]);
  if (!sc.lr && sc.decoder) {
    sc.lr = sc.resolved_lr();
    out["sampler"]["lr"] = *sc.lr;
    cfg.defaults.push_back("sampler.lr");
  }

  if (doc.contains("design")) {
    const Json& d = doc.at("design");
    const std::string p = "design";
    check_keys(d, p, {"steps", "step_size", "tolerance", "init", "init_scale"});
    Json& dout = out["design"];
    dout = Json::object();
    DesignSettings ds;
    ds.steps = rd.req<int>(d, dout, p, "steps");
    ds.step_size = rd.req<double>(d, dout, p, "step_size");
    ds.tolerance = rd.opt<double>(d, dout, p, "tolerance", 0.0);
    ds.init = rd.opt<std::string>(d, dout, p, "init", "gaussian");
    ds.init_scale = rd.opt<double>(d, dout, p, "init_scale", 1.0);
    if (ds.init != "sample" && ds.init != "gaussian") throw ConfigError("design.init: expected 'sample' or 'gaussian'");
    if (ds.steps < 1) throw ConfigError("design.steps: must be >= 1");
    if (!sc.dpo) throw ConfigError("design experiments need a dpo section");
    if (!sc.decoder) throw ConfigError("design experiments need a decoder");
    cfg.design = ds;
  }

  if (doc.contains("train")) {
    const Json& t = doc.at("train");
    const std::string p = "train";
    check_keys(t, p, {"data", "samples", "hidden1", "hidden2", "activation", "learning_rate", "epochs", "batch_size",
                      "seed"});
    Json& tout = out["train"];
    tout = Json::object();
    TrainSettings ts;
    if (!t.contains("data")) throw ConfigError("missing required key 'train.data'");
    ScoreField data = read_score_body(rd, t.at("data"), "train.data");
    if (!data.analytic()) throw ConfigError("train.data: must be an analytic distribution");
    tout["data"] = score_to_json(data);
    ts.data = std::make_shared<const ScoreField>(std::move(data));
    ts.samples = rd.opt<int>(t, tout, p, "samples", 1000);
    ts.mlp.hidden1 = rd.opt<int>(t, tout, p, "hidden1", ts.mlp.hidden1);
    ts.mlp.hidden2 = rd.opt<int>(t, tout, p, "hidden2", ts.mlp.hidden2);
    const std::string act = rd.opt<std::string>(t, tout, p, "activation", "tanh");
    if (act != "tanh" && act != "sigmoid") throw ConfigError("train.activation: expected tanh or sigmoid");
    ts.mlp.activation = act == "tanh" ? Activation::tanh : Activation::sigmoid;
    ts.mlp.learning_rate = rd.opt<double>(t, tout, p, "learning_rate", ts.mlp.learning_rate);
    ts.mlp.epochs = rd.opt<int>(t, tout, p, "epochs", ts.mlp.epochs);
    ts.mlp.batch_size = rd.opt<int>(t, tout, p, "batch_size", ts.mlp.batch_size);
    ts.mlp.seed = rd.opt<std::uint64_t>(t, tout, p, "seed", derive_seed(cfg.seed, 0x7a1));
    try {
      ts.mlp.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(p + ": " + e.what());
    }
    if (ts.samples < 2) throw ConfigError("train.samples: must be >= 2");
    cfg.train = ts;
  }

  {
    const Json& c = doc.contains("checks") ? doc.at("checks") : empty;
    const std::string p = "checks";
    check_keys(c, p, {"final_feasible", "porosity_exact", "contraction_min_fraction", "design_max_ratio"});
    Json& cout_ = out["checks"];
    cout_ = Json::object();
    cfg.checks.final_feasible = rd.opt<bool>(c, cout_, p, "final_feasible", false);
    cfg.checks.porosity_exact = rd.opt<bool>(c, cout_, p, "porosity_exact", false);
    if (c.contains("contraction_min_fraction") && !c.at("contraction_min_fraction").is_null())
      cfg.checks.contraction_min_fraction = rd.req<double>(c, cout_, p, "contraction_min_fraction");
    else
      cout_["contraction_min_fraction"] = nullptr;
    if (c.contains("design_max_ratio") && !c.at("design_max_ratio").is_null())
      cfg.checks.design_max_ratio = rd.req<double>(c, cout_, p, "design_max_ratio");
    else
      cout_["design_max_ratio"] = nullptr;
  }

  const bool sampling = !cfg.train && !(cfg.design && cfg.design->init == "gaussian");
  if (sampling) {
    if (!doc.contains("schedule")) throw ConfigError("missing required key 'schedule'");
    if (!sc.score) throw ConfigError("missing required key 'score'");
    try {
      sc.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("sampler: ") + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path, const ConfigOverrides& overrides) {
  return parse_config(read_json_file(path), overrides);
}

}  // namespace lprox
