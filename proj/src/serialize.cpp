#include "lprox/serialize.hpp"

#include <fstream>
#include <sstream>

namespace lprox {

Json vec_to_json(const Vec& v) {
  Json j = Json::array();
  for (double x : v) j.push_back(x);
  return j;
}

Json mat_to_json(const Mat& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(std::move(row));
  }
  return j;
}

Vec vec_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field + ": expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(field + "[" + std::to_string(i) + "]: expected a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Mat mat_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw ConfigError(field + ": expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vec row = vec_from_json(j[r], field + "[" + std::to_string(r) + "]");
    if (static_cast<std::size_t>(row.size()) != cols) throw ConfigError(field + ": ragged rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

Json schedule_to_json(const NoiseSchedule& s) {
  return Json{{"T", s.T}, {"abar", s.abar}, {"gamma", s.gamma}, {"inner_steps", s.inner_steps}};
}

NoiseSchedule schedule_from_json(const Json& j) {
  NoiseSchedule s;
  s.T = j.at("T").get<int>();
  s.abar = j.at("abar").get<std::vector<double>>();
  s.gamma = j.at("gamma").get<std::vector<double>>();
  s.inner_steps = j.at("inner_steps").get<int>();
  s.validate();
  return s;
}

namespace {

std::string activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "sigmoid"; }

Activation activation_from(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

}  // namespace

Json score_to_json(const ScoreField& f) {
  Json j{{"kind", to_string(f.kind())}, {"dim", f.dim()}};
  switch (f.kind()) {
    case ScoreKind::gaussian_mixture: {
      Json comps = Json::array();
      for (const auto& c : f.components())
        comps.push_back(Json{{"weight", c.weight}, {"mean", vec_to_json(c.mean)}, {"cov", mat_to_json(c.cov)}});
      j["components"] = comps;
      break;
    }
    case ScoreKind::linear_gaussian:
      j["factor"] = mat_to_json(f.linear_factor());
      j["offset"] = vec_to_json(f.components().front().mean);
      break;
    case ScoreKind::mlp: {
      const MlpParams& p = f.mlp_params();
      j["activation"] = activation_name(p.activation);
      j["w1"] = mat_to_json(p.w1);
      j["b1"] = vec_to_json(p.b1);
      j["w2"] = mat_to_json(p.w2);
      j["b2"] = vec_to_json(p.b2);
      j["w3"] = mat_to_json(p.w3);
      j["b3"] = vec_to_json(p.b3);
      break;
    }
  }
  return j;
}

ScoreField score_from_json(const Json& j) {
  const ScoreKind kind = score_kind_from_string(j.at("kind").get<std::string>());
  ScoreField f;
  switch (kind) {
    case ScoreKind::gaussian_mixture: {
      std::vector<GaussianComponent> comps;
      for (const auto& c : j.at("components"))
        comps.push_back({c.at("weight").get<double>(), vec_from_json(c.at("mean"), "mean"),
                         mat_from_json(c.at("cov"), "cov")});
      f = ScoreField::gaussian_mixture(std::move(comps));
      break;
    }
    case ScoreKind::linear_gaussian:
      f = ScoreField::linear_gaussian(mat_from_json(j.at("factor"), "factor"), vec_from_json(j.at("offset"), "offset"));
      break;
    case ScoreKind::mlp: {
      MlpParams p;
      p.activation = activation_from(j.at("activation").get<std::string>());
      p.w1 = mat_from_json(j.at("w1"), "w1");
      p.b1 = vec_from_json(j.at("b1"), "b1");
      p.w2 = mat_from_json(j.at("w2"), "w2");
      p.b2 = vec_from_json(j.at("b2"), "b2");
      p.w3 = mat_from_json(j.at("w3"), "w3");
      p.b3 = vec_from_json(j.at("b3"), "b3");
      f = ScoreField::mlp(std::move(p));
      break;
    }
  }
  if (j.contains("dim") && j.at("dim").get<int>() != f.dim()) throw ConfigError("score: dim does not match parameters");
  return f;
}

Json decoder_to_json(const DecoderMap& d) {
  Json j{{"kind", to_string(d.kind())}, {"latent_dim", d.latent_dim()}, {"ambient_dim", d.ambient_dim()}};
  if (d.kind() == DecoderKind::linear) {
    j["weight"] = mat_to_json(d.w1());
    j["bias"] = vec_to_json(d.b1());
  } else {
    j["w1"] = mat_to_json(d.w1());
    j["b1"] = vec_to_json(d.b1());
    j["w2"] = mat_to_json(d.w2());
    j["b2"] = vec_to_json(d.b2());
  }
  j["lipschitz_bound"] = d.lipschitz_bound() ? Json(*d.lipschitz_bound()) : Json(nullptr);
  j["lipschitz_probes"] = d.lipschitz_probes();
  return j;
}

DecoderMap decoder_from_json(const Json& j) {
  const DecoderKind kind = decoder_kind_from_string(j.at("kind").get<std::string>());
  DecoderMap d = kind == DecoderKind::linear
                     ? DecoderMap::linear(mat_from_json(j.at("weight"), "weight"), vec_from_json(j.at("bias"), "bias"))
                     : DecoderMap::smooth_mlp(mat_from_json(j.at("w1"), "w1"), vec_from_json(j.at("b1"), "b1"),
                                              mat_from_json(j.at("w2"), "w2"), vec_from_json(j.at("b2"), "b2"));
  if (j.contains("lipschitz_bound") && !j.at("lipschitz_bound").is_null())
    d.set_lipschitz(j.at("lipschitz_bound").get<double>(), j.value("lipschitz_probes", 0));
  return d;
}

Json centroid_to_json(const CentroidModel& m) {
  Json j{{"feature_mean", vec_to_json(m.feature_mean)},
         {"axes", mat_to_json(m.axes)},
         {"target_centroid", vec_to_json(m.target_centroid)},
         {"forbidden_centroid", vec_to_json(m.forbidden_centroid)},
         {"trigger", m.trigger}};
  j["feature_map"] = m.feature_map.size() ? mat_to_json(m.feature_map) : Json(nullptr);
  return j;
}

CentroidModel centroid_from_json(const Json& j) {
  CentroidModel m;
  if (j.contains("feature_map") && !j.at("feature_map").is_null())
    m.feature_map = mat_from_json(j.at("feature_map"), "feature_map");
  m.feature_mean = vec_from_json(j.at("feature_mean"), "feature_mean");
  m.axes = mat_from_json(j.at("axes"), "axes");
  const Vec t = vec_from_json(j.at("target_centroid"), "target_centroid");
  const Vec f = vec_from_json(j.at("forbidden_centroid"), "forbidden_centroid");
  if (t.size() != 2 || f.size() != 2) throw ConfigError("centroids must be 2-vectors");
  if (m.axes.cols() != 2 || m.axes.rows() != m.feature_mean.size()) throw ConfigError("axes must be feature_dim x 2");
  m.target_centroid = t;
  m.forbidden_centroid = f;
  m.trigger = j.at("trigger").get<double>();
  return m;
}

std::pair<int, int> line_column(const std::string& text, std::size_t offset) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte is 1-based and points just past the offending character.
    const auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": parse error: " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace lprox
