#include "rwz/io.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace rwz {
namespace {

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("matrix must be a nested array");
  const auto rows = j.size();
  const auto cols = j[0].size();
  MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw ConfigError("ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          j[r][c].get<double>();
  }
  return m;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

VectorXd vector_from_json(const json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k)
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  return v;
}

json noise_to_json(const NoiseSpec& n) {
  json j;
  switch (n.kind) {
    case NoiseKind::None: j["kind"] = "none"; break;
    case NoiseKind::Uniform: j["kind"] = "uniform"; break;
    case NoiseKind::Rademacher: j["kind"] = "rademacher"; break;
  }
  j["scale"] = n.scale;
  return j;
}

NoiseSpec noise_from_json(const json& j) {
  NoiseSpec n;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "none")
    n.kind = NoiseKind::None;
  else if (kind == "uniform")
    n.kind = NoiseKind::Uniform;
  else if (kind == "rademacher")
    n.kind = NoiseKind::Rademacher;
  else
    throw ConfigError("unknown noise kind: " + kind);
  n.scale = j.value("scale", 0.0);
  if (n.kind != NoiseKind::None && n.scale <= 0.0)
    throw ConfigError("noise scale must be positive");
  return n;
}

json vector_baseline_to_json(const VectorBaseline& b) {
  json j;
  j["kind"] = baseline_kind_name(b.kind);
  switch (b.kind) {
    case BaselineKind::Zero: break;
    case BaselineKind::Affine:
      j["linear"] = matrix_to_json(b.linear);
      j["offset"] = vector_to_json(b.offset);
      break;
    case BaselineKind::QuadraticClipped:
      j["quad"] = vector_to_json(b.quad);
      j["linear"] = matrix_to_json(b.linear);
      j["offset"] = vector_to_json(b.offset);
      j["clip"] = b.clip;
      break;
    case BaselineKind::Cosine:
      j["amp"] = vector_to_json(b.amp);
      j["freq"] = vector_to_json(b.freq);
      j["phase"] = vector_to_json(b.phase);
      break;
  }
  return j;
}

VectorBaseline vector_baseline_from_json(const json& j, int dim) {
  VectorBaseline b;
  b.kind = baseline_kind_from_name(j.at("kind").get<std::string>());
  switch (b.kind) {
    case BaselineKind::Zero:
      break;
    case BaselineKind::Affine:
      b.linear = matrix_from_json(j.at("linear"));
      b.offset = vector_from_json(j.at("offset"));
      break;
    case BaselineKind::QuadraticClipped:
      b.quad = vector_from_json(j.at("quad"));
      b.linear = matrix_from_json(j.at("linear"));
      b.offset = vector_from_json(j.at("offset"));
      b.clip = j.value("clip", 1e6);
      break;
    case BaselineKind::Cosine:
      b.amp = vector_from_json(j.at("amp"));
      b.freq = vector_from_json(j.at("freq"));
      b.phase = vector_from_json(j.at("phase"));
      break;
  }
  b.validate(dim);
  return b;
}

json scalar_baseline_to_json(const ScalarBaseline& b) {
  json j;
  j["kind"] = baseline_kind_name(b.kind);
  switch (b.kind) {
    case BaselineKind::Zero: break;
    case BaselineKind::Affine:
      j["linear"] = vector_to_json(b.linear);
      j["offset"] = b.offset;
      break;
    case BaselineKind::QuadraticClipped:
      j["quad"] = vector_to_json(b.quad);
      j["linear"] = vector_to_json(b.linear);
      j["offset"] = b.offset;
      j["clip"] = b.clip;
      break;
    case BaselineKind::Cosine:
      j["amp"] = b.amp;
      j["freq"] = vector_to_json(b.freq);
      j["phase"] = b.phase;
      break;
  }
  return j;
}

ScalarBaseline scalar_baseline_from_json(const json& j, int dim) {
  ScalarBaseline b;
  b.kind = baseline_kind_from_name(j.at("kind").get<std::string>());
  switch (b.kind) {
    case BaselineKind::Zero:
      break;
    case BaselineKind::Affine:
      b.linear = vector_from_json(j.at("linear"));
      b.offset = j.value("offset", 0.0);
      break;
    case BaselineKind::QuadraticClipped:
      b.quad = vector_from_json(j.at("quad"));
      b.linear = vector_from_json(j.at("linear"));
      b.offset = j.value("offset", 0.0);
      b.clip = j.value("clip", 1e6);
      break;
    case BaselineKind::Cosine:
      b.amp = j.value("amp", 0.0);
      b.freq = vector_from_json(j.at("freq"));
      b.phase = j.value("phase", 0.0);
      break;
  }
  b.validate(dim);
  return b;
}

}  // namespace

json to_json(const PlmConfig& config) {
  json j;
  j["horizon"] = config.horizon;
  j["dim"] = config.dim;
  j["feature_map"] = feature_kind_name(config.features.kind);
  j["treatments"] = {{"count", config.features.treatments.count},
                     {"values", config.features.treatments.values}};
  json gammas = json::array();
  for (const MatrixXd& g : config.gamma) gammas.push_back(matrix_to_json(g));
  j["gamma"] = std::move(gammas);
  j["theta"] = vector_to_json(config.theta_last);
  j["omega"] = vector_to_json(config.omega);
  j["beta"] = vector_baseline_to_json(config.beta);
  j["kappa"] = scalar_baseline_to_json(config.kappa);
  if (config.init.kind == InitialDist::Kind::PointMass)
    j["init"] = {{"kind", "point"}, {"point", vector_to_json(config.init.point)}};
  else
    j["init"] = {{"kind", "uniform_box"},
                 {"lo", vector_to_json(config.init.lo)},
                 {"hi", vector_to_json(config.init.hi)}};
  j["eta"] = noise_to_json(config.eta);
  j["eps"] = noise_to_json(config.eps);
  j["state_bound"] = config.state_bound;
  j["context_bound"] = config.features.context_bound;
  return j;
}

PlmConfig plm_config_from_json(const json& j) try {
  PlmConfig c;
  c.horizon = j.at("horizon").get<int>();
  c.dim = j.at("dim").get<int>();

  c.features.kind = feature_kind_from_name(j.at("feature_map").get<std::string>());
  c.features.horizon = c.horizon;
  c.features.dim = c.dim;
  if (j.contains("treatments")) {
    c.features.treatments.count = j["treatments"].at("count").get<int>();
    c.features.treatments.values =
        j["treatments"].value("values", std::vector<double>{});
    if (c.features.treatments.values.empty())
      c.features.treatments = TreatmentSpace::arms(c.features.treatments.count);
  }

  for (const json& g : j.value("gamma", json::array()))
    c.gamma.push_back(matrix_from_json(g));
  c.theta_last = vector_from_json(j.at("theta"));
  c.omega = vector_from_json(j.at("omega"));
  c.beta = vector_baseline_from_json(j.at("beta"), c.dim);
  c.kappa = scalar_baseline_from_json(j.at("kappa"), c.dim);

  const json& init = j.at("init");
  const std::string init_kind = init.at("kind").get<std::string>();
  if (init_kind == "point") {
    c.init.kind = InitialDist::Kind::PointMass;
    c.init.point = vector_from_json(init.at("point"));
  } else if (init_kind == "uniform_box") {
    c.init.kind = InitialDist::Kind::UniformBox;
    c.init.lo = vector_from_json(init.at("lo"));
    c.init.hi = vector_from_json(init.at("hi"));
  } else {
    throw ConfigError("unknown initial distribution: " + init_kind);
  }

  c.eta = noise_from_json(j.at("eta"));
  c.eps = noise_from_json(j.at("eps"));
  c.state_bound = j.at("state_bound").get<double>();
  c.features.context_bound = j.value("context_bound", c.state_bound);
  c.validate();
  return c;
} catch (const json::exception& e) {
  throw ConfigError(std::string("model config schema error: ") + e.what());
}

PlmConfig load_plm_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return plm_config_from_json(j);
}

void save_plm_config(const PlmConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path.string());
  out << to_json(config).dump(2) << '\n';
}

json to_json(const PolicyFamilyConfig& config) {
  json j;
  j["kind"] = policy_kind_name(config.kind);
  j["alpha"] = config.alpha;
  j["explore_c"] = config.explore_c;
  j["cov_floor_c"] = config.cov_floor_c;
  j["temperature"] = config.temperature;
  j["refit_start"] = config.refit_start;
  if (!config.fixed_probs.empty()) j["fixed_probs"] = config.fixed_probs;
  return j;
}

PolicyFamilyConfig policy_family_from_json(const json& j) try {
  PolicyFamilyConfig c;
  c.kind = policy_kind_from_name(j.at("kind").get<std::string>());
  c.alpha = j.value("alpha", 0.0);
  c.explore_c = j.value("explore_c", 0.05);
  c.cov_floor_c = j.value("cov_floor_c", 0.05);
  c.temperature = j.value("temperature", 1.0);
  c.refit_start = j.value("refit_start", 16);
  c.fixed_probs = j.value("fixed_probs", std::vector<double>{});
  return c;
} catch (const json::exception& e) {
  throw ConfigError(std::string("policy config schema error: ") + e.what());
}

json to_json(const PolicySnapshot& snapshot) {
  json j;
  j["id"] = snapshot.id;
  j["episode"] = snapshot.episode;
  j["kind"] = policy_kind_name(snapshot.kind);
  j["arms"] = snapshot.arm_count;
  j["alpha"] = snapshot.alpha;
  j["explore_c"] = snapshot.explore_c;
  j["cov_floor_c"] = snapshot.cov_floor_c;
  if (snapshot.kind == PolicyKind::FixedRandomized) {
    j["probs"] = snapshot.fixed_probs;
  } else {
    j["mix_weight"] = snapshot.mix_weight;
    j["score_horizon"] = snapshot.score_theta.horizon;
    j["score_dim"] = snapshot.score_theta.dim;
    j["score_theta"] = vector_to_json(snapshot.score_theta.flat);
    if (snapshot.kind == PolicyKind::Softmax)
      j["temperature"] = snapshot.temperature;
  }
  return j;
}

PolicySnapshot snapshot_from_json(const json& j) try {
  PolicySnapshot s;
  s.id = j.at("id").get<int>();
  s.episode = j.at("episode").get<int>();
  s.kind = policy_kind_from_name(j.at("kind").get<std::string>());
  s.arm_count = j.at("arms").get<int>();
  s.alpha = j.value("alpha", 0.0);
  s.explore_c = j.value("explore_c", 0.05);
  s.cov_floor_c = j.value("cov_floor_c", 0.05);
  if (s.kind == PolicyKind::FixedRandomized) {
    s.fixed_probs = j.at("probs").get<std::vector<double>>();
  } else {
    s.mix_weight = j.at("mix_weight").get<double>();
    s.temperature = j.value("temperature", 1.0);
    const int l = j.at("score_horizon").get<int>();
    const int d = j.at("score_dim").get<int>();
    s.score_theta =
        ParameterVector::from_flat(l, d, vector_from_json(j.at("score_theta")));
  }
  s.validate();
  return s;
} catch (const json::exception& e) {
  throw ConfigError(std::string("policy snapshot schema error: ") + e.what());
}

json to_json(const EpisodeRecord& episode) {
  json j;
  j["i"] = episode.index;
  json contexts = json::array();
  for (const VectorXd& x : episode.contexts) contexts.push_back(vector_to_json(x));
  j["x"] = std::move(contexts);
  j["t"] = episode.treatments;
  j["y"] = episode.outcome;
  j["policy"] = episode.policy_id;
  return j;
}

EpisodeRecord episode_from_json(const json& j) try {
  EpisodeRecord ep;
  ep.index = j.at("i").get<int>();
  for (const json& x : j.at("x")) ep.contexts.push_back(vector_from_json(x));
  ep.treatments = j.at("t").get<std::vector<int>>();
  ep.outcome = j.at("y").get<double>();
  ep.policy_id = j.at("policy").get<int>();
  if (ep.contexts.size() != ep.treatments.size())
    throw ConfigError("episode record stage mismatch");
  return ep;
} catch (const json::exception& e) {
  throw ConfigError(std::string("episode record schema error: ") + e.what());
}

json to_json(const ZEstimate& estimate) {
  json j;
  j["scheme"] = weight_scheme_name(estimate.scheme);
  j["n"] = estimate.n;
  j["alpha"] = estimate.alpha;
  j["event_ok"] = estimate.event_ok;
  j["min_abs_eig"] = estimate.min_abs_eig;
  j["event_threshold"] = estimate.event_threshold;
  j["theta_hat"] = vector_to_json(estimate.theta_hat.flat);
  j["horizon"] = estimate.theta_hat.horizon;
  j["dim"] = estimate.theta_hat.dim;
  j["b_n"] = matrix_to_json(estimate.b_n);
  if (estimate.score.size() > 0) j["score"] = vector_to_json(estimate.score);
  if (!estimate.note.empty()) j["note"] = estimate.note;
  return j;
}

namespace {

json regressor_to_json(const PolynomialRegressor& reg) {
  json j;
  j["trained"] = reg.trained();
  if (!reg.trained()) return j;
  j["input_dim"] = reg.input_dim();
  j["degree"] = reg.degree();
  j["clamp"] = reg.output_clamp();
  j["mse"] = reg.in_sample_mse();
  j["coef"] = vector_to_json(reg.coefficients());
  return j;
}

PolynomialRegressor regressor_from_json(const json& j) {
  if (!j.value("trained", false)) return {};
  return PolynomialRegressor::restore(
      j.at("input_dim").get<int>(), j.at("degree").get<int>(),
      vector_from_json(j.at("coef")), j.value("clamp", 1e6),
      j.value("mse", 0.0));
}

}  // namespace

json to_json(const NuisanceModel& model) {
  json j;
  j["fit_boundary"] = model.fit_boundary;
  j["plm_mode"] = model.plm_mode;
  j["sigma2"] = model.sigma2;
  j["kappa_proxy_rms"] = model.kappa_proxy_rms;
  j["treatments"] = {{"count", model.treatments.count},
                     {"values", model.treatments.values}};
  if (model.theta_bar.flat.size() > 0) {
    j["theta_bar"] = {{"horizon", model.theta_bar.horizon},
                      {"dim", model.theta_bar.dim},
                      {"flat", vector_to_json(model.theta_bar.flat)}};
  }
  if (model.plm_mode) {
    json beta = json::array();
    for (const auto& comp : model.beta_hat.components)
      beta.push_back(regressor_to_json(comp));
    j["beta"] = std::move(beta);
    j["kappa"] = regressor_to_json(model.kappa_hat);
  } else {
    json g = json::array();
    for (const auto& reg : model.g) g.push_back(regressor_to_json(reg));
    j["g"] = std::move(g);
  }
  return j;
}

NuisanceModel nuisance_model_from_json(const json& j) try {
  NuisanceModel model;
  model.fit_boundary = j.at("fit_boundary").get<int>();
  model.plm_mode = j.at("plm_mode").get<bool>();
  model.sigma2 = j.at("sigma2").get<std::vector<double>>();
  model.kappa_proxy_rms = j.value("kappa_proxy_rms", 0.0);
  model.treatments.count = j.at("treatments").at("count").get<int>();
  model.treatments.values =
      j.at("treatments").at("values").get<std::vector<double>>();
  if (j.contains("theta_bar")) {
    const json& tb = j["theta_bar"];
    model.theta_bar = ParameterVector::from_flat(
        tb.at("horizon").get<int>(), tb.at("dim").get<int>(),
        vector_from_json(tb.at("flat")));
  }
  if (model.plm_mode) {
    for (const json& comp : j.at("beta"))
      model.beta_hat.components.push_back(regressor_from_json(comp));
    model.kappa_hat = regressor_from_json(j.at("kappa"));
  } else {
    for (const json& reg : j.at("g"))
      model.g.push_back(regressor_from_json(reg));
  }
  return model;
} catch (const json::exception& e) {
  throw ConfigError(std::string("nuisance model schema error: ") + e.what());
}

void write_episode_log(std::span<const EpisodeRecord> episodes,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write episode log: " + path.string());
  for (const EpisodeRecord& ep : episodes) out << to_json(ep).dump() << '\n';
}

std::vector<EpisodeRecord> read_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read episode log: " + path.string());
  std::vector<EpisodeRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(episode_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError("episode log parse error: " + std::string(e.what()));
    }
  }
  return out;
}

void write_policy_log(std::span<const PolicySnapshot> snapshots,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write policy log: " + path.string());
  for (const PolicySnapshot& s : snapshots) out << to_json(s).dump() << '\n';
}

std::vector<PolicySnapshot> read_policy_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read policy log: " + path.string());
  std::vector<PolicySnapshot> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(snapshot_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError("policy log parse error: " + std::string(e.what()));
    }
  }
  return out;
}

}  // namespace rwz
