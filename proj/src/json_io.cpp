#include "safe/json_io.hpp"

#include <fstream>

namespace safe {

Json vector_to_json(const Eigen::Ref<const Vector>& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw InputError("expected a JSON array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Json matrix_to_json(const Eigen::Ref<const Matrix>& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(vector_to_json(m.row(r).transpose()));
  return j;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw InputError("expected a JSON array of rows");
  if (j.empty()) return {};
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != static_cast<std::size_t>(m.cols())) throw InputError("ragged JSON matrix");
    m.row(static_cast<Eigen::Index>(r)) = vector_from_json(j[r]).transpose();
  }
  return m;
}

Json model_to_json(const ModelParams& params) {
  const Arch& a = params.arch();
  return {{"arch", {{"input_dim", a.input_dim}, {"hidden_dim", a.hidden_dim}, {"num_classes", a.num_classes}}},
          {"theta", vector_to_json(params.theta())}};
}

ModelParams model_from_json(const Json& j) {
  try {
    Arch a;
    a.input_dim = j.at("arch").at("input_dim").get<int>();
    a.hidden_dim = j.at("arch").value("hidden_dim", 0);
    a.num_classes = j.at("arch").at("num_classes").get<int>();
    return ModelParams(a, vector_from_json(j.at("theta")));
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed model checkpoint: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelParams& params) {
  write_json_file(path, model_to_json(params));
}

ModelParams load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

Json stats_snapshot(const ShiftModel& model) {
  Json classes = Json::array();
  for (int c = 0; c < model.num_classes(); ++c) {
    const auto& cs = model.classes[c];
    classes.push_back({{"label", c},
                       {"n", cs.stats.n},
                       {"n0", cs.n0},
                       {"count", cs.count},
                       {"frozen", cs.frozen},
                       {"mu", vector_to_json(cs.stats.mu)},
                       {"sigma", matrix_to_json(cs.stats.sigma)}});
  }
  return {{"proj_dim", model.proj_dim()},
          {"size_d0", model.size_d0},
          {"size_dt", model.size_dt},
          {"classes", std::move(classes)}};
}

Json safe_config_to_json(const SafeConfig& c) {
  Json j = {{"K", c.k},         {"T", c.horizon},           {"epsilon", c.epsilon}, {"delta", c.delta},
            {"lambda", c.lambda}, {"proj_dim", c.proj_dim}, {"seed", c.seed}};
  j["W"] = c.weight_bound ? Json(*c.weight_bound) : Json(nullptr);
  return j;
}

SafeConfig safe_config_from_json(const Json& j) {
  SafeConfig c;
  c.k = j.value("K", c.k);
  c.horizon = j.value("T", c.horizon);
  if (j.contains("W") && !j["W"].is_null()) c.weight_bound = j["W"].get<double>();
  c.epsilon = j.value("epsilon", c.epsilon);
  c.delta = j.value("delta", c.delta);
  c.lambda = j.value("lambda", c.lambda);
  c.proj_dim = j.value("proj_dim", c.proj_dim);
  c.seed = j.value("seed", c.seed);
  validate(c);
  return c;
}

Json engine_checkpoint(const SafeEngine& engine) {
  const SafeEngine::State s = engine.snapshot();
  Json ledger = Json::array();
  for (Eigen::Index i = 0; i < s.ledger.size(); ++i) {
    ledger.push_back({{"id", s.ledger.ids()[i]},
                      {"round", s.ledger.rounds()[i]},
                      {"y", s.ledger.y()[i]},
                      {"x", vector_to_json(s.ledger.x().row(i).transpose())}});
  }
  Json whiteners = Json::array();
  for (const auto& cs : s.shift.classes) {
    whiteners.push_back({{"mu0", vector_to_json(cs.whitener.mu0)}, {"chol0", matrix_to_json(cs.whitener.chol0)}});
  }
  return {{"format", "safe-engine-checkpoint/1"},
          {"w0", model_to_json(engine.w0())},
          {"config", safe_config_to_json(engine.config())},
          {"round", s.round},
          {"retention",
           {{"grad", vector_to_json(s.retention.grad)},
            {"size_dt", s.retention.size_dt},
            {"size_d0", s.retention.size_d0}}},
          {"ledger", std::move(ledger)},
          {"projection", {{"seed", s.shift.projection.seed}, {"v", matrix_to_json(s.shift.projection.v)}}},
          {"whiteners", std::move(whiteners)},
          {"stats", stats_snapshot(s.shift)},
          {"rng", s.rng_state}};
}

SafeEngine engine_from_checkpoint(const Json& j) {
  try {
    if (j.at("format") != "safe-engine-checkpoint/1") throw InputError("unknown checkpoint format");
    ModelParams w0 = model_from_json(j.at("w0"));
    SafeConfig config = safe_config_from_json(j.at("config"));
    SafeEngine::State s;
    s.round = j.at("round").get<int>();
    s.rng_state = j.at("rng").get<std::string>();
    s.retention.grad = vector_from_json(j.at("retention").at("grad"));
    s.retention.size_dt = j.at("retention").at("size_dt").get<Eigen::Index>();
    s.retention.size_d0 = j.at("retention").at("size_d0").get<Eigen::Index>();
    for (const Json& e : j.at("ledger")) {
      s.ledger.append_point(e.at("id").get<SampleId>(), vector_from_json(e.at("x")), e.at("y").get<int>(),
                            e.at("round").get<int>());
    }
    s.shift.projection.seed = j.at("projection").at("seed").get<std::uint64_t>();
    s.shift.projection.v = matrix_from_json(j.at("projection").at("v"));
    const Json& stats = j.at("stats");
    s.shift.size_d0 = stats.at("size_d0").get<Eigen::Index>();
    s.shift.size_dt = stats.at("size_dt").get<Eigen::Index>();
    const Json& whiteners = j.at("whiteners");
    const Json& classes = stats.at("classes");
    if (whiteners.size() != classes.size()) throw InputError("checkpoint whitener/class count mismatch");
    for (std::size_t c = 0; c < classes.size(); ++c) {
      ClassShiftState cs;
      cs.whitener.mu0 = vector_from_json(whiteners[c].at("mu0"));
      cs.whitener.chol0 = matrix_from_json(whiteners[c].at("chol0"));
      cs.stats.n = classes[c].at("n").get<Eigen::Index>();
      cs.stats.mu = vector_from_json(classes[c].at("mu"));
      cs.stats.sigma = matrix_from_json(classes[c].at("sigma"));
      cs.stats.refresh_cholesky();
      cs.n0 = classes[c].at("n0").get<Eigen::Index>();
      cs.count = classes[c].at("count").get<Eigen::Index>();
      cs.frozen = classes[c].at("frozen").get<bool>();
      s.shift.classes.push_back(std::move(cs));
    }
    return SafeEngine::restore(std::move(w0), std::move(s), config);
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed engine checkpoint: ") + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), static_cast<long long>(e.byte));
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace safe
