#include "safe/harness.hpp"

#include "safe/evaluation.hpp"
#include "safe/gaussian_stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace safe {

namespace {

void check_keys(const Json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(section) + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + section);
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void RunConfig::derive_seeds() {
  safe.seed = seed + 2;
  retrain.seed = seed + 3;
  stream.seed = seed + 1;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  check_keys(j, "config", {"dataset", "model", "safe", "retrain", "stream", "evaluation", "initial_model", "sweep", "seed"});
  read(j, "seed", c.seed);
  if (j.contains("initial_model") && !j["initial_model"].is_null()) {
    std::string path;
    read(j, "initial_model", path);
    c.initial_model = path;
  }

  if (j.contains("dataset")) {
    const Json& d = j["dataset"];
    check_keys(d, "dataset", {"kind", "n", "dim", "num_classes", "separation", "train_images", "train_labels",
                              "test_images", "test_labels", "path", "label_column", "test_fraction"});
    read(d, "kind", c.dataset.kind);
    read(d, "n", c.dataset.n);
    read(d, "dim", c.dataset.dim);
    read(d, "num_classes", c.dataset.num_classes);
    read(d, "separation", c.dataset.separation);
    read(d, "train_images", c.dataset.train_images);
    read(d, "train_labels", c.dataset.train_labels);
    read(d, "test_images", c.dataset.test_images);
    read(d, "test_labels", c.dataset.test_labels);
    read(d, "path", c.dataset.csv_path);
    read(d, "label_column", c.dataset.label_column);
    read(d, "test_fraction", c.dataset.test_fraction);
  }
  if (j.contains("model")) {
    check_keys(j["model"], "model", {"hidden_dim"});
    read(j["model"], "hidden_dim", c.hidden_dim);
  }
  bool horizon_given = false;
  if (j.contains("safe")) {
    const Json& s = j["safe"];
    check_keys(s, "safe", {"K", "T", "W", "epsilon", "delta", "lambda", "proj_dim"});
    read(s, "K", c.safe.k);
    horizon_given = s.contains("T");
    read(s, "T", c.safe.horizon);
    if (s.contains("W") && !s["W"].is_null()) {
      double w = 0.0;
      read(s, "W", w);
      c.safe.weight_bound = w;
    }
    read(s, "epsilon", c.safe.epsilon);
    read(s, "delta", c.safe.delta);
    read(s, "lambda", c.safe.lambda);
    read(s, "proj_dim", c.safe.proj_dim);
  }
  if (j.contains("retrain")) {
    const Json& r = j["retrain"];
    check_keys(r, "retrain", {"max_epochs", "step_size", "momentum", "batch_size", "grad_tol", "init_scale"});
    read(r, "max_epochs", c.retrain.max_epochs);
    read(r, "step_size", c.retrain.step_size);
    read(r, "momentum", c.retrain.momentum);
    read(r, "batch_size", c.retrain.batch_size);
    read(r, "grad_tol", c.retrain.grad_tol);
    read(r, "init_scale", c.retrain.init_scale);
  }
  if (j.contains("stream")) {
    const Json& s = j["stream"];
    check_keys(s, "stream", {"mode", "rounds", "per_round", "target_class"});
    std::string mode = "random";
    read(s, "mode", mode);
    if (mode == "random") {
      c.stream.mode = StreamMode::kRandomSubset;
    } else if (mode == "class") {
      c.stream.mode = StreamMode::kClassStream;
    } else {
      throw ConfigError("stream.mode must be 'random' or 'class'");
    }
    read(s, "rounds", c.stream.rounds);
    read(s, "per_round", c.stream.per_round);
    read(s, "target_class", c.stream.target_class);
  }
  if (j.contains("evaluation")) {
    check_keys(j["evaluation"], "evaluation", {"oracle", "mia"});
    read(j["evaluation"], "oracle", c.oracle);
    read(j["evaluation"], "mia", c.mia);
  }
  if (j.contains("sweep")) {
    check_keys(j["sweep"], "sweep", {"K"});
    read(j["sweep"], "K", c.sweep_k);
  }
  if (!horizon_given) c.safe.horizon = std::max(1, c.stream.rounds);
  c.derive_seeds();
  validate(c);
  return c;
}

Json run_config_to_json(const RunConfig& c) {
  Json dataset = {{"kind", c.dataset.kind}};
  if (c.dataset.kind == "synthetic") {
    dataset.update({{"n", c.dataset.n},
                    {"dim", c.dataset.dim},
                    {"num_classes", c.dataset.num_classes},
                    {"separation", c.dataset.separation}});
  } else if (c.dataset.kind == "idx") {
    dataset.update({{"train_images", c.dataset.train_images},
                    {"train_labels", c.dataset.train_labels},
                    {"test_images", c.dataset.test_images},
                    {"test_labels", c.dataset.test_labels}});
  } else {
    dataset.update({{"path", c.dataset.csv_path},
                    {"label_column", c.dataset.label_column},
                    {"test_fraction", c.dataset.test_fraction}});
  }
  Json safe_json = safe_config_to_json(c.safe);
  safe_json.erase("seed");
  return {{"seed", c.seed},
          {"dataset", dataset},
          {"model", {{"hidden_dim", c.hidden_dim}}},
          {"safe", safe_json},
          {"retrain",
           {{"max_epochs", c.retrain.max_epochs},
            {"step_size", c.retrain.step_size},
            {"momentum", c.retrain.momentum},
            {"batch_size", c.retrain.batch_size},
            {"grad_tol", c.retrain.grad_tol},
            {"init_scale", c.retrain.init_scale}}},
          {"stream",
           {{"mode", c.stream.mode == StreamMode::kRandomSubset ? "random" : "class"},
            {"rounds", c.stream.rounds},
            {"per_round", c.stream.per_round},
            {"target_class", c.stream.target_class}}},
          {"evaluation", {{"oracle", c.oracle}, {"mia", c.mia}}},
          {"initial_model", c.initial_model ? Json(*c.initial_model) : Json(nullptr)},
          {"sweep", {{"K", c.sweep_k}}}};
}

void validate(const RunConfig& c) {
  validate(c.safe);
  validate(c.retrain);
  if (c.hidden_dim < 0) throw ConfigError("model.hidden_dim must be >= 0");
  if (c.stream.rounds < 0 || c.stream.per_round < 0) throw ConfigError("stream sizes must be >= 0");
  if (c.sweep_k.empty()) throw ConfigError("sweep.K must list at least one value");
  for (double k : c.sweep_k) {
    if (!(k > 0.0)) throw ConfigError("sweep.K values must be > 0");
  }
  const auto& d = c.dataset;
  if (d.kind == "synthetic") {
    if (d.n < 1 || d.dim < 1 || d.num_classes < 2) throw ConfigError("synthetic dataset sizes are invalid");
  } else if (d.kind == "idx") {
    if (d.train_images.empty() || d.train_labels.empty() || d.test_images.empty() || d.test_labels.empty()) {
      throw ConfigError("idx dataset needs train_images, train_labels, test_images and test_labels");
    }
  } else if (d.kind == "csv") {
    if (d.csv_path.empty()) throw ConfigError("csv dataset needs a path");
    if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) throw ConfigError("dataset.test_fraction must lie in (0, 1)");
  } else {
    throw ConfigError("dataset.kind must be synthetic, idx or csv");
  }
}

std::string config_hash(const Json& resolved) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : resolved.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

TrainTest load_dataset(const RunConfig& config) {
  const auto& d = config.dataset;
  TrainTest out;
  if (d.kind == "synthetic") {
    out = make_synthetic(d.n, d.dim, d.num_classes, d.separation, config.seed, config.safe.proj_dim);
  } else if (d.kind == "idx") {
    out.train = load_idx(d.train_images, d.train_labels);
    out.test = load_idx(d.test_images, d.test_labels, out.train.num_classes,
                        static_cast<SampleId>(out.train.size()));
    out.test.split = Split::kTest;
    if (out.test.dim() != out.train.dim()) throw InputError("train and test IDX images differ in size");
  } else {
    out = split_train_test(load_csv(d.csv_path, d.label_column), d.test_fraction, config.seed);
  }
  validate(out.train);
  validate(out.test);
  for (std::size_t c = 0; const Eigen::Index n : out.train.class_counts()) {
    if (n == 0) throw InputError("class " + std::to_string(c) + " is absent from the training split");
    ++c;
  }
  return out;
}

Json round_to_json(const RoundMetrics& m) {
  Json j = {{"type", "round"},
            {"round", m.round},
            {"requested", m.requested},
            {"accepted", m.accepted},
            {"size_dt", m.size_dt},
            {"forgotten_total", m.forgotten_total},
            {"metrics", {{"RA", optional_json(m.ra)}, {"FA", optional_json(m.fa)}, {"TA", optional_json(m.ta)},
                         {"MIA", optional_json(m.mia)}}},
            {"step", {{"gamma", m.gamma}, {"phi", m.phi}, {"grad_norm", m.grad_norm}, {"skipped", m.step_skipped}}},
            {"warnings", m.warnings}};
  if (m.oracle) {
    const auto& o = *m.oracle;
    j["oracle"] = {{"RA", optional_json(o.ra)},
                   {"FA", optional_json(o.fa)},
                   {"TA", optional_json(o.ta)},
                   {"MIA", optional_json(o.mia)},
                   {"risk_unlearned", o.risk_unlearned},
                   {"risk_optimal", o.risk_optimal},
                   {"regret", o.regret},
                   {"cumulative_regret", o.cumulative_regret},
                   {"V_T", o.path_length},
                   {"retrain_epochs", o.retrain_epochs}};
    if (m.gap) {
      j["oracle"]["surrogate_risk"] = m.gap->surrogate_risk;
      j["oracle"]["true_risk"] = m.gap->true_risk;
      j["oracle"]["risk_gap"] = m.gap->gap;
      j["oracle"]["gap_bound"] = m.gap->bound;
    }
  }
  if (m.verify) {
    j["verify"] = {{"retention_max_err", m.verify->retention_max_err},
                   {"stats_max_err", m.verify->stats_max_err},
                   {"step_norm_err", m.verify->step_norm_err},
                   {"passed", m.verify->passed}};
  }
  return j;
}

Json summary_to_json(const RunResult& r) {
  auto mean_of = [&](auto getter) -> Json {
    double total = 0.0;
    int count = 0;
    for (const auto& m : r.rounds) {
      if (const std::optional<double> v = getter(m)) {
        total += *v;
        ++count;
      }
    }
    return count == 0 ? Json(nullptr) : Json(total / count);
  };
  auto block = [&](bool oracle_side) {
    auto pick = [&](auto field) {
      return [=](const RoundMetrics& m) -> std::optional<double> {
        if (!oracle_side) return field(m);
        if (!m.oracle) return std::nullopt;
        return field(*m.oracle);
      };
    };
    Json mean = {{"RA", mean_of(pick([](const auto& m) { return m.ra; }))},
                 {"FA", mean_of(pick([](const auto& m) { return m.fa; }))},
                 {"TA", mean_of(pick([](const auto& m) { return m.ta; }))},
                 {"MIA", mean_of(pick([](const auto& m) { return m.mia; }))}};
    Json final_round = nullptr;
    if (!r.rounds.empty()) {
      const RoundMetrics& last = r.rounds.back();
      if (!oracle_side) {
        final_round = {{"RA", optional_json(last.ra)}, {"FA", optional_json(last.fa)}, {"TA", optional_json(last.ta)},
                       {"MIA", optional_json(last.mia)}};
      } else if (last.oracle) {
        final_round = {{"RA", optional_json(last.oracle->ra)}, {"FA", optional_json(last.oracle->fa)},
                       {"TA", optional_json(last.oracle->ta)}, {"MIA", optional_json(last.oracle->mia)}};
      }
    }
    return Json{{"mean", mean}, {"final", final_round}};
  };
  Json j = {{"type", "summary"}, {"rounds", r.rounds.size()}, {"W", r.weight_bound}, {"safe", block(false)}};
  if (!r.rounds.empty() && r.rounds.back().oracle) {
    j["oracle"] = block(true);
    j["oracle"]["cumulative_regret"] = r.rounds.back().oracle->cumulative_regret;
    j["oracle"]["mean_regret"] = r.rounds.back().oracle->cumulative_regret / static_cast<double>(r.rounds.size());
    j["oracle"]["V_T"] = r.rounds.back().oracle->path_length;
  }
  bool any_verify = false;
  for (const auto& m : r.rounds) any_verify = any_verify || m.verify.has_value();
  if (any_verify) j["verify_passed"] = r.verify_passed;
  return j;
}

RunResult run_experiment(const RunConfig& config, RunMode mode, std::ostream* jsonl, std::ostream* timing) {
  validate(config);
  const Json resolved = run_config_to_json(config);
  const std::string hash = config_hash(resolved);
  const bool verify = mode == RunMode::kVerify;
  const bool with_oracle = config.oracle || verify;

  const TrainTest data = load_dataset(config);
  const Dataset& train = data.train;
  const Dataset& test = data.test;
  const Arch arch{train.dim(), config.hidden_dim, train.num_classes};
  validate(arch);

  SafeConfig safe_cfg = config.safe;
  safe_cfg.proj_dim = safe_cfg.proj_dim > 0 ? safe_cfg.proj_dim : default_proj_dim(train.dim());
  const int min_count = min_class_count(safe_cfg.proj_dim);
  const auto stream = generate_stream(train, config.stream, min_count);

  ModelParams w0;
  std::optional<ModelParams> w_star_prev;
  if (config.initial_model) {
    w0 = load_model(*config.initial_model);
    if (!(w0.arch() == arch)) throw ConfigError("initial model architecture " + w0.arch().describe() +
                                                " does not match the data (" + arch.describe() + ")");
    if (with_oracle) w_star_prev = retrain(train, arch, config.retrain).w;
  } else {
    w0 = retrain(train, arch, config.retrain).w;
    w_star_prev = w0;
  }

  SafeEngine engine(w0, grad_cross_entropy(w0, train.view()), train.size(),
                    build_shift_model(make_projection(train.dim(), safe_cfg.proj_dim, safe_cfg.seed), train.x,
                                      train.labels, train.num_classes),
                    safe_cfg);

  std::unordered_map<SampleId, Eigen::Index> row_of;
  for (Eigen::Index i = 0; i < train.size(); ++i) row_of.emplace(train.ids[i], i);
  std::vector<bool> alive(train.size(), true);

  RunResult result;
  result.weight_bound = engine.weight_bound();
  RegretAccount regret;
  const double lambda = safe_cfg.lambda;

  for (std::size_t t = 0; t < stream.size(); ++t) {
    RoundMetrics m;
    m.requested = static_cast<Eigen::Index>(stream[t].size());

    // Requests may only name points still in D_{t-1}.
    Request request;
    std::vector<Eigen::Index> rows;
    for (SampleId id : stream[t]) {
      const auto it = row_of.find(id);
      if (it == row_of.end() || !alive[it->second]) continue;
      alive[it->second] = false;
      rows.push_back(it->second);
      request.ids.push_back(id);
      request.y.push_back(train.labels[it->second]);
    }
    request.x = train.x(rows, Eigen::all);

    const auto start = std::chrono::steady_clock::now();
    const RoundOutcome outcome = engine.process_request(request);
    m.wall_ms = elapsed_ms(start);

    m.round = outcome.round;
    m.accepted = outcome.accepted;
    m.gamma = outcome.gamma;
    m.phi = outcome.phi;
    m.grad_norm = outcome.grad_norm;
    m.step_skipped = outcome.step_skipped;
    for (int c : outcome.exhausted_classes) {
      m.warnings.push_back("class " + std::to_string(c) + " exhausted; its Gaussian stats are frozen");
    }

    std::vector<Eigen::Index> alive_rows;
    for (Eigen::Index i = 0; i < train.size(); ++i) {
      if (alive[i]) alive_rows.push_back(i);
    }
    const Dataset remaining = train.subset(alive_rows);
    const ForgettingLedger& ledger = engine.ledger();
    m.size_dt = remaining.size();
    m.forgotten_total = ledger.size();

    const std::uint64_t mia_seed = config.seed * 1000003ULL + static_cast<std::uint64_t>(m.round);
    const ModelParams& wt = outcome.w;
    m.ra = accuracy(wt, remaining);
    m.fa = accuracy(wt, ledger.x(), ledger.y());
    m.ta = accuracy(wt, test);
    if (config.mia) m.mia = mia_attack(wt, remaining, test, ledger.x(), ledger.y(), mia_seed);

    if (with_oracle) {
      OracleMetrics o;
      const auto retrain_start = std::chrono::steady_clock::now();
      const RetrainResult rr = retrain(remaining, arch, config.retrain);
      o.retrain_ms = elapsed_ms(retrain_start);
      o.retrain_epochs = rr.epochs;
      const ModelParams& w_star = rr.w;
      o.ra = accuracy(w_star, remaining);
      o.fa = accuracy(w_star, ledger.x(), ledger.y());
      o.ta = accuracy(w_star, test);
      if (config.mia) o.mia = mia_attack(w_star, remaining, test, ledger.x(), ledger.y(), mia_seed);
      o.risk_unlearned = true_risk(wt, remaining, ledger.x(), w_star, lambda);
      o.risk_optimal = true_risk(w_star, remaining, ledger.x(), w_star, lambda);
      regret_update(regret, o.risk_unlearned, o.risk_optimal, w_star, *w_star_prev);
      o.regret = regret.regret.back();
      o.cumulative_regret = regret.cumulative;
      o.path_length = regret.path_length;
      w_star_prev = w_star;
      m.oracle = o;

      if (verify) {
        GapDiagnostic g;
        g.true_risk = o.risk_unlearned;
        g.surrogate_risk = surrogate_risk(wt, &train, ledger, forgetting_targets(ledger, engine.shift_model(), w0), lambda);
        g.gap = std::abs(g.surrogate_risk - g.true_risk);
        g.bound = risk_gap_bound(arch.num_classes, ledger.size(), remaining.size());
        m.gap = g;
      }
    }

    if (verify) {
      VerifyChecks v;
      const Vector direct = grad_cross_entropy(w0, remaining.view());
      v.retention_max_err = (direct - engine.retention().grad).cwiseAbs().maxCoeff();
      const ShiftModel& shift = engine.shift_model();
      for (int c = 0; c < shift.num_classes(); ++c) {
        const auto& cs = shift.classes[c];
        if (cs.frozen) continue;
        std::vector<Eigen::Index> class_rows;
        for (Eigen::Index i = 0; i < remaining.size(); ++i) {
          if (remaining.labels[i] == c) class_rows.push_back(i);
        }
        const SampleMoments fresh = two_pass_moments(
            project_standardize_rows(shift.projection, remaining.x(class_rows, Eigen::all), cs.whitener));
        double err = std::max((fresh.mean - cs.stats.mu).cwiseAbs().maxCoeff(),
                              (fresh.cov - cs.stats.sigma).cwiseAbs().maxCoeff());
        if (fresh.n != cs.stats.n) err = std::numeric_limits<double>::infinity();
        v.stats_max_err = std::max(v.stats_max_err, err);
      }
      if (!outcome.step_skipped) {
        v.step_norm_err = std::abs((wt.theta() - w0.theta() + outcome.perturbation).norm() - outcome.gamma);
      }
      v.passed = v.retention_max_err <= kVerifyRetentionTol && v.stats_max_err <= kVerifyStatsTol &&
                 v.step_norm_err <= kVerifyStepTol;
      result.verify_passed = result.verify_passed && v.passed;
      m.verify = v;
    }

    if (jsonl != nullptr) {
      Json rec = round_to_json(m);
      rec["config_hash"] = hash;
      rec["config"] = resolved;
      *jsonl << rec.dump() << '\n';
    }
    if (timing != nullptr) {
      Json rec = {{"round", m.round}, {"config_hash", hash}, {"safe_ms", m.wall_ms}};
      if (m.oracle) rec["retrain_ms"] = m.oracle->retrain_ms;
      *timing << rec.dump() << '\n';
    }
    result.rounds.push_back(std::move(m));
  }

  if (jsonl != nullptr) {
    Json summary = summary_to_json(result);
    summary["config_hash"] = hash;
    summary["config"] = resolved;
    *jsonl << summary.dump() << '\n';
    jsonl->flush();
  }
  return result;
}

std::vector<std::filesystem::path> run_sweep(const RunConfig& config, const std::filesystem::path& output) {
  std::vector<std::filesystem::path> written;
  for (double k : config.sweep_k) {
    RunConfig cell = config;
    cell.safe.k = k;
    std::ostringstream name;
    name << output.stem().string() << ".K" << k << ".jsonl";
    const std::filesystem::path path = output.parent_path() / name.str();
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    run_experiment(cell, RunMode::kRun, &out);
    written.push_back(path);
  }
  return written;
}

}  // namespace safe
