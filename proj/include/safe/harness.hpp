#pragma once

#include "safe/data.hpp"
#include "safe/json_io.hpp"
#include "safe/oracle.hpp"
#include "safe/safe_unlearner.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace safe {

enum class RunMode { kRun, kVerify, kSweep };

struct DatasetSpec {
  std::string kind = "synthetic";  // synthetic | idx | csv
  // synthetic
  int n = 5000;
  int dim = 16;
  int num_classes = 5;
  double separation = 4.0;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  // csv
  std::string csv_path;
  std::string label_column = "label";
  double test_fraction = 0.2;
};

/// Everything a run needs. Sub-seeds are derived from `seed`.
struct RunConfig {
  DatasetSpec dataset;
  int hidden_dim = 0;
  SafeConfig safe;
  RetrainConfig retrain;
  RequestStreamSpec stream;
  bool oracle = false;
  bool mia = true;
  std::optional<std::string> initial_model;
  std::vector<double> sweep_k = {1.0, 2.5, 5.0, 10.0};
  std::uint64_t seed = 0;

  /// Copies `seed` into every component's seed.
  void derive_seeds();
};

/// Parses a nested JSON config; unknown keys are rejected.
[[nodiscard]] RunConfig run_config_from_json(const Json& j);
[[nodiscard]] Json run_config_to_json(const RunConfig& c);
void validate(const RunConfig& c);

/// 64-bit FNV-1a of the canonical config dump, as hex.
[[nodiscard]] std::string config_hash(const Json& resolved);

struct OracleMetrics {
  std::optional<double> ra, fa, ta, mia;
  double risk_unlearned = 0.0;
  double risk_optimal = 0.0;
  double regret = 0.0;
  double cumulative_regret = 0.0;
  double path_length = 0.0;
  int retrain_epochs = 0;
  double retrain_ms = 0.0;
};

struct GapDiagnostic {
  double surrogate_risk = 0.0;
  double true_risk = 0.0;
  double gap = 0.0;
  double bound = 0.0;
};

struct VerifyChecks {
  double retention_max_err = 0.0;
  double stats_max_err = 0.0;
  double step_norm_err = 0.0;
  bool passed = true;
};

struct RoundMetrics {
  int round = 0;
  Eigen::Index requested = 0;
  Eigen::Index accepted = 0;
  Eigen::Index size_dt = 0;
  Eigen::Index forgotten_total = 0;
  std::optional<double> ra, fa, ta, mia;
  double gamma = 0.0;
  double phi = 0.0;
  double grad_norm = 0.0;
  bool step_skipped = false;
  double wall_ms = 0.0;  ///< SAFE update time only
  std::vector<std::string> warnings;
  std::optional<OracleMetrics> oracle;
  std::optional<GapDiagnostic> gap;
  std::optional<VerifyChecks> verify;
};

struct RunResult {
  std::vector<RoundMetrics> rounds;
  double weight_bound = 0.0;
  bool verify_passed = true;
};

inline constexpr double kVerifyRetentionTol = 1e-10;
inline constexpr double kVerifyStatsTol = 1e-8;
inline constexpr double kVerifyStepTol = 1e-10;

/// Loads or generates the train/test data described by the config.
[[nodiscard]] TrainTest load_dataset(const RunConfig& config);

/// The full streaming experiment. `jsonl` receives one record per round and a
/// final summary record; `timing` (optional) receives wall-clock records,
/// kept separate so the main output is reproducible byte for byte.
RunResult run_experiment(const RunConfig& config, RunMode mode, std::ostream* jsonl = nullptr,
                         std::ostream* timing = nullptr);

/// Runs once per K in `sweep_k`, writing `<stem>.K<k>.jsonl` next to `output`.
std::vector<std::filesystem::path> run_sweep(const RunConfig& config, const std::filesystem::path& output);

[[nodiscard]] Json round_to_json(const RoundMetrics& m);
[[nodiscard]] Json summary_to_json(const RunResult& r);

}  // namespace safe
