#pragma once

#include "safe/model.hpp"
#include "safe/shift_estimator.hpp"

#include <optional>
#include <random>
#include <unordered_set>
#include <vector>

namespace safe {

struct SafeConfig {
  double k = 2.5;                       ///< learning-rate constant K
  int horizon = 20;                     ///< planned number of rounds T
  std::optional<double> weight_bound;   ///< W; defaults to ||w_0||_2
  double epsilon = 5.0;
  double delta = 1e-5;
  double lambda = 1000.0;
  int proj_dim = 0;                     ///< 0 selects min(input_dim, 32)
  std::uint64_t seed = 0;
};

void validate(const SafeConfig& config);

/// gamma = sqrt(W) / (K sqrt(T))
[[nodiscard]] double learning_rate(double weight_bound, double k, int horizon);
/// phi = W sqrt(2 ln(1.25 / delta)) / epsilon, used as the standard deviation of b_t.
[[nodiscard]] double perturbation_scale(double weight_bound, double epsilon, double delta);

/// i.i.d. N(0, phi^2) draws, one per coordinate.
[[nodiscard]] Vector sample_perturbation(double phi, Eigen::Index dim, std::mt19937_64& rng);

/// Gradient of the retention risk at w_0, maintained without D_0.
struct RetentionGradState {
  Vector grad;
  Eigen::Index size_dt = 0;
  Eigen::Index size_d0 = 0;
};

/// grad_t = (|D_{t-1}| / |D_t|) grad_{t-1} - (1 / |D_t|) sum_{F_t} grad l(w_0).
/// `removed_grad_sum` is the summed per-sample gradient over the m removed points.
[[nodiscard]] RetentionGradState update_retention_grad(const RetentionGradState& state,
                                                       const Eigen::Ref<const Vector>& removed_grad_sum,
                                                       Eigen::Index m);

/// Same update, computing the summed gradient of `removed` at w_0.
[[nodiscard]] RetentionGradState update_retention_grad(const RetentionGradState& state, const ModelParams& w0,
                                                       const BatchView& removed);

/// One deletion request.
struct Request {
  std::vector<SampleId> ids;
  RowMatrix x;
  std::vector<int> y;

  [[nodiscard]] Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(ids.size()); }
};

/// Every point forgotten so far. Stores raw points so targets can be
/// recomputed under the current statistics each round.
class ForgettingLedger {
 public:
  [[nodiscard]] bool contains(SampleId id) const { return id_set_.contains(id); }
  void append(const Request& accepted, int round);
  void append_point(SampleId id, const Eigen::Ref<const Vector>& x, int y, int round);

  [[nodiscard]] Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(ids_.size()); }
  [[nodiscard]] bool empty() const noexcept { return ids_.empty(); }
  [[nodiscard]] const std::vector<SampleId>& ids() const noexcept { return ids_; }
  [[nodiscard]] const RowMatrix& x() const noexcept { return x_; }
  [[nodiscard]] const std::vector<int>& y() const noexcept { return y_; }
  [[nodiscard]] const std::vector<int>& rounds() const noexcept { return rounds_; }

 private:
  std::vector<SampleId> ids_;
  RowMatrix x_;
  std::vector<int> y_;
  std::vector<int> rounds_;
  std::unordered_set<SampleId> id_set_;
};

/// (lambda / N) sum_i KL(f(x_i; w) || target_i), N = ledger size.
[[nodiscard]] double forgetting_risk(const ModelParams& w, const Eigen::Ref<const RowMatrix>& x,
                                     const Eigen::Ref<const RowMatrix>& targets, double lambda);

/// Surrogate forgetting targets q_t(x) f(x; w_0) for every ledger point.
[[nodiscard]] RowMatrix forgetting_targets(const ForgettingLedger& ledger, const ShiftModel& shift,
                                           const ModelParams& w0);

/// Gradient at w_0 of the surrogate forgetting risk over the whole ledger;
/// zero for an empty ledger.
[[nodiscard]] Vector forgetting_gradient(const ForgettingLedger& ledger, const ShiftModel& shift,
                                         const ModelParams& w0, double lambda);

struct RoundOutcome {
  int round = 0;
  ModelParams w;
  Vector perturbation;
  Vector retention_grad;
  Vector forgetting_grad;
  double grad_norm = 0.0;
  double gamma = 0.0;
  double phi = 0.0;
  bool step_skipped = false;
  Eigen::Index accepted = 0;
  Eigen::Index duplicates_dropped = 0;
  std::vector<int> exhausted_classes;
};

/// Streaming unlearner. Holds w_0, the retention gradient, the ledger and the
/// shift model; never sees the original training set.
class SafeEngine {
 public:
  SafeEngine(ModelParams w0, Vector initial_retention_grad, Eigen::Index size_d0, ShiftModel shift,
             SafeConfig config);

  /// Processes one request and returns w_t. w_0 is never modified.
  RoundOutcome process_request(const Request& request);

  [[nodiscard]] const ModelParams& w0() const noexcept { return w0_; }
  [[nodiscard]] const RetentionGradState& retention() const noexcept { return retention_; }
  [[nodiscard]] const ForgettingLedger& ledger() const noexcept { return ledger_; }
  [[nodiscard]] const ShiftModel& shift_model() const noexcept { return shift_; }
  [[nodiscard]] const SafeConfig& config() const noexcept { return config_; }
  [[nodiscard]] int round() const noexcept { return round_; }
  [[nodiscard]] double weight_bound() const noexcept { return weight_bound_; }
  [[nodiscard]] double gamma() const noexcept { return gamma_; }
  [[nodiscard]] double phi() const noexcept { return phi_; }

  // Checkpoint support.
  struct State {
    RetentionGradState retention;
    ForgettingLedger ledger;
    ShiftModel shift;
    int round = 0;
    std::string rng_state;
  };
  [[nodiscard]] State snapshot() const;
  static SafeEngine restore(ModelParams w0, State state, SafeConfig config);

 private:
  SafeEngine() = default;
  void init_schedule();

  ModelParams w0_;
  RetentionGradState retention_;
  ForgettingLedger ledger_;
  ShiftModel shift_;
  SafeConfig config_;
  int round_ = 0;
  double weight_bound_ = 0.0;
  double gamma_ = 0.0;
  double phi_ = 0.0;
  std::mt19937_64 rng_;
};

}  // namespace safe
