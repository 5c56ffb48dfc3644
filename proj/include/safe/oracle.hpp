#pragma once

#include "safe/data.hpp"
#include "safe/model.hpp"
#include "safe/safe_unlearner.hpp"

#include <vector>

namespace safe {

struct RetrainConfig {
  int max_epochs = 3000;
  double step_size = 1.0;
  double momentum = 0.9;   ///< Nesterov momentum; 0 gives plain descent
  int batch_size = 0;      ///< 0 selects full-batch descent
  double grad_tol = 1e-7;  ///< full-batch stopping threshold on ||grad||
  double init_scale = 0.01;
  std::uint64_t seed = 0;
};

void validate(const RetrainConfig& config);

struct RetrainResult {
  ModelParams w;
  int epochs = 0;
  double final_loss = 0.0;
  double grad_norm = 0.0;
};

/// Trains from a seeded fresh initialisation. Full-batch runs stop once the
/// gradient norm drops below `grad_tol`; mini-batch runs use all epochs.
[[nodiscard]] RetrainResult retrain(const Dataset& data, const Arch& arch, const RetrainConfig& config);

/// R_t(w): mean loss over D_t plus (lambda / N) sum KL(f(x; w) || f(x; w*))
/// over the N forgotten points.
[[nodiscard]] double true_risk(const ModelParams& w, const Dataset& remaining,
                               const Eigen::Ref<const RowMatrix>& forgotten_x, const ModelParams& w_star,
                               double lambda);

/// R~_t(w) = (|D_0| / |D_t|) R_0(w) - (1 / |D_t|) sum_forgotten l(w)
///         + (lambda / N) sum KL(f(x; w) || q_t(x) f(x; w_0)).
/// Needs the original training set, so it is only available when a run
/// retains it for verification; passing nullptr throws ConfigError.
[[nodiscard]] double surrogate_risk(const ModelParams& w, const Dataset* retained_d0, const ForgettingLedger& ledger,
                                    const RowMatrix& surrogate_targets, double lambda);

/// C * sum|F_i| / |D_t|^{3/2}
[[nodiscard]] double risk_gap_bound(int num_classes, Eigen::Index forgotten, Eigen::Index remaining);

struct RegretAccount {
  std::vector<double> risk_unlearned;  ///< R_t(w_t)
  std::vector<double> risk_optimal;    ///< R_t(w_t^*)
  std::vector<double> regret;          ///< per round
  double cumulative = 0.0;
  double path_length = 0.0;            ///< V_T

  [[nodiscard]] double mean_regret() const {
    return regret.empty() ? 0.0 : cumulative / static_cast<double>(regret.size());
  }
};

void regret_update(RegretAccount& account, double risk_w, double risk_star, const ModelParams& w_star,
                   const ModelParams& w_star_prev);

}  // namespace safe
