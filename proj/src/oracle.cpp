#include "safe/oracle.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace safe {

void validate(const RetrainConfig& config) {
  if (config.max_epochs < 0) throw ConfigError("retrain.max_epochs must be >= 0");
  if (!(config.step_size > 0.0)) throw ConfigError("retrain.step_size must be > 0");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) throw ConfigError("retrain.momentum must lie in [0, 1)");
  if (config.batch_size < 0) throw ConfigError("retrain.batch_size must be >= 0");
  if (!(config.grad_tol >= 0.0)) throw ConfigError("retrain.grad_tol must be >= 0");
  if (!(config.init_scale >= 0.0)) throw ConfigError("retrain.init_scale must be >= 0");
}

namespace {

void check_finite(double loss, int epoch) {
  if (!std::isfinite(loss)) throw NumericalError("retrain diverged at epoch " + std::to_string(epoch));
}

RetrainResult full_batch(const Dataset& data, ModelParams w, const RetrainConfig& config) {
  const BatchView batch = data.view();
  Vector velocity = Vector::Zero(w.theta().size());
  RetrainResult r;
  Vector grad = grad_cross_entropy(w, batch);
  int epoch = 0;
  for (; epoch < config.max_epochs && grad.norm() >= config.grad_tol; ++epoch) {
    // Nesterov: evaluate the gradient at the look-ahead point.
    ModelParams ahead(w.arch(), w.theta() + config.momentum * velocity);
    const Vector g_ahead = grad_cross_entropy(ahead, batch);
    velocity = config.momentum * velocity - config.step_size * g_ahead;
    w.theta() += velocity;
    grad = grad_cross_entropy(w, batch);
    if (!grad.allFinite()) check_finite(std::nan(""), epoch);
  }
  r.final_loss = mean_cross_entropy(w, batch);
  check_finite(r.final_loss, epoch);
  r.grad_norm = grad.norm();
  r.epochs = epoch;
  r.w = std::move(w);
  return r;
}

RetrainResult mini_batch(const Dataset& data, ModelParams w, const RetrainConfig& config) {
  std::mt19937_64 rng(config.seed ^ 0xda942042e4dd58b5ULL);
  std::vector<Eigen::Index> order(data.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Vector velocity = Vector::Zero(w.theta().size());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      const RowMatrix xb = data.x(rows, Eigen::all);
      std::vector<int> yb;
      yb.reserve(rows.size());
      for (Eigen::Index r : rows) yb.push_back(data.labels[r]);
      const Vector g = grad_cross_entropy(w, BatchView{xb, yb});
      velocity = config.momentum * velocity - config.step_size * g;
      w.theta() += velocity;
    }
    if (!w.theta().allFinite()) check_finite(std::nan(""), epoch);
  }
  RetrainResult r;
  r.final_loss = mean_cross_entropy(w, data.view());
  check_finite(r.final_loss, config.max_epochs);
  r.grad_norm = grad_cross_entropy(w, data.view()).norm();
  r.epochs = config.max_epochs;
  r.w = std::move(w);
  return r;
}

}  // namespace

RetrainResult retrain(const Dataset& data, const Arch& arch, const RetrainConfig& config) {
  validate(config);
  if (data.empty()) throw InputError("retrain: empty dataset");
  ModelParams w = ModelParams::random(arch, config.seed, config.init_scale);
  if (config.batch_size == 0 || config.batch_size >= data.size()) return full_batch(data, std::move(w), config);
  return mini_batch(data, std::move(w), config);
}

double true_risk(const ModelParams& w, const Dataset& remaining, const Eigen::Ref<const RowMatrix>& forgotten_x,
                 const ModelParams& w_star, double lambda) {
  double risk = mean_cross_entropy(w, remaining.view());
  if (forgotten_x.rows() > 0) risk += forgetting_risk(w, forgotten_x, predict_proba_batch(w_star, forgotten_x), lambda);
  return risk;
}

double surrogate_risk(const ModelParams& w, const Dataset* retained_d0, const ForgettingLedger& ledger,
                      const RowMatrix& surrogate_targets, double lambda) {
  if (retained_d0 == nullptr) {
    throw ConfigError("surrogate risk needs the original training set, which is only retained in verify mode");
  }
  const auto size_d0 = static_cast<double>(retained_d0->size());
  const double size_dt = size_d0 - static_cast<double>(ledger.size());
  double retention = size_d0 / size_dt * mean_cross_entropy(w, retained_d0->view());
  if (!ledger.empty()) {
    retention -= mean_cross_entropy(w, BatchView{ledger.x(), ledger.y()}) * static_cast<double>(ledger.size()) / size_dt;
  }
  return retention + forgetting_risk(w, ledger.x(), surrogate_targets, lambda);
}

double risk_gap_bound(int num_classes, Eigen::Index forgotten, Eigen::Index remaining) {
  return num_classes * static_cast<double>(forgotten) / std::pow(static_cast<double>(remaining), 1.5);
}

void regret_update(RegretAccount& account, double risk_w, double risk_star, const ModelParams& w_star,
                   const ModelParams& w_star_prev) {
  account.risk_unlearned.push_back(risk_w);
  account.risk_optimal.push_back(risk_star);
  account.regret.push_back(risk_w - risk_star);
  account.cumulative += risk_w - risk_star;
  account.path_length += (w_star.theta() - w_star_prev.theta()).norm();
}

}  // namespace safe
