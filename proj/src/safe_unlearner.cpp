#include "safe/safe_unlearner.hpp"

#include <cmath>
#include <sstream>

namespace safe {

void validate(const SafeConfig& config) {
  if (!(config.k > 0.0)) throw ConfigError("safe.K must be > 0");
  if (config.horizon < 1) throw ConfigError("safe.T must be >= 1");
  if (config.weight_bound && !(*config.weight_bound > 0.0)) throw ConfigError("safe.W must be > 0");
  if (!(config.epsilon > 0.0)) throw ConfigError("safe.epsilon must be > 0");
  if (!(config.delta > 0.0 && config.delta < 1.0)) throw ConfigError("safe.delta must lie in (0, 1)");
  if (!(config.lambda >= 0.0)) throw ConfigError("safe.lambda must be >= 0");
  if (config.proj_dim < 0) throw ConfigError("safe.proj_dim must be >= 0");
}

double learning_rate(double weight_bound, double k, int horizon) {
  return std::sqrt(weight_bound) / (k * std::sqrt(static_cast<double>(horizon)));
}

double perturbation_scale(double weight_bound, double epsilon, double delta) {
  return weight_bound * std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

Vector sample_perturbation(double phi, Eigen::Index dim, std::mt19937_64& rng) {
  Vector b(dim);
  if (phi == 0.0) return b.setZero();
  std::normal_distribution<double> normal(0.0, phi);
  for (Eigen::Index i = 0; i < dim; ++i) b(i) = normal(rng);
  return b;
}

RetentionGradState update_retention_grad(const RetentionGradState& state,
                                         const Eigen::Ref<const Vector>& removed_grad_sum, Eigen::Index m) {
  if (m == 0) return state;
  if (m < 0) throw InputError("update_retention_grad: negative removal count");
  if (m >= state.size_dt) {
    throw StreamError("request of " + std::to_string(m) + " points would empty the remaining data (|D_t| = " +
                      std::to_string(state.size_dt) + ")");
  }
  RetentionGradState next = state;
  next.size_dt = state.size_dt - m;
  const auto prev = static_cast<double>(state.size_dt);
  const auto cur = static_cast<double>(next.size_dt);
  next.grad = (prev / cur) * state.grad - removed_grad_sum / cur;
  return next;
}

RetentionGradState update_retention_grad(const RetentionGradState& state, const ModelParams& w0,
                                         const BatchView& removed) {
  if (removed.size() == 0) return state;
  const Vector sum = grad_cross_entropy(w0, removed) * static_cast<double>(removed.size());
  return update_retention_grad(state, sum, removed.size());
}

void ForgettingLedger::append(const Request& accepted, int round) {
  for (Eigen::Index i = 0; i < accepted.size(); ++i) {
    append_point(accepted.ids[i], accepted.x.row(i).transpose(), accepted.y[i], round);
  }
}

void ForgettingLedger::append_point(SampleId id, const Eigen::Ref<const Vector>& x, int y, int round) {
  if (!id_set_.insert(id).second) throw InputError("ledger already contains id " + std::to_string(id));
  if (!ids_.empty() && x.size() != x_.cols()) throw InputError("ledger: feature dimension mismatch");
  const Eigen::Index row = x_.rows();
  x_.conservativeResize(row + 1, x.size());
  x_.row(row) = x.transpose();
  ids_.push_back(id);
  y_.push_back(y);
  rounds_.push_back(round);
}

double forgetting_risk(const ModelParams& w, const Eigen::Ref<const RowMatrix>& x,
                       const Eigen::Ref<const RowMatrix>& targets, double lambda) {
  if (x.rows() == 0) return 0.0;
  const RowMatrix p = predict_proba_batch(w, x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) total += kl_divergence(p.row(i), targets.row(i));
  return lambda * total / static_cast<double>(x.rows());
}

RowMatrix forgetting_targets(const ForgettingLedger& ledger, const ShiftModel& shift, const ModelParams& w0) {
  if (ledger.empty()) return RowMatrix(0, w0.arch().num_classes);
  return target_predictions(shift, ledger.x(), predict_proba_batch(w0, ledger.x()));
}

Vector forgetting_gradient(const ForgettingLedger& ledger, const ShiftModel& shift, const ModelParams& w0,
                           double lambda) {
  if (ledger.empty()) return Vector::Zero(w0.arch().num_params());
  const RowMatrix targets = forgetting_targets(ledger, shift, w0);
  return grad_kl_to_targets_sum(w0, ledger.x(), targets) * (lambda / static_cast<double>(ledger.size()));
}

SafeEngine::SafeEngine(ModelParams w0, Vector initial_retention_grad, Eigen::Index size_d0, ShiftModel shift,
                       SafeConfig config)
    : w0_(std::move(w0)),
      retention_{std::move(initial_retention_grad), size_d0, size_d0},
      shift_(std::move(shift)),
      config_(config),
      rng_(config.seed) {
  validate(config_);
  if (retention_.grad.size() != w0_.arch().num_params()) throw InputError("initial retention gradient size mismatch");
  if (size_d0 < 1) throw InputError("|D_0| must be positive");
  if (shift_.num_classes() != w0_.arch().num_classes) throw InputError("shift model class count mismatch");
  init_schedule();
}

void SafeEngine::init_schedule() {
  weight_bound_ = config_.weight_bound.value_or(w0_.theta().norm());
  if (!(weight_bound_ > 0.0)) throw ConfigError("W resolved to ||w_0|| = 0; set safe.W explicitly");
  gamma_ = learning_rate(weight_bound_, config_.k, config_.horizon);
  phi_ = perturbation_scale(weight_bound_, config_.epsilon, config_.delta);
}

RoundOutcome SafeEngine::process_request(const Request& request) {
  if (static_cast<Eigen::Index>(request.y.size()) != request.size() || request.x.rows() != request.size()) {
    throw InputError("request: ids, rows and labels disagree in length");
  }
  RoundOutcome out;
  out.round = ++round_;

  // Points already forgotten (or repeated within the request) are dropped.
  Request accepted;
  std::unordered_set<SampleId> seen;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < request.size(); ++i) {
    const SampleId id = request.ids[i];
    if (ledger_.contains(id) || !seen.insert(id).second) continue;
    keep.push_back(i);
  }
  out.duplicates_dropped = request.size() - static_cast<Eigen::Index>(keep.size());
  accepted.x = request.x(keep, Eigen::all);
  for (Eigen::Index i : keep) {
    accepted.ids.push_back(request.ids[i]);
    accepted.y.push_back(request.y[i]);
  }
  out.accepted = accepted.size();

  if (accepted.size() > 0) {
    retention_ = update_retention_grad(retention_, w0_, BatchView{accepted.x, accepted.y});
    out.exhausted_classes = remove_points(shift_, accepted.x, accepted.y);
    ledger_.append(accepted, round_);
  }

  out.retention_grad = retention_.grad;
  out.forgetting_grad = forgetting_gradient(ledger_, shift_, w0_, config_.lambda);
  const Vector g = out.retention_grad + out.forgetting_grad;
  out.grad_norm = g.norm();
  out.gamma = gamma_;
  out.phi = phi_;
  out.perturbation = sample_perturbation(phi_, g.size(), rng_);

  Vector theta = w0_.theta() - out.perturbation;
  if (out.grad_norm < 1e-12) {
    out.step_skipped = true;
  } else {
    theta -= gamma_ * g / out.grad_norm;
  }
  if (!theta.allFinite()) throw NumericalError("update produced non-finite parameters");
  out.w = ModelParams(w0_.arch(), std::move(theta));
  return out;
}

SafeEngine::State SafeEngine::snapshot() const {
  std::ostringstream rng;
  rng << rng_;
  return {retention_, ledger_, shift_, round_, rng.str()};
}

SafeEngine SafeEngine::restore(ModelParams w0, State state, SafeConfig config) {
  validate(config);
  SafeEngine e;
  e.w0_ = std::move(w0);
  e.retention_ = std::move(state.retention);
  e.ledger_ = std::move(state.ledger);
  e.shift_ = std::move(state.shift);
  e.config_ = config;
  e.round_ = state.round;
  std::istringstream rng(state.rng_state);
  rng >> e.rng_;
  if (rng.fail()) throw InputError("checkpoint: invalid rng state");
  e.init_schedule();
  return e;
}

}  // namespace safe
