#include "safe/model.hpp"

#include <random>

namespace safe {

namespace {

struct LinearView {
  Eigen::Map<const Matrix> w;
  Eigen::Map<const Vector> b;
};

struct MlpView {
  Eigen::Map<const Matrix> w1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const Matrix> w2;
  Eigen::Map<const Vector> b2;
};

LinearView linear_view(const Arch& a, const Vector& theta) {
  const Eigen::Index d = a.input_dim, c = a.num_classes;
  return {Eigen::Map<const Matrix>(theta.data(), c, d), Eigen::Map<const Vector>(theta.data() + c * d, c)};
}

MlpView mlp_view(const Arch& a, const Vector& theta) {
  const Eigen::Index d = a.input_dim, h = a.hidden_dim, c = a.num_classes;
  const double* p = theta.data();
  return {Eigen::Map<const Matrix>(p, h, d), Eigen::Map<const Vector>(p + h * d, h),
          Eigen::Map<const Matrix>(p + h * d + h, c, h), Eigen::Map<const Vector>(p + h * d + h + c * h, c)};
}

void check_input(const ModelParams& params, Eigen::Index cols) {
  if (cols != params.arch().input_dim) {
    throw InputError("feature dimension " + std::to_string(cols) + " does not match model input dimension " +
                     std::to_string(params.arch().input_dim));
  }
}

void check_batch(const ModelParams& params, const BatchView& batch) {
  if (batch.size() == 0) throw InputError("empty batch");
  if (static_cast<Eigen::Index>(batch.y.size()) != batch.size()) throw InputError("batch label count mismatch");
  check_input(params, batch.x.cols());
  for (int y : batch.y) {
    if (y < 0 || y >= params.arch().num_classes) throw InputError("label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

Eigen::Index Arch::num_params() const noexcept {
  const Eigen::Index d = input_dim, h = hidden_dim, c = num_classes;
  if (h == 0) return c * d + c;
  return h * d + h + c * h + c;
}

std::string Arch::describe() const {
  if (is_linear()) return "linear(" + std::to_string(input_dim) + "->" + std::to_string(num_classes) + ")";
  return "mlp(" + std::to_string(input_dim) + "->" + std::to_string(hidden_dim) + "->" +
         std::to_string(num_classes) + ")";
}

void validate(const Arch& arch) {
  if (arch.input_dim < 1) throw ConfigError("arch.input_dim must be >= 1");
  if (arch.hidden_dim < 0) throw ConfigError("arch.hidden_dim must be >= 0");
  if (arch.num_classes < 2) throw ConfigError("arch.num_classes must be >= 2");
}

ModelParams::ModelParams(Arch arch, Vector theta) : arch_(arch), theta_(std::move(theta)) {
  validate(arch_);
  if (theta_.size() != arch_.num_params()) {
    throw InputError("theta has " + std::to_string(theta_.size()) + " entries, " + arch_.describe() + " needs " +
                     std::to_string(arch_.num_params()));
  }
  if (!theta_.allFinite()) throw NumericalError("theta contains non-finite entries");
}

ModelParams ModelParams::zeros(const Arch& arch) {
  validate(arch);
  return ModelParams(arch, Vector::Zero(arch.num_params()));
}

ModelParams ModelParams::random(const Arch& arch, std::uint64_t seed, double scale) {
  validate(arch);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Vector theta(arch.num_params());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = normal(rng);
  return ModelParams(arch, std::move(theta));
}

RowMatrix logits(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x) {
  check_input(params, x.cols());
  const Arch& a = params.arch();
  if (a.is_linear()) {
    const auto v = linear_view(a, params.theta());
    RowMatrix z = x * v.w.transpose();
    z.rowwise() += v.b.transpose();
    return z;
  }
  const auto v = mlp_view(a, params.theta());
  RowMatrix hidden = x * v.w1.transpose();
  hidden.rowwise() += v.b1.transpose();
  hidden = hidden.array().tanh();
  RowMatrix z = hidden * v.w2.transpose();
  z.rowwise() += v.b2.transpose();
  return z;
}

RowMatrix predict_proba_batch(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x) {
  return softmax_rows(logits(params, x));
}

Vector predict_proba(const ModelParams& params, const Eigen::Ref<const Vector>& x) {
  check_input(params, x.size());
  RowMatrix row = x.transpose();
  return predict_proba_batch(params, row).row(0).transpose();
}

double cross_entropy_loss(const ModelParams& params, const Eigen::Ref<const Vector>& x, int y) {
  const Vector p = predict_proba(params, x);
  if (y < 0 || y >= p.size()) throw InputError("label " + std::to_string(y) + " out of range");
  return -std::log(std::max(p(y), kProbFloor));
}

double mean_cross_entropy(const ModelParams& params, const BatchView& batch) {
  check_batch(params, batch);
  const RowMatrix p = predict_proba_batch(params, batch.x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) total -= std::log(std::max(p(i, batch.y[i]), kProbFloor));
  return total / static_cast<double>(p.rows());
}

Vector backprop_logits(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x,
                       const Eigen::Ref<const RowMatrix>& dlogits) {
  check_input(params, x.cols());
  const Arch& a = params.arch();
  Vector grad(a.num_params());
  const Eigen::Index d = a.input_dim, c = a.num_classes;
  if (a.is_linear()) {
    Eigen::Map<Matrix>(grad.data(), c, d) = dlogits.transpose() * x;
    Eigen::Map<Vector>(grad.data() + c * d, c) = dlogits.colwise().sum().transpose();
    return grad;
  }
  const Eigen::Index h = a.hidden_dim;
  const auto v = mlp_view(a, params.theta());
  RowMatrix hidden = x * v.w1.transpose();
  hidden.rowwise() += v.b1.transpose();
  hidden = hidden.array().tanh();

  double* g = grad.data();
  Eigen::Map<Matrix>(g + h * d + h, c, h) = dlogits.transpose() * hidden;
  Eigen::Map<Vector>(g + h * d + h + c * h, c) = dlogits.colwise().sum().transpose();
  RowMatrix dhidden = dlogits * v.w2;
  dhidden.array() *= (1.0 - hidden.array().square());
  Eigen::Map<Matrix>(g, h, d) = dhidden.transpose() * x;
  Eigen::Map<Vector>(g + h * d, h) = dhidden.colwise().sum().transpose();
  return grad;
}

Vector grad_cross_entropy(const ModelParams& params, const BatchView& batch) {
  check_batch(params, batch);
  RowMatrix dlogits = predict_proba_batch(params, batch.x);
  for (Eigen::Index i = 0; i < dlogits.rows(); ++i) dlogits(i, batch.y[i]) -= 1.0;
  dlogits /= static_cast<double>(batch.size());
  return backprop_logits(params, batch.x, dlogits);
}

// d KL(p || q) / d z_k = p_k (log p_k - log q_k - KL)
Vector grad_kl_to_targets_sum(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x,
                              const Eigen::Ref<const RowMatrix>& targets) {
  if (targets.rows() != x.rows() || targets.cols() != params.arch().num_classes) {
    throw InputError("grad_kl_to_targets_sum: target shape mismatch");
  }
  const RowMatrix log_p = log_softmax_rows(logits(params, x));
  const RowMatrix p = log_p.array().exp();
  const RowMatrix log_q = targets.array().max(kProbFloor).log();
  RowMatrix ratio = log_p - log_q;
  const Vector kl = (p.array() * ratio.array()).rowwise().sum();
  ratio.colwise() -= kl;
  const RowMatrix dlogits = p.array() * ratio.array();
  return backprop_logits(params, x, dlogits);
}

Vector grad_kl_to_target(const ModelParams& params, const Eigen::Ref<const Vector>& x,
                         const Eigen::Ref<const Vector>& target) {
  check_input(params, x.size());
  if (target.size() != params.arch().num_classes) throw InputError("grad_kl_to_target: target length mismatch");
  const RowMatrix xr = x.transpose();
  const RowMatrix tr = target.transpose();
  return grad_kl_to_targets_sum(params, xr, tr);
}

int argmax_lowest(const Eigen::Ref<const Vector>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace safe
