#pragma once

#include "safe/errors.hpp"
#include "safe/types.hpp"

#include <cmath>
#include <span>
#include <string>

namespace safe {

/// Network shape. `hidden_dim == 0` selects the softmax-linear model,
/// otherwise a single tanh hidden layer feeds the softmax head.
struct Arch {
  int input_dim = 0;
  int hidden_dim = 0;
  int num_classes = 0;

  [[nodiscard]] bool is_linear() const noexcept { return hidden_dim == 0; }
  [[nodiscard]] Eigen::Index num_params() const noexcept;
  [[nodiscard]] std::string describe() const;

  friend bool operator==(const Arch&, const Arch&) = default;
};

void validate(const Arch& arch);

/// Flat parameter vector plus its shape.
///
/// Layout (column-major blocks, concatenated):
///   linear: W (C x d), b (C)
///   mlp:    W1 (h x d), b1 (h), W2 (C x h), b2 (C)
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(Arch arch, Vector theta);

  static ModelParams zeros(const Arch& arch);
  /// Seeded N(0, scale^2) initialisation.
  static ModelParams random(const Arch& arch, std::uint64_t seed, double scale = 0.01);

  [[nodiscard]] const Arch& arch() const noexcept { return arch_; }
  [[nodiscard]] const Vector& theta() const noexcept { return theta_; }
  [[nodiscard]] Vector& theta() noexcept { return theta_; }

  [[nodiscard]] bool all_finite() const { return theta_.allFinite(); }

 private:
  Arch arch_;
  Vector theta_;
};

/// A labelled batch viewed without copying. Rows of `x` are samples.
struct BatchView {
  Eigen::Ref<const RowMatrix> x;
  std::span<const int> y;

  [[nodiscard]] Eigen::Index size() const noexcept { return x.rows(); }
};

// ---------------------------------------------------------------------------
// Scalar-generic kernels.

/// Row-wise numerically stable softmax.
template <typename Derived>
[[nodiscard]] RowMatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  RowMatrixX<Scalar> out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

template <typename Derived>
[[nodiscard]] RowMatrixX<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  RowMatrixX<Scalar> shifted = logits.colwise() - logits.rowwise().maxCoeff();
  VectorX<Scalar> lse = shifted.array().exp().rowwise().sum().log();
  shifted.colwise() -= lse;
  return shifted;
}

/// KL(p || q) with q floored at 1e-12 and 0 log 0 = 0.
template <typename DerivedP, typename DerivedQ>
[[nodiscard]] typename DerivedP::Scalar kl_divergence(const Eigen::MatrixBase<DerivedP>& p,
                                                      const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  if (p.size() != q.size()) {
    throw InputError("kl_divergence: length mismatch (" + std::to_string(p.size()) + " vs " +
                     std::to_string(q.size()) + ")");
  }
  Scalar kl = 0;
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    const Scalar pc = p(c);
    if (pc <= Scalar(0)) continue;
    const Scalar qc = std::max<Scalar>(q(c), Scalar(kProbFloor));
    kl += pc * (std::log(pc) - std::log(qc));
  }
  return kl;
}

// ---------------------------------------------------------------------------
// Model evaluation.

/// Logits for every row of `x` (n x C).
[[nodiscard]] RowMatrix logits(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x);

/// Softmax predictions for every row of `x` (n x C).
[[nodiscard]] RowMatrix predict_proba_batch(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x);

[[nodiscard]] Vector predict_proba(const ModelParams& params, const Eigen::Ref<const Vector>& x);

/// -log p_y with p_y floored at 1e-12.
[[nodiscard]] double cross_entropy_loss(const ModelParams& params, const Eigen::Ref<const Vector>& x, int y);

/// Mean cross-entropy over the batch.
[[nodiscard]] double mean_cross_entropy(const ModelParams& params, const BatchView& batch);

/// Mean gradient of the cross-entropy over a non-empty batch.
[[nodiscard]] Vector grad_cross_entropy(const ModelParams& params, const BatchView& batch);

/// Gradient of KL(f(x; theta) || target) with the target held fixed.
[[nodiscard]] Vector grad_kl_to_target(const ModelParams& params, const Eigen::Ref<const Vector>& x,
                                       const Eigen::Ref<const Vector>& target);

/// Sum over rows of the KL gradient, one target row per sample.
[[nodiscard]] Vector grad_kl_to_targets_sum(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x,
                                            const Eigen::Ref<const RowMatrix>& targets);

/// Gradient of sum_i <dlogits_i, logits_i(theta)>: the shared backward pass.
[[nodiscard]] Vector backprop_logits(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x,
                                     const Eigen::Ref<const RowMatrix>& dlogits);

/// Index of the largest probability; ties go to the lowest index.
[[nodiscard]] int argmax_lowest(const Eigen::Ref<const Vector>& v);

}  // namespace safe
