#include "safe/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace safe {

std::optional<double> accuracy(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x,
                               std::span<const int> y) {
  if (x.rows() == 0) return std::nullopt;
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw InputError("accuracy: label count mismatch");
  const RowMatrix p = predict_proba_batch(params, x);
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (argmax_lowest(p.row(i).transpose()) == y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(p.rows());
}

std::optional<double> accuracy(const ModelParams& params, const Dataset& data) {
  return accuracy(params, data.x, data.labels);
}

RowMatrix confidence_features(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x,
                              std::span<const int> y) {
  const RowMatrix p = predict_proba_batch(params, x);
  RowMatrix f(p.rows(), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double entropy = 0.0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      if (p(i, c) > 0.0) entropy -= p(i, c) * std::log(p(i, c));
    }
    f(i, 0) = p.row(i).maxCoeff();
    f(i, 1) = p(i, y[i]);
    f(i, 2) = entropy;
  }
  return f;
}

double mia_attack_from_features(const Eigen::Ref<const RowMatrix>& members, const Eigen::Ref<const RowMatrix>& non_members,
                                const Eigen::Ref<const RowMatrix>& probe, std::uint64_t seed) {
  if (members.rows() == 0 || non_members.rows() == 0) throw InputError("mia: both attacker sides must be non-empty");
  if (members.cols() != non_members.cols() || probe.cols() != members.cols()) {
    throw InputError("mia: feature width mismatch");
  }
  const Eigen::Index n_pos = members.rows(), n_neg = non_members.rows();
  const Eigen::Index n = n_pos + n_neg;
  const Eigen::Index d = members.cols();
  RowMatrix x(n, d);
  x << members, non_members;

  const Vector mean = x.colwise().mean().transpose();
  Vector scale = ((x.rowwise() - mean.transpose()).array().square().colwise().sum() / static_cast<double>(n))
                     .sqrt()
                     .transpose();
  if ((scale.array() < 1e-12).all()) {
    if (n_pos == n_neg) return 0.5;
    return n_pos > n_neg ? 1.0 : 0.0;
  }
  scale = scale.unaryExpr([](double s) { return s < 1e-12 ? 1.0 : s; });
  RowMatrix xs = (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();

  // Balanced class weights so the intercept is not driven by the side sizes.
  Vector target(n), weight(n);
  target.head(n_pos).setOnes();
  target.tail(n_neg).setZero();
  weight.head(n_pos).setConstant(0.5 * static_cast<double>(n) / static_cast<double>(n_pos));
  weight.tail(n_neg).setConstant(0.5 * static_cast<double>(n) / static_cast<double>(n_neg));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  Vector coef(d);
  for (Eigen::Index j = 0; j < d; ++j) coef(j) = normal(rng);
  double bias = 0.0;
  constexpr double kStep = 0.5;
  constexpr double kL2 = 1e-4;
  for (int it = 0; it < 500; ++it) {
    const Vector z = (xs * coef).array() + bias;
    const Vector p = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    const Vector r = weight.cwiseProduct(p - target) / static_cast<double>(n);
    coef -= kStep * (xs.transpose() * r + kL2 * coef);
    bias -= kStep * r.sum();
  }

  if (probe.rows() == 0) return 0.0;
  const RowMatrix ps = (probe.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  const Vector z = (ps * coef).array() + bias;
  return static_cast<double>((z.array() >= 0.0).count()) / static_cast<double>(probe.rows());
}

namespace {

std::vector<Eigen::Index> sample_rows(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng) {
  std::vector<Eigen::Index> rows(n);
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  if (k < n) {
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(k);
    std::sort(rows.begin(), rows.end());
  }
  return rows;
}

}  // namespace

std::optional<double> mia_attack(const ModelParams& params, const Dataset& remaining, const Dataset& test,
                                 const Eigen::Ref<const RowMatrix>& forget_x, std::span<const int> forget_y,
                                 std::uint64_t seed) {
  if (forget_x.rows() == 0) return std::nullopt;
  if (remaining.empty() || test.empty()) throw InputError("mia: remaining and test sets must be non-empty");
  std::mt19937_64 rng(seed);
  const Dataset pos = remaining.subset(sample_rows(remaining.size(), std::min(remaining.size(), kMiaMaxPerSide), rng));
  const Dataset neg = test.subset(sample_rows(test.size(), std::min(test.size(), kMiaMaxPerSide), rng));
  return mia_attack_from_features(confidence_features(params, pos.x, pos.labels),
                                  confidence_features(params, neg.x, neg.labels),
                                  confidence_features(params, forget_x, forget_y), rng());
}

}  // namespace safe
