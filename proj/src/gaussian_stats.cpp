#include "safe/gaussian_stats.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace safe {

ProjectionMatrix make_projection(int input_dim, int proj_dim, std::uint64_t seed) {
  if (input_dim < 1) throw ConfigError("projection input_dim must be >= 1");
  if (proj_dim < 1) throw ConfigError("proj_dim must be >= 1");
  if (proj_dim > input_dim) {
    throw ConfigError("proj_dim " + std::to_string(proj_dim) + " exceeds input_dim " + std::to_string(input_dim));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ProjectionMatrix p{Matrix(input_dim, proj_dim), seed};
  for (Eigen::Index j = 0; j < p.v.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.v.rows(); ++i) p.v(i, j) = normal(rng);
  }
  return p;
}

int default_proj_dim(int input_dim) { return std::min(input_dim, 32); }

Matrix robust_cholesky(const Eigen::Ref<const Matrix>& sigma) {
  if (!sigma.allFinite()) throw StatsError("covariance has non-finite entries");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  llt.compute(sigma + kCholeskyJitter * Matrix::Identity(sigma.rows(), sigma.cols()));
  if (llt.info() == Eigen::Success) return llt.matrixL();
  throw StatsError("covariance is singular even after jitter");
}

SampleMoments two_pass_moments(const Eigen::Ref<const RowMatrix>& points) {
  SampleMoments m{points.rows(), Vector::Zero(points.cols()), Matrix::Zero(points.cols(), points.cols())};
  if (m.n == 0) return m;
  m.mean = points.colwise().mean().transpose();
  if (m.n == 1) return m;
  const RowMatrix centered = points.rowwise() - m.mean.transpose();
  m.cov = centered.transpose() * centered / static_cast<double>(m.n - 1);
  return m;
}

Whitener fit_whitener(const Eigen::Ref<const RowMatrix>& projected) {
  if (projected.rows() < 2) throw StatsError("whitening needs at least two points");
  SampleMoments m = two_pass_moments(projected);
  return {std::move(m.mean), robust_cholesky(m.cov)};
}

RowMatrix project_standardize_rows(const ProjectionMatrix& proj, const Eigen::Ref<const RowMatrix>& x,
                                   const Whitener& whitener) {
  if (x.cols() != proj.input_dim()) throw InputError("projection: feature dimension mismatch");
  Matrix centered = (x * proj.v).transpose();  // k x n
  centered.colwise() -= whitener.mu0;
  whitener.chol0.triangularView<Eigen::Lower>().solveInPlace(centered);
  return centered.transpose();
}

Vector project_standardize(const ProjectionMatrix& proj, const Eigen::Ref<const Vector>& x, const Whitener& whitener) {
  if (x.size() != proj.input_dim()) throw InputError("projection: feature dimension mismatch");
  Vector z = proj.v.transpose() * x - whitener.mu0;
  whitener.chol0.triangularView<Eigen::Lower>().solveInPlace(z);
  return z;
}

ClassGaussianStats init_class_stats(const Eigen::Ref<const RowMatrix>& standardized, int proj_dim) {
  if (standardized.cols() != proj_dim) throw InputError("init_class_stats: dimension mismatch");
  if (standardized.rows() < min_class_count(proj_dim)) {
    throw ConfigError("class has " + std::to_string(standardized.rows()) + " samples, need at least " +
                      std::to_string(min_class_count(proj_dim)));
  }
  SampleMoments m = two_pass_moments(standardized);
  ClassGaussianStats s{m.n, std::move(m.mean), std::move(m.cov), {}};
  s.refresh_cholesky();
  return s;
}

SampleMoments removed_batch_moments(const Eigen::Ref<const RowMatrix>& removed, Eigen::Index dim) {
  if (removed.rows() > 0 && removed.cols() != dim) throw InputError("removed batch dimension mismatch");
  if (removed.rows() == 0) return {0, Vector::Zero(dim), Matrix::Zero(dim, dim)};
  return two_pass_moments(removed);
}

namespace {

void check_capacity(const ClassGaussianStats& stats, Eigen::Index m, int label, int min_count) {
  const Eigen::Index remaining = stats.n - m;
  if (remaining < std::max(min_count, 2)) {
    throw ClassExhaustionError(label, "removing " + std::to_string(m) + " points would leave class " +
                                          std::to_string(label) + " with " + std::to_string(remaining) +
                                          " (< " + std::to_string(std::max(min_count, 2)) + ")");
  }
}

}  // namespace

void downdate_mean(ClassGaussianStats& stats, Eigen::Index m, const Eigen::Ref<const Vector>& removed_mean,
                   int label, int min_count) {
  if (m == 0) return;
  check_capacity(stats, m, label, min_count);
  const Eigen::Index n_new = stats.n - m;
  stats.mu = (static_cast<double>(stats.n) * stats.mu - static_cast<double>(m) * removed_mean) /
             static_cast<double>(n_new);
  stats.n = n_new;
}

// Group-merge identity on scatter matrices:
//   (n_t - 1) S_t = (n - 1) S - (m - 1) S~ - (n_t m / n) (mu_t - mu~)(mu_t - mu~)^T
void downdate(ClassGaussianStats& stats, const Eigen::Ref<const RowMatrix>& removed, int label, int min_count) {
  const Eigen::Index m = removed.rows();
  if (m == 0) return;
  check_capacity(stats, m, label, min_count);
  const SampleMoments rm = removed_batch_moments(removed, stats.mu.size());

  const auto n_old = static_cast<double>(stats.n);
  const auto md = static_cast<double>(m);
  const double n_new = n_old - md;

  ClassGaussianStats next = stats;
  downdate_mean(next, m, rm.mean, label, min_count);
  const Vector diff = next.mu - rm.mean;
  Matrix scatter = (n_old - 1.0) * stats.sigma - (md - 1.0) * rm.cov - (n_new * md / n_old) * diff * diff.transpose();
  next.sigma = scatter / (n_new - 1.0);
  next.sigma = 0.5 * (next.sigma + next.sigma.transpose()).eval();
  next.refresh_cholesky();
  stats = std::move(next);
}

double gaussian_logpdf(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& mu,
                       const Eigen::Ref<const Matrix>& chol) {
  if (!z.allFinite()) throw InputError("gaussian_logpdf: non-finite point");
  if (z.size() != mu.size() || chol.rows() != z.size() || chol.cols() != z.size()) {
    throw InputError("gaussian_logpdf: dimension mismatch");
  }
  Vector r = z - mu;
  chol.triangularView<Eigen::Lower>().solveInPlace(r);
  const double log_det_half = chol.diagonal().array().log().sum();
  const auto k = static_cast<double>(z.size());
  return -0.5 * k * std::log(2.0 * std::numbers::pi) - log_det_half - 0.5 * r.squaredNorm();
}

double standard_normal_logpdf(const Eigen::Ref<const Vector>& z) {
  if (!z.allFinite()) throw InputError("standard_normal_logpdf: non-finite point");
  const auto k = static_cast<double>(z.size());
  return -0.5 * k * std::log(2.0 * std::numbers::pi) - 0.5 * z.squaredNorm();
}

MardiaResult mardia_test(const Eigen::Ref<const RowMatrix>& z) {
  const Eigen::Index n = z.rows();
  const Eigen::Index p = z.cols();
  if (p < 1 || n < p + 2) throw InputError("mardia_test needs at least dim + 2 rows");

  const Vector mean = z.colwise().mean().transpose();
  RowMatrix centered = z.rowwise() - mean.transpose();
  // Maximum-likelihood covariance, as in Mardia's definition.
  const Matrix s = centered.transpose() * centered / static_cast<double>(n);
  // No jitter here: a rank-deficient sample has no Mahalanobis geometry.
  const Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 1e-12) {
    throw StatsError("mardia_test: degenerate sample covariance");
  }
  const Matrix chol = llt.matrixL();
  // Whitened rows w_i give the Mahalanobis cross products d_ij = w_i . w_j.
  Matrix wt = centered.transpose();
  chol.triangularView<Eigen::Lower>().solveInPlace(wt);
  const RowMatrix w = wt.transpose();

  double b1 = 0.0;
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index start = 0; start < n; start += kBlock) {
    const Eigen::Index rows = std::min(kBlock, n - start);
    const Matrix d = w.middleRows(start, rows) * w.transpose();
    b1 += d.array().cube().sum();
  }
  const auto nd = static_cast<double>(n);
  const auto pd = static_cast<double>(p);
  b1 /= nd * nd;
  const double b2 = w.rowwise().squaredNorm().array().square().sum() / nd;

  MardiaResult r;
  r.skewness = b1;
  r.kurtosis = b2;
  r.skewness_statistic = nd * b1 / 6.0;
  const double dof = pd * (pd + 1.0) * (pd + 2.0) / 6.0;
  r.skewness_p = boost::math::gamma_q(dof / 2.0, r.skewness_statistic / 2.0);
  r.kurtosis_statistic = (b2 - pd * (pd + 2.0)) / std::sqrt(8.0 * pd * (pd + 2.0) / nd);
  r.kurtosis_p = std::erfc(std::abs(r.kurtosis_statistic) / std::numbers::sqrt2);
  return r;
}

}  // namespace safe
