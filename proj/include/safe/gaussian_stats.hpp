#pragma once

#include "safe/errors.hpp"
#include "safe/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>

namespace safe {

/// Random Gaussian projection V (input_dim x proj_dim), fixed for a run.
struct ProjectionMatrix {
  Matrix v;
  std::uint64_t seed = 0;

  [[nodiscard]] Eigen::Index input_dim() const noexcept { return v.rows(); }
  [[nodiscard]] Eigen::Index proj_dim() const noexcept { return v.cols(); }
};

[[nodiscard]] ProjectionMatrix make_projection(int input_dim, int proj_dim, std::uint64_t seed);

/// Projection dimension used when none is configured: min(input_dim, 32).
[[nodiscard]] int default_proj_dim(int input_dim);

/// Smallest class size that keeps a proj_dim covariance full rank.
[[nodiscard]] constexpr int min_class_count(int proj_dim) noexcept { return proj_dim + 2; }

inline constexpr double kCholeskyJitter = 1e-6;

/// Lower Cholesky factor of `sigma`; adds 1e-6 I and retries once before
/// throwing StatsError.
[[nodiscard]] Matrix robust_cholesky(const Eigen::Ref<const Matrix>& sigma);

/// Sample mean and Bessel-corrected covariance. One row yields a zero
/// covariance; an empty input yields zero mean and covariance.
struct SampleMoments {
  Eigen::Index n = 0;
  Vector mean;
  Matrix cov;
};
[[nodiscard]] SampleMoments two_pass_moments(const Eigen::Ref<const RowMatrix>& points);

/// Frozen t=0 per-class whitening: z = L0^{-1} (V^T x - mu0).
struct Whitener {
  Vector mu0;
  Matrix chol0;
};

[[nodiscard]] Whitener fit_whitener(const Eigen::Ref<const RowMatrix>& projected);

/// Standardise raw feature rows of one class into its frozen space.
[[nodiscard]] RowMatrix project_standardize_rows(const ProjectionMatrix& proj, const Eigen::Ref<const RowMatrix>& x,
                                                 const Whitener& whitener);
[[nodiscard]] Vector project_standardize(const ProjectionMatrix& proj, const Eigen::Ref<const Vector>& x,
                                         const Whitener& whitener);

/// Gaussian state of one class in its standardised space.
struct ClassGaussianStats {
  Eigen::Index n = 0;
  Vector mu;
  Matrix sigma;
  Matrix chol;

  void refresh_cholesky() { chol = robust_cholesky(sigma); }
};

[[nodiscard]] ClassGaussianStats init_class_stats(const Eigen::Ref<const RowMatrix>& standardized, int proj_dim);

/// Moments of a removed batch: (m, mean, Bessel covariance; zero when m == 1).
[[nodiscard]] SampleMoments removed_batch_moments(const Eigen::Ref<const RowMatrix>& removed, Eigen::Index dim);

/// Mean downdate: mu_t = (n mu - m mu~) / (n - m). Updates n and mu only.
void downdate_mean(ClassGaussianStats& stats, Eigen::Index m, const Eigen::Ref<const Vector>& removed_mean,
                   int label, int min_count);

/// Exact mean + covariance downdate, equivalent to recomputing over the
/// surviving points. Throws ClassExhaustionError (stats untouched) if the
/// class would drop below `min_count`.
void downdate(ClassGaussianStats& stats, const Eigen::Ref<const RowMatrix>& removed, int label, int min_count);

/// log N(z | mu, L L^T).
[[nodiscard]] double gaussian_logpdf(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& mu,
                                     const Eigen::Ref<const Matrix>& chol);
/// log N(z | 0, I).
[[nodiscard]] double standard_normal_logpdf(const Eigen::Ref<const Vector>& z);

struct MardiaResult {
  double skewness = 0.0;  ///< b_{1,p}
  double kurtosis = 0.0;  ///< b_{2,p}
  double skewness_statistic = 0.0;
  double kurtosis_statistic = 0.0;
  double skewness_p = 0.0;
  double kurtosis_p = 0.0;
};

/// Mardia's multivariate normality test. Skewness n b1 / 6 against
/// chi^2 with p(p+1)(p+2)/6 dof; kurtosis (b2 - p(p+2)) / sqrt(8p(p+2)/n)
/// against N(0,1), two-sided.
[[nodiscard]] MardiaResult mardia_test(const Eigen::Ref<const RowMatrix>& z);

}  // namespace safe
