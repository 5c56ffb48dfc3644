#pragma once

#include "safe/gaussian_stats.hpp"
#include "safe/types.hpp"

#include <span>
#include <vector>

namespace safe {

inline constexpr double kRatioFloor = 1e-6;
inline constexpr double kRatioCeil = 1e6;

/// p_t(y) / p_0(y) estimated from class counts. A class with no surviving
/// points is pinned to the 1e-6 floor.
[[nodiscard]] double label_ratio(Eigen::Index n_t, Eigen::Index n_0, Eigen::Index size_dt, Eigen::Index size_d0);

/// N(z | mu_t, Sigma_t) / N(z | 0, I), clipped to [1e-6, 1e6].
[[nodiscard]] double density_ratio(const Eigen::Ref<const Vector>& z, const ClassGaussianStats& stats);

/// Reweights each class probability by its ratio and renormalises.
/// Falls back to `base` when the reweighted mass is degenerate.
[[nodiscard]] Vector target_prediction(const Eigen::Ref<const Vector>& base, const Eigen::Ref<const Vector>& ratios);

/// Everything needed to estimate the posterior shift for one class.
struct ClassShiftState {
  Whitener whitener;        // frozen at t = 0
  ClassGaussianStats stats; // in the whitened space; frozen once exhausted
  Eigen::Index n0 = 0;
  Eigen::Index count = 0;   // n_t(y), tracked even after the stats freeze
  bool frozen = false;
};

/// Per-class Gaussian model of the projected inputs plus dataset sizes.
struct ShiftModel {
  ProjectionMatrix projection;
  std::vector<ClassShiftState> classes;
  Eigen::Index size_d0 = 0;
  Eigen::Index size_dt = 0;

  [[nodiscard]] int proj_dim() const noexcept { return static_cast<int>(projection.proj_dim()); }
  [[nodiscard]] int num_classes() const noexcept { return static_cast<int>(classes.size()); }
  [[nodiscard]] int min_count() const noexcept { return min_class_count(proj_dim()); }
};

/// Fits whiteners and t = 0 stats from the initial training set. Every
/// class needs at least proj_dim + 2 samples.
[[nodiscard]] ShiftModel build_shift_model(ProjectionMatrix projection, const Eigen::Ref<const RowMatrix>& x,
                                           std::span<const int> y, int num_classes);

/// Downdates every class touched by the removed points. Classes that would
/// be exhausted keep their last valid stats and are returned as warnings.
std::vector<int> remove_points(ShiftModel& model, const Eigen::Ref<const RowMatrix>& x, std::span<const int> y);

/// q_t^{(c)}(x) for every class c.
[[nodiscard]] Vector class_ratios(const ShiftModel& model, const Eigen::Ref<const Vector>& x);

/// Estimated retrained prediction for x given the original prediction.
[[nodiscard]] Vector target_prediction(const ShiftModel& model, const Eigen::Ref<const Vector>& x,
                                       const Eigen::Ref<const Vector>& base);

/// Row-wise targets for a batch of points.
[[nodiscard]] RowMatrix target_predictions(const ShiftModel& model, const Eigen::Ref<const RowMatrix>& x,
                                           const Eigen::Ref<const RowMatrix>& base);

}  // namespace safe
