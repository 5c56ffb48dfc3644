#include "safe/shift_estimator.hpp"

#include <algorithm>
#include <cmath>

namespace safe {

double label_ratio(Eigen::Index n_t, Eigen::Index n_0, Eigen::Index size_dt, Eigen::Index size_d0) {
  if (n_0 <= 0) throw InputError("label_ratio: n_0 must be positive");
  if (size_dt <= 0) throw InputError("label_ratio: |D_t| must be positive");
  if (n_t <= 0) return kRatioFloor;
  return (static_cast<double>(n_t) / static_cast<double>(n_0)) *
         (static_cast<double>(size_d0) / static_cast<double>(size_dt));
}

double density_ratio(const Eigen::Ref<const Vector>& z, const ClassGaussianStats& stats) {
  const double log_ratio = gaussian_logpdf(z, stats.mu, stats.chol) - standard_normal_logpdf(z);
  return std::clamp(std::exp(std::clamp(log_ratio, -700.0, 700.0)), kRatioFloor, kRatioCeil);
}

Vector target_prediction(const Eigen::Ref<const Vector>& base, const Eigen::Ref<const Vector>& ratios) {
  if (base.size() != ratios.size()) throw InputError("target_prediction: ratio count mismatch");
  Vector t = base.cwiseProduct(ratios);
  const double mass = t.sum();
  if (!std::isfinite(mass) || mass <= 1e-300) return base;
  return t / mass;
}

ShiftModel build_shift_model(ProjectionMatrix projection, const Eigen::Ref<const RowMatrix>& x,
                             std::span<const int> y, int num_classes) {
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw InputError("build_shift_model: label count mismatch");
  ShiftModel model{std::move(projection), {}, x.rows(), x.rows()};
  const int k = model.proj_dim();
  std::vector<std::vector<Eigen::Index>> rows(num_classes);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (y[i] < 0 || y[i] >= num_classes) throw InputError("build_shift_model: label out of range");
    rows[y[i]].push_back(i);
  }
  model.classes.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    if (static_cast<int>(rows[c].size()) < min_class_count(k)) {
      throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(rows[c].size()) +
                        " training samples, need at least proj_dim + 2 = " + std::to_string(min_class_count(k)));
    }
    const RowMatrix xc = x(rows[c], Eigen::all);
    const RowMatrix projected = xc * model.projection.v;
    auto& cs = model.classes[c];
    cs.whitener = fit_whitener(projected);
    cs.stats = init_class_stats(project_standardize_rows(model.projection, xc, cs.whitener), k);
    cs.n0 = cs.count = static_cast<Eigen::Index>(rows[c].size());
  }
  return model;
}

std::vector<int> remove_points(ShiftModel& model, const Eigen::Ref<const RowMatrix>& x, std::span<const int> y) {
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw InputError("remove_points: label count mismatch");
  std::vector<int> exhausted;
  std::vector<std::vector<Eigen::Index>> rows(model.classes.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (y[i] < 0 || y[i] >= model.num_classes()) throw InputError("remove_points: label out of range");
    rows[y[i]].push_back(i);
  }
  for (int c = 0; c < model.num_classes(); ++c) {
    if (rows[c].empty()) continue;
    auto& cs = model.classes[c];
    const auto m = static_cast<Eigen::Index>(rows[c].size());
    if (m > cs.count) throw StreamError("class " + std::to_string(c) + " has fewer points than requested");
    cs.count -= m;
    if (!cs.frozen) {
      const RowMatrix z = project_standardize_rows(model.projection, x(rows[c], Eigen::all), cs.whitener);
      try {
        downdate(cs.stats, z, c, model.min_count());
      } catch (const ClassExhaustionError&) {
        cs.frozen = true;
      }
    }
    if (cs.frozen) exhausted.push_back(c);
  }
  model.size_dt -= x.rows();
  return exhausted;
}

Vector class_ratios(const ShiftModel& model, const Eigen::Ref<const Vector>& x) {
  Vector q(model.num_classes());
  for (int c = 0; c < model.num_classes(); ++c) {
    const auto& cs = model.classes[c];
    const Vector z = project_standardize(model.projection, x, cs.whitener);
    const double label = label_ratio(cs.count, cs.n0, model.size_dt, model.size_d0);
    q(c) = label * density_ratio(z, cs.stats);
  }
  return q;
}

Vector target_prediction(const ShiftModel& model, const Eigen::Ref<const Vector>& x,
                         const Eigen::Ref<const Vector>& base) {
  return target_prediction(base, class_ratios(model, x));
}

RowMatrix target_predictions(const ShiftModel& model, const Eigen::Ref<const RowMatrix>& x,
                             const Eigen::Ref<const RowMatrix>& base) {
  if (x.rows() != base.rows()) throw InputError("target_predictions: row count mismatch");
  RowMatrix out(base.rows(), base.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.row(i) = target_prediction(model, x.row(i).transpose(), base.row(i).transpose()).transpose();
  }
  return out;
}

}  // namespace safe
