#include "oracles.hpp"

#include "safe/model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace safe;

namespace {

ModelParams linear_with_logits(const Vector& logits) {
  // One input fixed at zero so the logits are just the bias.
  const Arch arch{1, 0, static_cast<int>(logits.size())};
  Vector theta = Vector::Zero(arch.num_params());
  theta.tail(logits.size()) = logits;
  return ModelParams(arch, theta);
}

Vector one_point(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST_CASE("zero parameters give a uniform prediction") {
  const ModelParams w = ModelParams::zeros({4, 0, 3});
  const Vector p = predict_proba(w, Vector::Random(4));
  for (Eigen::Index c = 0; c < 3; ++c) CHECK(p(c) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("softmax of (0, ln 3)") {
  const Vector p = predict_proba(linear_with_logits(Eigen::Vector2d(0.0, std::log(3.0))), one_point(0.0));
  CHECK(p(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax survives huge logits") {
  const Vector p = predict_proba(linear_with_logits(Eigen::Vector3d(1000.0, 999.0, -1000.0)), one_point(0.0));
  CHECK(p.allFinite());
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(p(0) / p(1) == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("probabilities are normalised for random models") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Arch arch{1 + trial % 7, trial % 3 == 0 ? 0 : 1 + trial % 5, 2 + trial % 6};
    const ModelParams w = ModelParams::random(arch, rng(), 3.0);
    const RowMatrix x = testing::gaussian_rows(4, arch.input_dim, rng);
    const RowMatrix p = predict_proba_batch(w, x);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
      CHECK((p.row(i).array() >= 0.0).all());
    }
  }
}

TEST_CASE("linear forward pass agrees with a loop implementation") {
  std::mt19937_64 rng(2);
  const Arch arch{5, 0, 4};
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams w = ModelParams::random(arch, rng(), 1.0);
    const Vector x = testing::gaussian_rows(1, 5, rng).row(0).transpose();
    const auto expected = testing::naive_linear_proba(w.theta(), x, 4);
    const Vector p = predict_proba(w, x);
    for (int c = 0; c < 4; ++c) CHECK(p(c) == doctest::Approx(expected[c]).epsilon(1e-12));
  }
}

TEST_CASE("cross-entropy closed forms") {
  SUBCASE("confident correct prediction") {
    const ModelParams w = linear_with_logits(Eigen::Vector2d(0.0, 800.0));
    CHECK(cross_entropy_loss(w, one_point(0.0), 1) == doctest::Approx(0.0));
  }
  SUBCASE("probability 0.25 on the label") {
    const ModelParams w = linear_with_logits(Eigen::Vector2d(0.0, std::log(3.0)));
    CHECK(cross_entropy_loss(w, one_point(0.0), 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("uniform over ten classes") {
    const ModelParams w = ModelParams::zeros({3, 0, 10});
    CHECK(cross_entropy_loss(w, Vector::Ones(3), 7) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  }
  SUBCASE("label out of range") {
    const ModelParams w = ModelParams::zeros({3, 0, 10});
    CHECK_THROWS_AS((void)cross_entropy_loss(w, Vector::Ones(3), 10), InputError);
  }
}

TEST_CASE("cross-entropy gradient") {
  SUBCASE("vanishes for a one-hot prediction") {
    const ModelParams w = linear_with_logits(Eigen::Vector3d(-900.0, 900.0, -900.0));
    const Vector x = one_point(0.0);
    const int y = 1;
    CHECK(grad_cross_entropy(w, BatchView{x.transpose(), std::span<const int>(&y, 1)}).norm() == 0.0);
  }
  SUBCASE("duplicated sample equals the single sample") {
    std::mt19937_64 rng(3);
    const ModelParams w = ModelParams::random({4, 3, 3}, 9, 0.5);
    const RowMatrix one = testing::gaussian_rows(1, 4, rng);
    RowMatrix two(2, 4);
    two << one, one;
    const std::vector<int> y1{2}, y2{2, 2};
    const Vector a = grad_cross_entropy(w, {one, y1});
    const Vector b = grad_cross_entropy(w, {two, y2});
    CHECK((a - b).norm() <= 1e-15 * std::max(1.0, a.norm()));
  }
  SUBCASE("empty batch is rejected") {
    const ModelParams w = ModelParams::zeros({2, 0, 2});
    const RowMatrix x(0, 2);
    CHECK_THROWS_AS((void)grad_cross_entropy(w, {x, {}}), InputError);
  }
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    const Arch arch{1 + trial % 6, trial % 2 == 0 ? 0 : 2 + trial % 4, 2 + trial % 4};
    const ModelParams w = ModelParams::random(arch, rng(), 0.8);
    const RowMatrix x = testing::gaussian_rows(3, arch.input_dim, rng);
    std::vector<int> y(3);
    for (int& v : y) v = static_cast<int>(rng() % static_cast<unsigned>(arch.num_classes));

    const Vector ce = grad_cross_entropy(w, {x, y});
    const Vector ce_fd = testing::finite_difference_gradient(
        [&](const Vector& t) { return mean_cross_entropy(ModelParams(arch, t), {x, y}); }, w.theta());
    CHECK(testing::relative_error(ce, ce_fd) <= 1e-6);

    RowMatrix targets(3, arch.num_classes);
    for (Eigen::Index i = 0; i < 3; ++i) {
      for (Eigen::Index c = 0; c < arch.num_classes; ++c) targets(i, c) = std::exp(normal(rng));
      targets.row(i) /= targets.row(i).sum();
    }
    const Vector kl = grad_kl_to_targets_sum(w, x, targets);
    const Vector kl_fd = testing::finite_difference_gradient(
        [&](const Vector& t) {
          const RowMatrix p = predict_proba_batch(ModelParams(arch, t), x);
          double s = 0.0;
          for (Eigen::Index i = 0; i < 3; ++i) s += kl_divergence(p.row(i), targets.row(i));
          return s;
        },
        w.theta());
    CHECK(testing::relative_error(kl, kl_fd) <= 1e-6);
  }
}

TEST_CASE("KL divergence") {
  CHECK(kl_divergence(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.5, 0.5)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const Eigen::Vector3d p(0.2, 0.3, 0.5);
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK_THROWS_AS((void)kl_divergence(p, Eigen::Vector2d(0.5, 0.5)), InputError);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    Vector a(4), b(4);
    for (Eigen::Index i = 0; i < 4; ++i) {
      a(i) = u(rng);
      b(i) = u(rng);
    }
    CHECK(kl_divergence(a / a.sum(), b / b.sum()) >= 0.0);
  }
}

TEST_CASE("KL gradient vanishes at its minimum") {
  const ModelParams w = ModelParams::random({3, 4, 3}, 17, 0.9);
  const Vector x = Eigen::Vector3d(0.3, -1.2, 0.8);
  CHECK(grad_kl_to_target(w, x, predict_proba(w, x)).norm() <= 1e-15);

  const ModelParams zero = ModelParams::zeros({3, 0, 4});
  CHECK(grad_kl_to_target(zero, x, Vector::Constant(4, 0.25)).norm() <= 1e-15);
}

TEST_CASE("parameter layout and validation") {
  CHECK(Arch{16, 0, 5}.num_params() == 85);
  CHECK(Arch{16, 8, 5}.num_params() == 16 * 8 + 8 + 5 * 8 + 5);
  CHECK_THROWS_AS(validate(Arch{0, 0, 2}), ConfigError);
  CHECK_THROWS_AS(validate(Arch{2, 0, 1}), ConfigError);
  CHECK_THROWS_AS(ModelParams(Arch{2, 0, 2}, Vector::Zero(5)), InputError);
  Vector bad = Vector::Zero(6);
  bad(2) = std::nan("");
  CHECK_THROWS_AS(ModelParams(Arch{2, 0, 2}, bad), NumericalError);

  const ModelParams a = ModelParams::random({3, 2, 2}, 42);
  const ModelParams b = ModelParams::random({3, 2, 2}, 42);
  CHECK(a.theta() == b.theta());
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax_lowest(Eigen::Vector3d(0.4, 0.4, 0.2)) == 0);
  CHECK(argmax_lowest(Eigen::Vector3d(0.1, 0.45, 0.45)) == 1);
}
