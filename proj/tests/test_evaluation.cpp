#include "oracles.hpp"

#include "safe/data.hpp"
#include "safe/evaluation.hpp"
#include "safe/oracle.hpp"

#include <doctest.h>

#include <random>

using namespace safe;

TEST_CASE("accuracy") {
  SUBCASE("uniform predictions on balanced data sit at chance") {
    const TrainTest tt = make_synthetic(1000, 10, 10, 1.0, 1);
    const ModelParams uniform = ModelParams::zeros({10, 0, 10});
    CHECK(*accuracy(uniform, tt.train) == doctest::Approx(0.1).epsilon(0.02));
  }
  SUBCASE("a separable fit is perfect") {
    const TrainTest tt = make_synthetic(400, 4, 2, 12.0, 2);
    const ModelParams w = retrain(tt.train, {4, 0, 2}, RetrainConfig{}).w;
    CHECK(*accuracy(w, tt.train) == 1.0);
  }
  SUBCASE("single sample") {
    const ModelParams w(Arch{1, 0, 2}, Eigen::Vector4d(0.0, 1.0, 0.0, 0.0));
    const RowMatrix x = RowMatrix::Constant(1, 1, 2.0);
    const std::vector<int> right{1}, wrong{0};
    CHECK(*accuracy(w, x, right) == 1.0);
    CHECK(*accuracy(w, x, wrong) == 0.0);
  }
  SUBCASE("empty data has no accuracy") {
    CHECK_FALSE(accuracy(ModelParams::zeros({2, 0, 2}), RowMatrix(0, 2), {}).has_value());
  }
}

TEST_CASE("confidence features") {
  const ModelParams uniform = ModelParams::zeros({2, 0, 4});
  const std::vector<int> y{3};
  const RowMatrix f = confidence_features(uniform, RowMatrix::Ones(1, 2), y);
  CHECK(f(0, 0) == doctest::Approx(0.25));
  CHECK(f(0, 1) == doctest::Approx(0.25));
  CHECK(f(0, 2) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("membership attack") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> jitter(0.0, 0.01);
  const auto confident = [&](Eigen::Index n, double level) {
    RowMatrix f(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      f(i, 0) = level + jitter(rng);
      f(i, 1) = level + jitter(rng);
      f(i, 2) = 1.0 - level + jitter(rng);
    }
    return f;
  };

  SUBCASE("indistinguishable sides score one half") {
    const RowMatrix same = RowMatrix::Constant(50, 3, 0.7);
    CHECK(mia_attack_from_features(same, same, same, 1) == 0.5);
  }
  SUBCASE("well separated confidences are recognised") {
    const RowMatrix members = confident(300, 1.0);
    const RowMatrix non_members = confident(300, 0.1);
    CHECK(mia_attack_from_features(members, non_members, confident(100, 1.0), 2) >= 0.99);
    CHECK(mia_attack_from_features(members, non_members, confident(100, 0.1), 2) <= 0.01);
  }
  SUBCASE("deterministic under a seed") {
    const RowMatrix members = confident(100, 0.6);
    const RowMatrix non_members = confident(100, 0.55);
    const RowMatrix probe = confident(40, 0.58);
    CHECK(mia_attack_from_features(members, non_members, probe, 9) ==
          mia_attack_from_features(members, non_members, probe, 9));
  }
  SUBCASE("input checks") {
    CHECK_THROWS_AS((void)mia_attack_from_features(RowMatrix(0, 3), RowMatrix::Ones(2, 3), RowMatrix::Ones(1, 3), 0),
                    InputError);
    CHECK_THROWS_AS((void)mia_attack_from_features(RowMatrix::Ones(2, 3), RowMatrix::Ones(2, 2), RowMatrix::Ones(1, 3), 0),
                    InputError);
  }
}

TEST_CASE("membership attack on a model") {
  const TrainTest tt = make_synthetic(600, 4, 2, 3.0, 4);
  const ModelParams w = retrain(tt.train, {4, 0, 2}, RetrainConfig{}).w;
  const Dataset forget = tt.train.subset({0, 1, 2, 3, 4, 5, 6, 7});
  const auto score = mia_attack(w, tt.train, tt.test, forget.x, forget.labels, 11);
  REQUIRE(score.has_value());
  CHECK(*score >= 0.0);
  CHECK(*score <= 1.0);
  CHECK(score == mia_attack(w, tt.train, tt.test, forget.x, forget.labels, 11));
  CHECK_FALSE(mia_attack(w, tt.train, tt.test, RowMatrix(0, 4), {}, 11).has_value());
}
