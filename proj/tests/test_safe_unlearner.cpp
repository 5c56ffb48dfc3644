#include "oracles.hpp"

#include "safe/safe_unlearner.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace safe;

namespace {

struct Fixture {
  RowMatrix x;
  std::vector<int> y;
  std::vector<SampleId> ids;
  ModelParams w0;
  ShiftModel shift;

  explicit Fixture(std::uint64_t seed, Eigen::Index n = 240, int classes = 3, Eigen::Index dim = 5) {
    std::mt19937_64 rng(seed);
    x = testing::gaussian_rows(n, dim, rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      y.push_back(static_cast<int>(i % classes));
      x(i, y.back()) += 2.5;
      ids.push_back(1000 + i);
    }
    w0 = ModelParams::random({static_cast<int>(dim), 0, classes}, seed + 1, 0.8);
    shift = build_shift_model(make_projection(static_cast<int>(dim), 3, seed + 2), x, y, classes);
  }

  Request request(const std::vector<Eigen::Index>& rows) const {
    Request r;
    r.x = x(rows, Eigen::all);
    for (auto i : rows) {
      r.ids.push_back(ids[i]);
      r.y.push_back(y[i]);
    }
    return r;
  }

  SafeEngine engine(SafeConfig cfg = {}) const {
    return SafeEngine(w0, grad_cross_entropy(w0, {x, y}), x.rows(), shift, cfg);
  }
};

}  // namespace

TEST_CASE("learning rate schedule") {
  CHECK(learning_rate(1.0, 2.5, 20) == doctest::Approx(0.089443).epsilon(1e-5));
  CHECK(learning_rate(1.0, 1.0, 1) == 1.0);
  CHECK(learning_rate(4.0, 2.0, 4) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("perturbation scale") {
  CHECK(perturbation_scale(1.0, 1.0, 0.05) == doctest::Approx(2.5373).epsilon(1e-4));
  CHECK(perturbation_scale(2.0, 5.0, 1e-5) == doctest::Approx(1.93792).epsilon(1e-4));
}

TEST_CASE("config validation") {
  const auto bad = [](auto mutate) {
    SafeConfig c;
    mutate(c);
    return c;
  };
  CHECK_NOTHROW(validate(SafeConfig{}));
  CHECK_THROWS_AS(validate(bad([](SafeConfig& c) { c.k = 0.0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](SafeConfig& c) { c.horizon = 0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](SafeConfig& c) { c.weight_bound = -1.0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](SafeConfig& c) { c.epsilon = 0.0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](SafeConfig& c) { c.delta = 1.25; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](SafeConfig& c) { c.delta = 0.0; })), ConfigError);
}

TEST_CASE("perturbation draws") {
  std::mt19937_64 a(3), b(3);
  CHECK(sample_perturbation(1.5, 50, a) == sample_perturbation(1.5, 50, b));
  std::mt19937_64 rng(4);
  const Vector big = sample_perturbation(2.0, 200000, rng);
  const double sd = std::sqrt((big.array() - big.mean()).square().sum() / (big.size() - 1.0));
  CHECK(sd == doctest::Approx(2.0).epsilon(0.02));
  CHECK(sample_perturbation(0.0, 5, rng).norm() == 0.0);
}

TEST_CASE("retention gradient recursion") {
  const Fixture f(10);
  const RetentionGradState s0{grad_cross_entropy(f.w0, {f.x, f.y}), f.x.rows(), f.x.rows()};

  SUBCASE("empty request") {
    const RetentionGradState s = update_retention_grad(s0, f.w0, BatchView{RowMatrix(0, 5), {}});
    CHECK(s.grad == s0.grad);
    CHECK(s.size_dt == s0.size_dt);
  }
  SUBCASE("matches the mean over survivors") {
    std::vector<Eigen::Index> gone{0, 5, 17, 33, 100}, kept;
    for (Eigen::Index i = 0; i < f.x.rows(); ++i) {
      if (std::find(gone.begin(), gone.end(), i) == gone.end()) kept.push_back(i);
    }
    const Request r = f.request(gone);
    const RetentionGradState s = update_retention_grad(s0, f.w0, BatchView{r.x, r.y});
    std::vector<int> ky;
    for (auto i : kept) ky.push_back(f.y[i]);
    const RowMatrix kx = f.x(kept, Eigen::all);
    CHECK((s.grad - grad_cross_entropy(f.w0, {kx, ky})).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(s.size_dt == f.x.rows() - 5);
  }
  SUBCASE("two requests equal their union") {
    const Request a = f.request({1, 2, 3, 40});
    const Request b = f.request({50, 60, 70});
    const Request ab = f.request({1, 2, 3, 40, 50, 60, 70});
    const auto seq = update_retention_grad(update_retention_grad(s0, f.w0, {a.x, a.y}), f.w0, {b.x, b.y});
    const auto once = update_retention_grad(s0, f.w0, {ab.x, ab.y});
    CHECK((seq.grad - once.grad).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(seq.size_dt == once.size_dt);
  }
  SUBCASE("cannot empty the data") {
    RetentionGradState tiny{Vector::Zero(3), 2, 2};
    CHECK_THROWS_AS((void)update_retention_grad(tiny, Vector::Zero(3), 2), StreamError);
  }
}

TEST_CASE("forgetting gradient") {
  const Fixture f(11);
  SUBCASE("empty ledger") {
    CHECK(forgetting_gradient(ForgettingLedger{}, f.shift, f.w0, 1000.0).norm() == 0.0);
  }
  SUBCASE("no shift means targets equal the base prediction") {
    // Before any removal every ratio is 1 up to rounding.
    ForgettingLedger ledger;
    ledger.append_point(1, f.x.row(3).transpose(), f.y[3], 1);
    CHECK(forgetting_gradient(ledger, f.shift, f.w0, 1000.0).norm() <= 1e-6);
  }
  SUBCASE("matches finite differences of the assembled risk") {
    ShiftModel shift = f.shift;
    ForgettingLedger ledger;
    const Request r = f.request({0, 4, 8, 9, 13, 21, 30, 31, 57});
    remove_points(shift, r.x, r.y);
    ledger.append(r, 1);
    const double lambda = 7.0;
    const RowMatrix targets = forgetting_targets(ledger, shift, f.w0);
    const Vector analytic = forgetting_gradient(ledger, shift, f.w0, lambda);
    const Vector fd = testing::finite_difference_gradient(
        [&](const Vector& t) { return forgetting_risk(ModelParams(f.w0.arch(), t), ledger.x(), targets, lambda); },
        f.w0.theta());
    CHECK(testing::relative_error(analytic, fd) <= 1e-6);
  }
}

TEST_CASE("ledger") {
  ForgettingLedger ledger;
  ledger.append_point(7, Eigen::Vector2d(1, 2), 0, 1);
  CHECK(ledger.contains(7));
  CHECK_THROWS_AS(ledger.append_point(7, Eigen::Vector2d(1, 2), 0, 2), InputError);
  CHECK_THROWS_AS(ledger.append_point(8, Eigen::Vector3d(1, 2, 3), 0, 2), InputError);
  CHECK(ledger.size() == 1);
}

TEST_CASE("empty requests take a step of exactly gamma") {
  const Fixture f(12);
  SafeEngine engine = f.engine();
  for (int t = 0; t < 5; ++t) {
    const RoundOutcome out = engine.process_request(Request{{}, RowMatrix(0, 5), {}});
    CHECK(!out.step_skipped);
    CHECK(out.accepted == 0);
    CHECK(out.forgetting_grad.norm() == 0.0);
    CHECK(std::abs((out.w.theta() - f.w0.theta() + out.perturbation).norm() - engine.gamma()) <= 1e-12);
  }
  CHECK(engine.round() == 5);
}

TEST_CASE("zero gradient skips the normalised step") {
  const Fixture f(13);
  SafeEngine engine(f.w0, Vector::Zero(f.w0.arch().num_params()), f.x.rows(), f.shift, SafeConfig{});
  const RoundOutcome out = engine.process_request(Request{{}, RowMatrix(0, 5), {}});
  CHECK(out.step_skipped);
  CHECK((out.w.theta() - (f.w0.theta() - out.perturbation)).norm() == 0.0);
}

TEST_CASE("step norm holds over a stream and w_0 is never modified") {
  const Fixture f(14);
  SafeConfig cfg;
  cfg.horizon = 10;
  SafeEngine engine = f.engine(cfg);
  const Vector theta0 = f.w0.theta();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(f.x.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(15);
  std::shuffle(order.begin(), order.end(), rng);
  for (int t = 0; t < 10; ++t) {
    const std::vector<Eigen::Index> rows(order.begin() + 8 * t, order.begin() + 8 * (t + 1));
    const RoundOutcome out = engine.process_request(f.request(rows));
    CHECK(out.accepted == 8);
    CHECK(std::abs((out.w.theta() - theta0 + out.perturbation).norm() - out.gamma) <= 1e-10);
  }
  CHECK(engine.w0().theta() == theta0);
  CHECK(engine.ledger().size() == 80);
  CHECK(engine.retention().size_dt == f.x.rows() - 80);
  CHECK(engine.gamma() == doctest::Approx(learning_rate(theta0.norm(), cfg.k, 10)));
  CHECK(engine.phi() == doctest::Approx(perturbation_scale(theta0.norm(), cfg.epsilon, cfg.delta)));
}

TEST_CASE("duplicates are dropped") {
  const Fixture f(16);
  SafeEngine engine = f.engine();
  (void)engine.process_request(f.request({1, 2, 3}));
  const RoundOutcome out = engine.process_request(f.request({2, 4, 4, 5}));
  CHECK(out.accepted == 2);
  CHECK(out.duplicates_dropped == 2);
  CHECK(engine.ledger().size() == 5);
  CHECK(engine.ledger().rounds().back() == 2);
}

TEST_CASE("identical seeds replay identical iterates") {
  const Fixture f(17);
  SafeConfig cfg;
  cfg.seed = 99;
  SafeEngine a = f.engine(cfg), b = f.engine(cfg);
  for (int t = 0; t < 4; ++t) {
    const std::vector<Eigen::Index> rows{10 * t, 10 * t + 1, 10 * t + 2};
    CHECK(a.process_request(f.request(rows)).w.theta() == b.process_request(f.request(rows)).w.theta());
  }
}

TEST_CASE("explicit weight bound overrides the norm of w_0") {
  const Fixture f(18);
  SafeConfig cfg;
  cfg.weight_bound = 4.0;
  cfg.k = 2.0;
  cfg.horizon = 4;
  const SafeEngine engine = f.engine(cfg);
  CHECK(engine.weight_bound() == 4.0);
  CHECK(engine.gamma() == doctest::Approx(0.5));
}

TEST_CASE("malformed requests") {
  const Fixture f(19);
  SafeEngine engine = f.engine();
  Request r = f.request({1, 2});
  r.y.pop_back();
  CHECK_THROWS_AS((void)engine.process_request(r), InputError);
}
