#include "oracles.hpp"

#include "safe/data.hpp"
#include "safe/evaluation.hpp"
#include "safe/oracle.hpp"
#include "safe/shift_estimator.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace safe;

namespace {

Arch linear_arch(const Dataset& d) { return {d.dim(), 0, d.num_classes}; }

// Termwise risk: mean CE over the remaining rows plus lambda times the mean
// KL to the reference model over the forgotten rows. Loops only.
double termwise_risk(const Vector& theta, const Dataset& remaining, const RowMatrix& forgotten,
                     const Vector& theta_star, int classes, double lambda) {
  double ce = 0.0;
  for (Eigen::Index i = 0; i < remaining.size(); ++i) {
    const auto p = testing::naive_linear_proba(theta, remaining.x.row(i).transpose(), classes);
    ce -= std::log(p[remaining.labels[i]]);
  }
  ce /= static_cast<double>(remaining.size());
  double kl = 0.0;
  for (Eigen::Index i = 0; i < forgotten.rows(); ++i) {
    const auto p = testing::naive_linear_proba(theta, forgotten.row(i).transpose(), classes);
    const auto q = testing::naive_linear_proba(theta_star, forgotten.row(i).transpose(), classes);
    for (int c = 0; c < classes; ++c) kl += p[c] * (std::log(p[c]) - std::log(q[c]));
  }
  return ce + lambda * kl / static_cast<double>(forgotten.rows());
}

}  // namespace

TEST_CASE("retraining separable blobs fits them") {
  const TrainTest tt = make_synthetic(400, 4, 2, 10.0, 1);
  RetrainConfig cfg;
  cfg.max_epochs = 500;
  const RetrainResult r = retrain(tt.train, linear_arch(tt.train), cfg);
  CHECK(*accuracy(r.w, tt.train) >= 0.99);
}

TEST_CASE("retraining is deterministic under a seed") {
  const TrainTest tt = make_synthetic(500, 6, 3, 3.0, 2);
  RetrainConfig cfg;
  cfg.seed = 5;
  const RetrainResult a = retrain(tt.train, linear_arch(tt.train), cfg);
  const RetrainResult b = retrain(tt.train, linear_arch(tt.train), cfg);
  CHECK(a.w.theta() == b.w.theta());
  CHECK(a.epochs == b.epochs);
}

TEST_CASE("convex problems converge to the same loss from any seed") {
  const TrainTest tt = make_synthetic(600, 5, 3, 2.0, 3);
  RetrainConfig a, b;
  a.seed = 1;
  b.seed = 2;
  b.init_scale = 0.5;
  const RetrainResult ra = retrain(tt.train, linear_arch(tt.train), a);
  const RetrainResult rb = retrain(tt.train, linear_arch(tt.train), b);
  CHECK(ra.grad_norm < a.grad_tol);
  CHECK(rb.grad_norm < b.grad_tol);
  CHECK(std::abs(ra.final_loss - rb.final_loss) <= 1e-6);
}

TEST_CASE("mini-batch retraining") {
  const TrainTest tt = make_synthetic(500, 4, 2, 6.0, 4);
  RetrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_epochs = 20;
  cfg.step_size = 0.1;
  const RetrainResult a = retrain(tt.train, linear_arch(tt.train), cfg);
  const RetrainResult b = retrain(tt.train, linear_arch(tt.train), cfg);
  CHECK(a.w.theta() == b.w.theta());
  CHECK(a.epochs == 20);
  CHECK(*accuracy(a.w, tt.test) >= 0.95);
}

TEST_CASE("retrain errors") {
  const TrainTest tt = make_synthetic(200, 4, 2, 0.0, 5);
  RetrainConfig cfg;
  cfg.step_size = 1e308;
  cfg.momentum = 0.99;
  cfg.init_scale = 1.0;
  CHECK_THROWS_AS((void)retrain(tt.train, linear_arch(tt.train), cfg), NumericalError);
  CHECK_THROWS_AS((void)retrain(tt.train.subset({}), linear_arch(tt.train), RetrainConfig{}), InputError);
  RetrainConfig bad;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("true risk") {
  const TrainTest tt = make_synthetic(250, 4, 3, 2.5, 6);
  const Dataset& d = tt.train;  // 200 points
  const Arch arch = linear_arch(d);
  const ModelParams w_star = retrain(d, arch, RetrainConfig{}).w;

  SUBCASE("self-evaluation with no forgotten points") {
    CHECK(true_risk(w_star, d, RowMatrix(0, 4), w_star, 1000.0) == doctest::Approx(mean_cross_entropy(w_star, d.view())));
  }
  SUBCASE("forgetting term vanishes at the reference model") {
    const RowMatrix forgotten = tt.test.x.topRows(10);
    CHECK(true_risk(w_star, d, forgotten, w_star, 1000.0) ==
          doctest::Approx(mean_cross_entropy(w_star, d.view())).epsilon(1e-13));
  }
  SUBCASE("matches a termwise re-implementation") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
      const ModelParams w = ModelParams::random(arch, rng(), 1.0);
      const RowMatrix forgotten = tt.test.x.middleRows(trial, 12);
      const double expected = termwise_risk(w.theta(), d, forgotten, w_star.theta(), 3, 250.0);
      CHECK(std::abs(true_risk(w, d, forgotten, w_star, 250.0) - expected) <= 1e-12 * std::abs(expected));
    }
  }
}

TEST_CASE("surrogate risk") {
  const TrainTest tt = make_synthetic(300, 4, 3, 3.0, 8);
  const Dataset& d0 = tt.train;
  const Arch arch = linear_arch(d0);
  const ModelParams w0 = retrain(d0, arch, RetrainConfig{}).w;
  const ModelParams w = ModelParams::random(arch, 3, 0.5);

  SUBCASE("equals the true risk before any deletion") {
    const ForgettingLedger empty;
    CHECK(surrogate_risk(w, &d0, empty, RowMatrix(0, 3), 1000.0) ==
          doctest::Approx(true_risk(w, d0, RowMatrix(0, 4), w0, 1000.0)).epsilon(1e-13));
  }
  SUBCASE("collapses to the true risk when targets are the retrained predictions") {
    ForgettingLedger ledger;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < d0.size(); ++i) {
      if (i % 6 == 0) {
        ledger.append_point(d0.ids[i], d0.x.row(i).transpose(), d0.labels[i], 1);
      } else {
        kept.push_back(i);
      }
    }
    const Dataset remaining = d0.subset(kept);
    const ModelParams w_star = retrain(remaining, arch, RetrainConfig{}).w;
    const RowMatrix forced = predict_proba_batch(w_star, ledger.x());
    const double sur = surrogate_risk(w, &d0, ledger, forced, 1000.0);
    const double tru = true_risk(w, remaining, ledger.x(), w_star, 1000.0);
    CHECK(std::abs(sur - tru) <= 1e-12 * std::abs(tru));
  }
  SUBCASE("needs the original data") {
    CHECK_THROWS_AS((void)surrogate_risk(w, nullptr, ForgettingLedger{}, RowMatrix(0, 3), 1.0), ConfigError);
  }
}

TEST_CASE("risk gap bound") {
  CHECK(risk_gap_bound(10, 400, 10000) == doctest::Approx(10.0 * 400.0 / 1e6));
}

TEST_CASE("regret accounting") {
  const Arch arch{3, 0, 2};
  SUBCASE("a perfect unlearner has no regret") {
    RegretAccount acc;
    const ModelParams w = ModelParams::random(arch, 1);
    for (int t = 0; t < 5; ++t) regret_update(acc, 0.7, 0.7, w, w);
    CHECK(acc.cumulative == 0.0);
    CHECK(acc.path_length == 0.0);
    CHECK(acc.mean_regret() == 0.0);
  }
  SUBCASE("path length equals a recomputation from the stored optima") {
    std::mt19937_64 rng(9);
    std::vector<ModelParams> optima{ModelParams::random(arch, rng(), 1.0)};
    RegretAccount acc;
    double expected_regret = 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 1; t <= 20; ++t) {
      optima.push_back(ModelParams::random(arch, rng(), 1.0));
      const double rw = 1.0 + u(rng), rs = u(rng);
      expected_regret += rw - rs;
      regret_update(acc, rw, rs, optima[t], optima[t - 1]);
    }
    double vt = 0.0;
    for (std::size_t t = 1; t < optima.size(); ++t) {
      double sq = 0.0;
      for (Eigen::Index i = 0; i < optima[t].theta().size(); ++i) {
        sq += std::pow(optima[t].theta()(i) - optima[t - 1].theta()(i), 2);
      }
      vt += std::sqrt(sq);
    }
    CHECK(acc.path_length == doctest::Approx(vt).epsilon(1e-13));
    CHECK(acc.cumulative == doctest::Approx(expected_regret).epsilon(1e-13));
    CHECK(acc.regret.size() == 20);
  }
}
