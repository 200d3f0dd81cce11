#include <doctest.h>

#include <cmath>
#include <random>

#include "wsinfer/losses.hpp"

using namespace wsinfer;

TEST_SUITE_BEGIN("losses");

namespace {

Eigen::MatrixXd scalar(double v) {
  return Eigen::MatrixXd::Constant(1, 1, v);
}

}  // namespace

TEST_CASE("one-hot posteriors reduce the URE to the supervised loss") {
  Eigen::MatrixXd post(1, 1), pred(1, 1);
  post << 1.0;
  pred << 0.8;
  CHECK(ure_loss(post, pred, BaseLoss::BCE) ==
        doctest::Approx(-std::log(0.8)).epsilon(1e-12));
  post << 0.0;
  CHECK(ure_loss(post, pred, BaseLoss::BCE) ==
        doctest::Approx(-std::log(0.2)).epsilon(1e-12));
}

TEST_CASE("uniform posterior against a 0.5 prediction costs ln 2") {
  CHECK(ure_loss(scalar(0.5), scalar(0.5), BaseLoss::BCE) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Coefficients sum to one per instance, each term is -ln 0.5.
  Eigen::MatrixXd post = Eigen::MatrixXd::Constant(3, 1, 4.0 / 7.0);
  Eigen::MatrixXd pred = Eigen::MatrixXd::Constant(3, 1, 0.5);
  CHECK(ure_loss(post, pred, BaseLoss::BCE) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("smoothing loss is the mean negative entropy") {
  CHECK(smoothing_loss(scalar(1.0)) == 0.0);
  CHECK(smoothing_loss(scalar(0.0)) == 0.0);
  CHECK(smoothing_loss(scalar(0.5)) ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(smoothing_loss(scalar(0.9)) ==
        doctest::Approx(0.9 * std::log(0.9) + 0.1 * std::log(0.1))
            .epsilon(1e-12));
  CHECK(smoothing_loss(scalar(0.9)) == doctest::Approx(-0.325083).epsilon(1e-5));
}

TEST_CASE("smoothing loss stays within its entropy bounds") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd post(4, 3);
    for (int k = 0; k < 4; ++k)
      for (int c = 0; c < 3; ++c) post(k, c) = unit(rng);
    const double smo = smoothing_loss(post);
    CHECK(smo <= 0.0);
    CHECK(smo >= -std::log(2.0) - 1e-12);
  }
}

TEST_CASE("total loss composes linearly in lambda") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.01, 0.99);
  Eigen::MatrixXd post(3, 2), pred(3, 2);
  for (int k = 0; k < 3; ++k)
    for (int c = 0; c < 2; ++c) {
      post(k, c) = unit(rng);
      pred(k, c) = unit(rng);
    }
  const LossBreakdown zero = total_loss(post, pred, BaseLoss::BCE, 0.0);
  CHECK(zero.total == zero.ure);
  const LossBreakdown a = total_loss(post, pred, BaseLoss::BCE, 0.7);
  const LossBreakdown b = total_loss(post, pred, BaseLoss::BCE, 1.6);
  const LossBreakdown ab = total_loss(post, pred, BaseLoss::BCE, 2.3);
  CHECK(a.total + b.total - a.ure ==
        doctest::Approx(ab.total).epsilon(1e-12));
}

TEST_CASE("BCE with unit smoothing weight is the KL divergence") {
  CHECK(kl_identity_residual(scalar(0.37), scalar(0.37)) <= 1e-12);

  Eigen::MatrixXd post = scalar(0.8), pred = scalar(0.5);
  const LossBreakdown b = total_loss(post, pred, BaseLoss::BCE, 1.0);
  CHECK(b.total ==
        doctest::Approx(0.8 * std::log(0.8 / 0.5) + 0.2 * std::log(0.2 / 0.5))
            .epsilon(1e-12));
  CHECK(b.total == doctest::Approx(0.192745).epsilon(1e-5));
  CHECK(kl_identity_residual(post, pred) <= 1e-12);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.01, 0.99);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd p(5, 1), f(5, 1);
    for (int k = 0; k < 5; ++k) {
      p(k, 0) = unit(rng);
      f(k, 0) = unit(rng);
    }
    CHECK(kl_identity_residual(p, f) <= 1e-12);
  }
}

TEST_CASE("the CE risk is the negative scaled Q-function") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> ksize(1, 8);
  std::uniform_int_distribution<int> csize(1, 5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int K = ksize(rng), C = csize(rng);
    Eigen::MatrixXd post(K, C), pred(K, C);
    for (int k = 0; k < K; ++k) {
      double sum = 0.0;
      for (int c = 0; c < C; ++c) {
        post(k, c) = 0.01 + unit(rng);
        pred(k, c) = 0.01 + unit(rng);
        sum += post(k, c);
      }
      post.row(k) /= sum;
    }
    worst = std::max(worst, em_q_identity_check(post, pred));
  }
  CHECK(worst <= 1e-12);

  // One-hot posteriors: the identity holds and the URE is supervised CE.
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(2, 3);
  onehot(0, 1) = 1.0;
  onehot(1, 2) = 1.0;
  Eigen::MatrixXd pred = Eigen::MatrixXd::Constant(2, 3, 0.2);
  CHECK(em_q_identity_check(onehot, pred) <= 1e-12);
  CHECK(ure_loss(onehot, pred, BaseLoss::CE, PosteriorForm::CategoricalRow) ==
        doctest::Approx(-std::log(0.2)).epsilon(1e-12));
}

TEST_CASE("MAE and shape guards behave") {
  CHECK(ure_loss(scalar(1.0), scalar(0.8), BaseLoss::MAE) ==
        doctest::Approx(0.2).epsilon(1e-12));
  Eigen::MatrixXd wide(1, 2);
  wide << 0.5, 0.5;
  CHECK_THROWS_WITH_AS(ure_loss(wide, scalar(0.5), BaseLoss::BCE),
                       doctest::Contains("ShapeMismatch"), Error);
  CHECK_THROWS_AS(total_loss(scalar(0.5), scalar(0.5), BaseLoss::BCE, -1.0),
                  Error);
}

TEST_SUITE_END();
