#include <doctest.h>

#include <cmath>

#include "wsinfer/trainer.hpp"

using namespace wsinfer;
using trainer::ToyModel;
using trainer::TrainConfig;

TEST_SUITE_BEGIN("trainer");

namespace {

synth::Dataset labeled_k1_dataset(int n, std::uint64_t seed) {
  // K=1 bags with exact labels: the degenerate fully supervised case.
  const auto s = make_setting(SettingKind::SemiSup);
  synth::GenSpec spec;
  spec.n_bags = n;
  spec.instances_mean = 1.0;
  spec.instances_std = 0.0;
  spec.labeled_fraction = 1.1;  // always labeled
  spec.seed = seed;
  return synth::gen_dataset(s, spec);
}

}  // namespace

TEST_CASE("predict is the sigmoid of the linear score") {
  ToyModel m = trainer::make_model(1, 2);
  Eigen::MatrixXd x(1, 2);
  x << 0.0, 0.0;
  CHECK(trainer::predict(m, x)(0, 0) == doctest::Approx(0.5));

  m.weights << 2.0, -1.0, 0.5;
  x << 1.0, 3.0;
  const double z = 2.0 * 1.0 - 1.0 * 3.0 + 0.5;
  CHECK(trainer::predict(m, x)(0, 0) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-12));

  // Monotone in the margin along the weight direction.
  m.weights << 1.0, 0.0, 0.0;
  Eigen::MatrixXd far(1, 2);
  far << 30.0, 0.0;
  CHECK(trainer::predict(m, far)(0, 0) > 0.999);
}

TEST_CASE("frozen gradient matches central finite differences") {
  const auto s = make_setting(SettingKind::MultiIns);
  synth::GenSpec spec;
  spec.n_bags = 12;
  spec.instances_mean = 4.0;
  spec.seed = 3;
  const synth::Dataset data = synth::gen_dataset(s, spec);

  std::mt19937_64 rng(71);
  std::normal_distribution<double> noise(0.0, 0.8);
  for (int point = 0; point < 20; ++point) {
    ToyModel model = trainer::make_model(1, spec.feature_dim);
    for (Eigen::Index i = 0; i < model.weights.size(); ++i)
      model.weights(i) = noise(rng);

    std::vector<Eigen::MatrixXd> posteriors;
    for (const Bag& bag : data.bags) {
      Bag scratch = bag;
      scratch.probs = trainer::predict(model, bag.features);
      posteriors.push_back(infer_bag(s, scratch, Mode::LowRank).table);
    }

    const Eigen::MatrixXd grad =
        trainer::frozen_gradient(model, data, posteriors);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
      ToyModel up = model, down = model;
      up.weights(i) += h;
      down.weights(i) -= h;
      const double fd = (trainer::frozen_objective(up, data, posteriors) -
                         trainer::frozen_objective(down, data, posteriors)) /
                        (2.0 * h);
      const double denom = std::max(std::abs(fd), 1e-6);
      CHECK(std::abs(grad(i) - fd) / denom <= 1e-5);
    }
  }
}

TEST_CASE("exact-label EM training equals plain supervised training") {
  const synth::Dataset data = labeled_k1_dataset(60, 9);
  TrainConfig config;
  config.epochs = 25;
  config.learning_rate = 0.4;
  config.seed = 9;

  const auto s = make_setting(SettingKind::SemiSup);
  const auto em = trainer::train_em(s, data, config);
  const auto ref = trainer::train_supervised(data, config);
  CHECK((em.model.weights - ref.model.weights).cwiseAbs().maxCoeff() <= 1e-9);
  REQUIRE(em.trace.size() == ref.trace.size());
  for (size_t e = 0; e < em.trace.size(); ++e)
    CHECK(std::abs(em.trace[e].ure - ref.trace[e].ure) <= 1e-9);
}

TEST_CASE("the smoothing weight changes the posterior entropy trajectory") {
  const auto s = make_setting(SettingKind::MultiIns);
  synth::GenSpec spec;
  spec.n_bags = 40;
  spec.instances_mean = 4.0;
  spec.class_separation = 2.0;
  spec.seed = 21;
  const synth::Dataset data = synth::gen_dataset(s, spec);

  TrainConfig plain;
  plain.epochs = 8;
  plain.learning_rate = 0.3;
  plain.lambda = 0.0;
  TrainConfig smoothed = plain;
  smoothed.lambda = 2.0;

  const auto base = trainer::train_em(s, data, plain);
  const auto smo = trainer::train_em(s, data, smoothed);
  // The smoothing term is the mean negative entropy of the posterior; its
  // gradient pulls the posteriors toward the uniform point, so with the
  // weight on the trajectory keeps strictly more entropy.
  CHECK(smo.trace.back().mean_posterior_entropy >
        base.trace.back().mean_posterior_entropy);
  // And the smoothing pathway is live: the runs actually diverge.
  CHECK((smo.model.weights - base.model.weights).cwiseAbs().maxCoeff() >
        1e-6);
}

TEST_CASE("full-batch EM keeps the weighted risk non-increasing") {
  const auto s = make_setting(SettingKind::MultiIns);
  synth::GenSpec spec;
  spec.n_bags = 80;
  spec.instances_mean = 6.0;
  spec.seed = 33;
  const synth::Dataset data = synth::gen_dataset(s, spec);
  TrainConfig config;
  config.epochs = 30;
  config.learning_rate = 0.3;
  const auto result = trainer::train_em(s, data, config);
  int increases = 0;
  for (size_t e = 1; e < result.trace.size(); ++e)
    if (result.trace[e].ure > result.trace[e - 1].ure + 1e-9) ++increases;
  // Reported, not asserted hard by the contract; with full-batch steps at
  // this rate the trace should still be clean.
  CHECK(increases <= 2);
}

TEST_CASE("evaluate scores instance-level accuracy") {
  const synth::Dataset data = labeled_k1_dataset(200, 5);
  ToyModel zero = trainer::make_model(1, 2);
  const auto coin = trainer::evaluate(zero, data);
  CHECK(coin.accuracy > 0.2);
  CHECK(coin.accuracy < 0.8);

  TrainConfig config;
  config.epochs = 150;
  config.learning_rate = 0.8;
  const auto fit = trainer::train_supervised(data, config);
  const auto good = trainer::evaluate(fit.model, data);
  CHECK(good.accuracy > 0.9);

  synth::Dataset empty;
  CHECK_THROWS_WITH_AS(trainer::evaluate(zero, empty),
                       doctest::Contains("EmptyTestSet"), Error);
}

TEST_SUITE_END();
