#include "wsinfer/trainer.hpp"

#include <cmath>

#include "wsinfer/loop.hpp"

namespace wsinfer {
namespace trainer {

namespace {

constexpr double kProbClamp = 1e-9;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd append_bias(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out(features.rows(), features.cols() + 1);
  out.leftCols(features.cols()) = features;
  out.rightCols(1).setOnes();
  return out;
}

Eigen::MatrixXd posterior_for(const SettingDescriptor& setting, Bag bag,
                              const Eigen::MatrixXd& predictions, Mode mode,
                              const ClassTransitionMatrix* t_class) {
  bag.probs = predictions;
  if (t_class) return multilabel_posterior(setting, bag, *t_class, mode).table;
  return infer_bag(setting, bag, mode).table;
}

double bernoulli_entropy_mean(const Eigen::MatrixXd& posterior) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < posterior.size(); ++i) {
    const double p = posterior(i);
    if (p > 0.0) h -= p * std::log(p);
    if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
  }
  return h / static_cast<double>(posterior.size());
}

}  // namespace

ToyModel make_model(int n_classes, int feature_dim) {
  if (n_classes < 1 || feature_dim < 1)
    throw Error(ErrorCode::DimensionMismatch,
                "model needs at least one class and one feature");
  ToyModel m;
  m.weights = Eigen::MatrixXd::Zero(n_classes, feature_dim + 1);
  return m;
}

Eigen::MatrixXd predict(const ToyModel& model,
                        const Eigen::MatrixXd& features) {
  if (features.cols() != model.feature_dim())
    throw Error(ErrorCode::DimensionMismatch,
                "feature dimension differs from the model");
  const Eigen::MatrixXd scores =
      append_bias(features) * model.weights.transpose();
  Eigen::MatrixXd probs(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    probs(i) = std::clamp(sigmoid(scores(i)), kProbClamp, 1.0 - kProbClamp);
  return probs;
}

double frozen_objective(const ToyModel& model, const synth::Dataset& data,
                        const std::vector<Eigen::MatrixXd>& posteriors) {
  if (data.bags.size() != posteriors.size())
    throw Error(ErrorCode::ShapeMismatch,
                "one posterior table per bag is required");
  double sum = 0.0;
  for (size_t b = 0; b < data.bags.size(); ++b)
    sum += ure_loss(posteriors[b], predict(model, data.bags[b].features),
                    BaseLoss::BCE);
  return sum / static_cast<double>(data.bags.size());
}

Eigen::MatrixXd frozen_gradient(const ToyModel& model,
                                const synth::Dataset& data,
                                const std::vector<Eigen::MatrixXd>& posteriors) {
  if (data.bags.size() != posteriors.size())
    throw Error(ErrorCode::ShapeMismatch,
                "one posterior table per bag is required");
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(model.weights.rows(),
                                               model.weights.cols());
  const double inv_bags = 1.0 / static_cast<double>(data.bags.size());
  for (size_t b = 0; b < data.bags.size(); ++b) {
    const Bag& bag = data.bags[b];
    const Eigen::MatrixXd x = append_bias(bag.features);
    const Eigen::MatrixXd f = predict(model, bag.features);
    // d/dlogit of the Bernoulli cross-entropy is f - P.
    const Eigen::MatrixXd delta =
        (f - posteriors[b]) * (inv_bags / bag.K);
    grad.noalias() += delta.transpose() * x;
  }
  return grad;
}

namespace {

// Pull of the smoothing term on the backbone, routed through a central
// finite-difference Jacobian of the posterior with respect to the
// engine's probability inputs.
Eigen::MatrixXd smoothing_gradient(const SettingDescriptor& setting,
                                   const synth::Dataset& data,
                                   const ToyModel& model, double lambda,
                                   Mode mode,
                                   const ClassTransitionMatrix* t_class) {
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(model.weights.rows(),
                                               model.weights.cols());
  const double inv_bags = 1.0 / static_cast<double>(data.bags.size());
  const double h = 1e-5;
  for (size_t b = 0; b < data.bags.size(); ++b) {
    const Bag& bag = data.bags[b];
    const Eigen::MatrixXd x = append_bias(bag.features);
    const Eigen::MatrixXd f = predict(model, bag.features);
    const int K = bag.K;
    const int C = static_cast<int>(f.cols());
    const Eigen::MatrixXd base =
        posterior_for(setting, bag, f, mode, t_class);

    // dL_smo/dP for the Bernoulli form, including the 1/(CK) normalizer
    // and the mean over bags.
    Eigen::MatrixXd upstream(base.rows(), base.cols());
    for (Eigen::Index i = 0; i < base.size(); ++i) {
      const double p = std::clamp(base(i), 1e-12, 1.0 - 1e-12);
      upstream(i) = lambda * (std::log(p) - std::log(1.0 - p)) *
                    inv_bags / (static_cast<double>(C) * K);
    }

    Eigen::MatrixXd grad_f = Eigen::MatrixXd::Zero(K, C);
    for (int k = 0; k < K; ++k)
      for (int c = 0; c < C; ++c) {
        // Probes stay strictly inside (0,1) so hard-zero likelihoods
        // cannot appear mid-difference.
        const double lo = std::max(kProbClamp, f(k, c) - h);
        const double hi = std::min(1.0 - kProbClamp, f(k, c) + h);
        if (hi <= lo) continue;
        Eigen::MatrixXd fp = f;
        fp(k, c) = hi;
        Eigen::MatrixXd fm = f;
        fm(k, c) = lo;
        const Eigen::MatrixXd dp =
            (posterior_for(setting, bag, fp, mode, t_class) -
             posterior_for(setting, bag, fm, mode, t_class)) /
            (hi - lo);
        grad_f(k, c) = (upstream.array() * dp.array()).sum();
      }

    // Chain through the sigmoid into the weights.
    const Eigen::MatrixXd dz =
        grad_f.array() * (f.array() * (1.0 - f.array()));
    grad.noalias() += dz.transpose() * x;
  }
  return grad;
}

TrainResult run_training(const SettingDescriptor* setting,
                         const synth::Dataset& data,
                         const TrainConfig& config,
                         const ClassTransitionMatrix* t_class) {
  if (data.bags.empty())
    throw Error(ErrorCode::EmptyTestSet, "training set is empty");
  if (config.epochs < 1 || config.learning_rate <= 0.0)
    throw Error(ErrorCode::BadParameter,
                "epochs must be >= 1 and learning_rate > 0");
  for (const Bag& bag : data.bags)
    if (!bag.has_features())
      throw Error(ErrorCode::ShapeMismatch,
                  "bag " + bag.id + " carries no features");

  const int d = static_cast<int>(data.bags.front().features.cols());
  int C = 0;
  if (!data.truth.empty()) {
    C = static_cast<int>(data.truth.front().cols());
  } else if (data.bags.front().has_probs()) {
    C = static_cast<int>(data.bags.front().probs.cols());
  } else if (setting && !setting->joint_evidence()) {
    C = static_cast<int>(data.bags.front().evidence.size());
  } else {
    throw Error(ErrorCode::ShapeMismatch,
                "cannot infer the class count; provide probs or truth");
  }
  TrainResult result;
  result.model = make_model(C, d);

  std::vector<Eigen::MatrixXd> posteriors(data.bags.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochStats stats;
    for (size_t b = 0; b < data.bags.size(); ++b) {
      const Bag& bag = data.bags[b];
      const Eigen::MatrixXd f = predict(result.model, bag.features);
      if (setting) {
        posteriors[b] = posterior_for(*setting, bag, f, config.mode, t_class);
      } else {
        posteriors[b] = data.truth[b].cast<double>();
      }
      const LossBreakdown loss =
          total_loss(posteriors[b], f, BaseLoss::BCE, config.lambda);
      stats.ure += loss.ure;
      stats.smoothing += loss.smoothing;
      stats.total += loss.total;
      stats.mean_posterior_entropy += bernoulli_entropy_mean(posteriors[b]);
    }
    const double inv = 1.0 / static_cast<double>(data.bags.size());
    stats.ure *= inv;
    stats.smoothing *= inv;
    stats.total *= inv;
    stats.mean_posterior_entropy *= inv;
    result.trace.push_back(stats);

    Eigen::MatrixXd grad = frozen_gradient(result.model, data, posteriors);
    if (setting && config.lambda > 0.0)
      grad += smoothing_gradient(*setting, data, result.model, config.lambda,
                                 config.mode, t_class);
    result.model.weights -= config.learning_rate * grad;
  }
  return result;
}

}  // namespace

TrainResult train_em(const SettingDescriptor& setting,
                     const synth::Dataset& data, const TrainConfig& config,
                     const ClassTransitionMatrix* t_class) {
  return run_training(&setting, data, config, t_class);
}

TrainResult train_supervised(const synth::Dataset& data,
                             const TrainConfig& config) {
  if (data.truth.size() != data.bags.size())
    throw Error(ErrorCode::ShapeMismatch,
                "supervised training needs ground-truth labels per bag");
  return run_training(nullptr, data, config, nullptr);
}

EvalReport evaluate(const ToyModel& model, const synth::Dataset& data) {
  if (data.bags.empty())
    throw Error(ErrorCode::EmptyTestSet, "no instances to evaluate");
  const int C = model.n_classes();
  bool one_hot = C > 1;
  for (const auto& truth : data.truth)
    for (int k = 0; k < truth.rows() && one_hot; ++k)
      if (truth.row(k).sum() != 1) one_hot = false;

  Eigen::VectorXd correct = Eigen::VectorXd::Zero(C);
  Eigen::VectorXd seen = Eigen::VectorXd::Zero(C);
  double hits = 0.0;
  double total = 0.0;
  for (size_t b = 0; b < data.bags.size(); ++b) {
    const Eigen::MatrixXd f = predict(model, data.bags[b].features);
    const Eigen::MatrixXi& truth = data.truth[b];
    for (int k = 0; k < f.rows(); ++k) {
      if (one_hot) {
        int pred = 0, actual = 0;
        f.row(k).maxCoeff(&pred);
        truth.row(k).maxCoeff(&actual);
        hits += pred == actual ? 1.0 : 0.0;
        total += 1.0;
        seen[actual] += 1.0;
        correct[actual] += pred == actual ? 1.0 : 0.0;
      } else {
        for (int c = 0; c < C; ++c) {
          const int pred = f(k, c) >= 0.5 ? 1 : 0;
          hits += pred == truth(k, c) ? 1.0 : 0.0;
          total += 1.0;
          seen[c] += 1.0;
          correct[c] += pred == truth(k, c) ? 1.0 : 0.0;
        }
      }
    }
  }
  if (total == 0.0)
    throw Error(ErrorCode::EmptyTestSet, "no instances to evaluate");
  EvalReport report;
  report.accuracy = hits / total;
  report.per_class_accuracy =
      (seen.array() > 0.0).select(correct.array() / seen.array(), 0.0);
  return report;
}

}  // namespace trainer
}  // namespace wsinfer
