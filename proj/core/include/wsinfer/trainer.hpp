#ifndef WSINFER_TRAINER_HPP
#define WSINFER_TRAINER_HPP

#include <Eigen/Core>
#include <vector>

#include "wsinfer/losses.hpp"
#include "wsinfer/synth.hpp"

namespace wsinfer {
namespace trainer {

// Per-class linear scorer with bias, squashed through a sigmoid.
struct ToyModel {
  Eigen::MatrixXd weights;  // C x (d + 1), last column is the bias

  int feature_dim() const { return static_cast<int>(weights.cols()) - 1; }
  int n_classes() const { return static_cast<int>(weights.rows()); }
};

ToyModel make_model(int n_classes, int feature_dim);

// K x C probabilities for one bag's instances, clamped into (0, 1).
Eigen::MatrixXd predict(const ToyModel& model, const Eigen::MatrixXd& features);

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.5;
  double lambda = 0.0;
  std::uint64_t seed = 1;
  Mode mode = Mode::LowRank;
};

struct EpochStats {
  double ure = 0.0;
  double smoothing = 0.0;
  double total = 0.0;
  double mean_posterior_entropy = 0.0;
};

struct TrainResult {
  ToyModel model;
  std::vector<EpochStats> trace;
};

// Weighted objective and its analytic gradient with the posterior
// coefficients held fixed (the E-step freeze): mean over bags of the
// BCE unbiased risk.
double frozen_objective(const ToyModel& model, const synth::Dataset& data,
                        const std::vector<Eigen::MatrixXd>& posteriors);
Eigen::MatrixXd frozen_gradient(const ToyModel& model,
                                const synth::Dataset& data,
                                const std::vector<Eigen::MatrixXd>& posteriors);

// EM-style alternation: the E step runs the chain engine on the current
// predictions to refresh the posterior coefficients; the M step takes one
// full-batch gradient step on the total loss with those coefficients
// frozen. When lambda > 0 the smoothing term's pull on the posterior is
// propagated through a finite-difference posterior Jacobian.
TrainResult train_em(const SettingDescriptor& setting,
                     const synth::Dataset& data, const TrainConfig& config,
                     const ClassTransitionMatrix* t_class = nullptr);

// The same loop with posteriors pinned to the ground-truth labels;
// reference for the degenerate fully supervised case.
TrainResult train_supervised(const synth::Dataset& data,
                             const TrainConfig& config);

struct EvalReport {
  double accuracy = 0.0;
  Eigen::VectorXd per_class_accuracy;
};

// Instance-level accuracy against held-out labels: thresholded per class,
// or argmax when the truth rows are one-hot over C > 1 classes.
EvalReport evaluate(const ToyModel& model, const synth::Dataset& data);

}  // namespace trainer
}  // namespace wsinfer

#endif
