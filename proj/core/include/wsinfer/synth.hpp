#ifndef WSINFER_SYNTH_HPP
#define WSINFER_SYNTH_HPP

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "wsinfer/loop.hpp"
#include "wsinfer/setting.hpp"

namespace wsinfer {
namespace synth {

// Gaussian-mixture generator. Instance features sit at class_separation
// along each positive class's axis plus unit noise; bag sizes are drawn
// from a rounded normal with floor 1. Everything is deterministic under
// seed, with one derived stream per bag.
struct GenSpec {
  int n_bags = 100;
  double instances_mean = 8.0;
  double instances_std = 1.0;
  int n_classes = 1;
  int feature_dim = 2;
  double class_separation = 3.0;
  std::uint64_t seed = 1;

  double positive_prior = 0.5;   // per-class positive rate (or categorical
                                 // prior weight for single-label settings)
  double prior2 = 0.3;           // second collection prior for UnlUnl
  double partial_ratio = 0.3;    // distractor rate for PartialL
  double labeled_fraction = 0.5; // SemiSup labeled / PosUnl positive bags
  double soft_noise_sigma = 0.05;  // score jitter for SimConf/ConfDiff
};

struct Dataset {
  std::vector<Bag> bags;
  std::vector<Eigen::MatrixXi> truth;  // per-bag K x C label bits
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Weak evidence from ground-truth labels under the setting's aggregation
// rule. Returns one record per class, or a single joint record for the
// single-label settings. Stochastic parts (distractor sets, label noise,
// score jitter) draw from rng; t_class is the noise channel for Noisy.
std::vector<WeakEvidence> aggregate(const SettingDescriptor& setting,
                                    const Eigen::MatrixXi& labels,
                                    const GenSpec& spec,
                                    const ClassTransitionMatrix* t_class,
                                    std::mt19937_64& rng);

// Full synthetic dataset: features, calibrated probabilities (the Bayes
// posterior of the generative mixture), weak evidence, and sealed truth.
Dataset gen_dataset(const SettingDescriptor& setting, const GenSpec& spec,
                    const ClassTransitionMatrix* t_class = nullptr);

// Resamples each label from its row of t_class.
std::vector<int> corrupt_labels(const std::vector<int>& labels,
                                const ClassTransitionMatrix& t_class,
                                std::uint64_t seed);

}  // namespace synth
}  // namespace wsinfer

#endif
