#ifndef WSINFER_BAG_HPP
#define WSINFER_BAG_HPP

#include <Eigen/Core>
#include <string>
#include <vector>

#include "wsinfer/evidence.hpp"

namespace wsinfer {

// One weakly labeled sample: K instances, C classes.
//
// probs(k, c) is the backbone's positive-class probability for instance k
// under class c. evidence has one entry per class for per-class settings,
// or exactly one joint entry for single-label settings (PartialL, CompL,
// Noisy). features are optional and only consumed by the trainer.
struct Bag {
  std::string id;
  int K = 0;
  Eigen::MatrixXd probs;     // K x C; may be empty when only features are set
  Eigen::MatrixXd features;  // K x d; optional
  std::vector<WeakEvidence> evidence;

  int num_classes() const {
    return probs.size() > 0 ? static_cast<int>(probs.cols())
                            : static_cast<int>(evidence.size());
  }
  bool has_probs() const { return probs.size() > 0; }
  bool has_features() const { return features.size() > 0; }
};

}  // namespace wsinfer

#endif
