#ifndef WSINFER_LOOP_HPP
#define WSINFER_LOOP_HPP

#include <Eigen/Core>
#include <string>
#include <vector>

#include "wsinfer/chain.hpp"

namespace wsinfer {

// Symmetric matrix of inter-class weak-label transition probabilities,
// T[i][j] = P(W = i | W' = j). Validated symmetric (1e-12) with rows
// summing to 1 (1e-9).
struct ClassTransitionMatrix {
  Eigen::MatrixXd entries;

  bool is_identity(double tol = 0.0) const;
};

ClassTransitionMatrix make_class_transition(Eigen::MatrixXd entries);

// Reads a square row-major array-of-arrays of reals from a JSON file.
ClassTransitionMatrix load_class_transition(const std::string& path);

// Identity and uniform-symmetric-noise constructors.
ClassTransitionMatrix identity_class_transition(int n);
ClassTransitionMatrix symmetric_noise_transition(int n, double flip_rate);

// The message one class's chain sends to its weak-label node: the
// marginal likelihood of every candidate weak value under the chain's
// forward pass.
struct ClassEvidence {
  Eigen::VectorXd weights;  // normalized over the weak-value space
  double log_scale = 0.0;
};

ClassEvidence class_evidence(const SettingDescriptor& setting,
                             const StateSpace& space, int K,
                             const MessageVector& final_forward);

// Per-class evidence vectors for every class chain of one bag.
std::vector<ClassEvidence> class_evidence(const SettingDescriptor& setting,
                                          const Bag& bag, Mode mode);

// One-pass loop fusion: the message into class i from class k is
// T_class * evidence_k, and the fused weak belief multiplies the class's
// own evidence with every incoming message. Returns one normalized
// belief per class.
std::vector<Eigen::VectorXd> loop_messages(
    const std::vector<ClassEvidence>& evidence,
    const ClassTransitionMatrix& t_class);

// Full inference with multi-label correlation: each class's backward
// pass is seeded with its terminal factor passed through the observation
// channel T_class and reweighted by the other classes' fused messages.
// With T_class = identity this reduces exactly to independent per-class
// chain inference. Single-label settings (PartialL, CompL, Noisy) route
// through the category chain, where T_class acts as the label-noise
// channel.
LatentPosterior multilabel_posterior(const SettingDescriptor& setting,
                                     const Bag& bag,
                                     const ClassTransitionMatrix& t_class,
                                     Mode mode = Mode::LowRank);

}  // namespace wsinfer

#endif
