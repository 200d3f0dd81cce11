#ifndef WSINFER_CHAIN_HPP
#define WSINFER_CHAIN_HPP

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "wsinfer/bag.hpp"
#include "wsinfer/setting.hpp"

namespace wsinfer {

enum class Mode { Dense, LowRank };

const char* mode_name(Mode mode);
Mode mode_from_name(const std::string& name);

// One message over the joint state space, kept normalized. The stripped
// normalizers accumulate in log_scale so chains of any length stay finite.
struct MessageVector {
  Eigen::VectorXd weights;
  double log_scale = 0.0;
};

// Dense transition P(o^{k+1} | o^k), destination states on rows, source
// states on columns. Columns are stochastic; support follows step().
struct TransitionMatrix {
  Eigen::MatrixXd entries;
};

// Exact factorization T = U * V^T with V fixed to the two stacked
// identity blocks. U is the left (y = 0) half-block of T; the
// factorization is exact exactly when T's two half-blocks coincide.
struct LowRankFactors {
  Eigen::MatrixXd U;  // |S_o| x r
  Eigen::MatrixXd V;  // |S_o| x r
  int rank = 0;
};

struct BeliefTable {
  std::vector<Eigen::VectorXd> nodes;  // per-node distribution over S_o
  double log_likelihood = 0.0;         // log P(W = w | X)
};

// K x C table of P(Y^k = positive | X, W) plus the per-class weak-label
// log-likelihood (a single entry for joint-evidence settings).
struct LatentPosterior {
  Eigen::MatrixXd table;
  Eigen::VectorXd log_likelihood;
};

// Fully resolved inputs for one chain run. For per-class settings the
// chain walks the bag's instances with that class's probabilities
// (SemiSup labels are folded in by clamping, their stripped mass recorded
// in node_log). For category-chain settings the chain walks categories
// with masked stick-breaking probabilities so the one-hot closed form is
// reproduced exactly.
struct ChainPlan {
  SettingDescriptor setting;
  StateSpace space;
  Eigen::VectorXd probs;     // per-slot emission probability
  Eigen::VectorXd node_log;  // per-slot stripped log mass
  Eigen::VectorXd terminal;  // g(w, o) over S_o
  int length = 0;
};

ChainPlan plan_chain(const SettingDescriptor& setting, const Bag& bag,
                     int class_index,
                     const Eigen::MatrixXd* class_transition = nullptr);

// P(O^1 | x): mass p on (1, init_z(1)) and 1 - p on (0, init_z(0)).
MessageVector initial_message(const SettingDescriptor& setting,
                              const StateSpace& space, double p);

// Transition into the next slot whose positive probability is p_next.
TransitionMatrix build_transition(const SettingDescriptor& setting,
                                  double p_next, const StateSpace& space);

// Splits T into the fixed-V form; throws RankCheckFailed when the two
// half-blocks differ by more than 1e-12 (caller falls back to dense).
LowRankFactors factorize(const TransitionMatrix& t, const StateSpace& space);

std::vector<MessageVector> forward_pass(const ChainPlan& plan, Mode mode);
std::vector<MessageVector> forward_pass(const SettingDescriptor& setting,
                                        const Bag& bag, int class_index,
                                        Mode mode);

std::vector<MessageVector> backward_pass(const ChainPlan& plan,
                                         const Eigen::VectorXd& terminal,
                                         Mode mode);
std::vector<MessageVector> backward_pass(const SettingDescriptor& setting,
                                         const Bag& bag, int class_index,
                                         const Eigen::VectorXd& terminal,
                                         Mode mode);

BeliefTable beliefs(const ChainPlan& plan,
                    const std::vector<MessageVector>& forward,
                    const std::vector<MessageVector>& backward);

// Single-chain posterior column P(Y^k = 1 | x, w), one row per node.
LatentPosterior latent_posterior(const BeliefTable& table,
                                 const StateSpace& space);

// log P(W = w | X) for a hypothetical weak value on one class's chain.
double weak_label_likelihood(const SettingDescriptor& setting, const Bag& bag,
                             int class_index, const WeakEvidence& w,
                             Mode mode);

// Full independent-chain inference for one bag (no multi-label fusion).
// class_transition is only consulted by category-chain settings, where it
// acts as the observation channel (Noisy).
LatentPosterior infer_bag(const SettingDescriptor& setting, const Bag& bag,
                          Mode mode,
                          const Eigen::MatrixXd* class_transition = nullptr);

struct BatchItem {
  std::string bag_id;
  std::optional<LatentPosterior> posterior;
  std::string error;  // empty on success

  bool ok() const { return posterior.has_value(); }
};

// Inference over many bags. In LowRank mode all (bag, class) chains
// advance through one fused matrix operation per step; bags shorter than
// the longest are padded with identity steps that leave their state
// untouched. Dense mode and category-chain settings process bags one at
// a time. Per-bag failures are reported in-place, tagged with the bag id,
// without aborting the batch.
std::vector<BatchItem> batched_infer(const SettingDescriptor& setting,
                                     const std::vector<Bag>& bags, Mode mode,
                                     const Eigen::MatrixXd* class_transition =
                                         nullptr);

}  // namespace wsinfer

#endif
