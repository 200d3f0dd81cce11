#ifndef WSINFER_ORACLE_HPP
#define WSINFER_ORACLE_HPP

#include <Eigen/Core>
#include <vector>

#include "wsinfer/chain.hpp"

namespace wsinfer {
namespace oracle {

// Direct enumeration ground truth. Deliberately independent of the chain
// engine: weak-label semantics are re-derived from first principles here
// (aggregates computed straight from the bit patterns), so agreement with
// the engine is a meaningful check.

inline constexpr int kEnumerationCap = 16;

// K x C matrix of instance labels. Per-class settings enumerate one class
// column at a time (C = 1); single-label settings enumerate one-hot rows.
struct LabelConfiguration {
  Eigen::MatrixXi bits;
};

struct SigmaItem {
  LabelConfiguration config;
  double weight = 1.0;  // terminal-factor weight; 1 for hard evidence
};

// All label configurations consistent with the weak evidence. Hard
// evidence yields exactly the configurations whose aggregate equals w;
// soft evidence yields every configuration with its terminal weight.
std::vector<SigmaItem> enumerate_sigma(const SettingDescriptor& setting,
                                       const WeakEvidence& w, int K,
                                       int cap = kEnumerationCap);

// Exhaustive posterior and weak-label likelihood. class_transition is the
// observation channel for Noisy bags.
LatentPosterior brute_posterior(const SettingDescriptor& setting,
                                const Bag& bag,
                                const Eigen::MatrixXd* class_transition =
                                    nullptr,
                                int cap = kEnumerationCap);

struct DiffReport {
  double max_abs = 0.0;
  double mean_abs = 0.0;
  double max_loglik_diff = 0.0;
};

DiffReport compare(const LatentPosterior& engine_out,
                   const LatentPosterior& oracle_out);

}  // namespace oracle
}  // namespace wsinfer

#endif
