#ifndef WSINFER_EVIDENCE_HPP
#define WSINFER_EVIDENCE_HPP

#include <variant>
#include <vector>

namespace wsinfer {

// Weak annotation attached to one bag, one record per class (or a single
// joint record for single-label settings).

// Hard value. Scalar form (values.size() == 1) holds the aggregate w
// (any-positive bit, positive count, pair outcome). Bit-vector form holds
// one observed label bit per instance (fully labeled bags).
struct ExactEvidence {
  std::vector<int> values;
  bool scalar() const { return values.size() == 1; }
  int value() const { return values.front(); }
};

// Continuous pairwise score: similarity confidence in [0,1] or a
// confidence difference in [-1,1].
struct SoftPairEvidence {
  double score = 0.0;
};

// Distribution over the positive count 0..K (length K+1, sums to 1).
struct CountDistributionEvidence {
  std::vector<double> dist;
};

// Candidate label set; the true class is one of these indices.
struct CandidateSetEvidence {
  std::vector<int> classes;
};

// Observed (possibly corrupted) class index.
struct NoisyClassEvidence {
  int label = 0;
};

struct UnlabeledEvidence {};

using WeakEvidence = std::variant<ExactEvidence, SoftPairEvidence,
                                  CountDistributionEvidence,
                                  CandidateSetEvidence, NoisyClassEvidence,
                                  UnlabeledEvidence>;

const char* evidence_kind_name(const WeakEvidence& ev);

}  // namespace wsinfer

#endif
