#ifndef WSINFER_SETTING_HPP
#define WSINFER_SETTING_HPP

#include <Eigen/Core>
#include <map>
#include <string>

#include "wsinfer/bag.hpp"
#include "wsinfer/errors.hpp"
#include "wsinfer/evidence.hpp"

namespace wsinfer {

enum class SettingKind {
  MultiIns,
  LProp,
  PairComp,
  PairSim,
  SimConf,
  ConfDiff,
  PosUnl,
  UnlUnl,
  PartialL,
  Noisy,
  CompL,
  SemiSup,
  // Listed for completeness; make_setting rejects them.
  CrowdL,
  SimUnl,
};

const char* setting_kind_name(SettingKind kind);
SettingKind setting_kind_from_name(const std::string& name);

// Ordered enumeration of the joint chain state o = (y, z).
//
// States are y-major, z-minor: the first w_card states carry y = 0, the
// last w_card carry y = 1, both blocks sharing the same z order. That
// layout makes the left half-block of every transition matrix its exact
// low-rank factor U (see chain.hpp).
struct StateSpace {
  int w_card = 0;

  int size() const { return 2 * w_card; }
  int index(int y, int z) const { return y * w_card + z; }
  int y_of(int state) const { return state / w_card; }
  int z_of(int state) const { return state % w_card; }
};

// Full semantics of one weak supervision kind.
//
// The chain walks instance slots k = 1..K (or category slots c = 1..C for
// the single-label settings flagged category_chain). Each slot carries the
// joint state (y, z): y is the slot's binary label, z an accumulated
// statistic whose meaning is setting-specific (state_meaning). The
// deterministic update z' = step(z, y') fixes which transitions exist;
// emit(z, y', p) gives their probability; terminal_factor scores the final
// state against the observed weak evidence.
class SettingDescriptor {
public:
  SettingKind kind() const { return kind_; }
  const char* state_meaning() const { return state_meaning_; }

  // Number of weak-label values |W| for a length-K chain.
  int w_card(int K) const;

  // True when bags must hold exactly two instances.
  bool pairwise() const;
  // True when evidence carries a continuous pair score.
  bool soft_pair() const;
  // True for single-label settings realized as a chain over categories
  // (PartialL, CompL, Noisy) rather than over instances.
  bool category_chain() const;
  // True when the evidence record is joint for the whole bag rather than
  // one record per class.
  bool joint_evidence() const { return category_chain(); }

  // z value of the first state given the first slot's label.
  int init_z(int y_first) const;
  // Deterministic state update z' = step(z, y'). Total on all (z, y')
  // pairs; unreachable sources follow the same rule so every transition
  // column stays stochastic.
  int step(int z, int y_next) const;
  // Probability of emitting y_next from accumulated state z when the
  // slot's positive-class probability is p. Settings without an absorbing
  // rule ignore z entirely, which is what keeps the factorization exact.
  double emit(int z, int y_next, double p) const;

  // Terminal factor g(w, o) evaluated for every state o, i.e. the
  // likelihood of the observed evidence given the chain ends in o.
  // K is the chain length the evidence refers to.
  Eigen::VectorXd terminal_factor(const WeakEvidence& ev,
                                  const StateSpace& space, int K) const;
  void terminal_factor(const WeakEvidence& ev, const StateSpace& space, int K,
                       Eigen::VectorXd& out) const;

  // Deterministic aggregation rule w = phi(y) for one class's bit labels.
  // Only defined for settings whose weak label is a deterministic
  // function of the labels (MultiIns, LProp, PairComp, PairSim, PosUnl,
  // UnlUnl count chains).
  int aggregate_scalar(const std::vector<int>& labels) const;

  // Class prior(s) for the count-chain terminal of PosUnl / UnlUnl.
  double prior() const { return prior_; }
  double prior2() const { return prior2_; }

private:
  friend SettingDescriptor make_setting(SettingKind,
                                        const std::map<std::string, double>&);
  SettingKind kind_ = SettingKind::MultiIns;
  const char* state_meaning_ = "";
  double prior_ = 0.5;
  double prior2_ = 0.5;
};

// Builds the descriptor for a supported setting. params carries
// setting-specific constants: "prior" for PosUnl/UnlUnl, "prior2" for
// UnlUnl's second collection. Throws UnsupportedSetting for CrowdL and
// SimUnl and BadParameter for unknown keys.
SettingDescriptor make_setting(SettingKind kind,
                               const std::map<std::string, double>& params = {});

StateSpace build_state_space(const SettingDescriptor& setting, int K);

// Checks bag invariants against the setting; throws on violation
// (BadProbability, BagSizeMismatch, EvidenceKindMismatch).
void validate_bag(const SettingDescriptor& setting, const Bag& bag);

// Binomial(K, p) probability mass over counts 0..K.
Eigen::VectorXd binomial_pmf(int K, double p);

}  // namespace wsinfer

#endif
