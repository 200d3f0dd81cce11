#include "wsinfer/setting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wsinfer {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadProbability: return "BadProbability";
    case ErrorCode::BagSizeMismatch: return "BagSizeMismatch";
    case ErrorCode::EvidenceKindMismatch: return "EvidenceKindMismatch";
    case ErrorCode::UnsupportedSetting: return "UnsupportedSetting";
    case ErrorCode::BadParameter: return "BadParameter";
    case ErrorCode::RankCheckFailed: return "RankCheckFailed";
    case ErrorCode::InfeasibleBag: return "InfeasibleBag";
    case ErrorCode::InfeasibleWeakLabel: return "InfeasibleWeakLabel";
    case ErrorCode::NormalizationFailure: return "NormalizationFailure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::SettingMismatch: return "SettingMismatch";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "UnknownError";
}

const char* evidence_kind_name(const WeakEvidence& ev) {
  struct Visitor {
    const char* operator()(const ExactEvidence&) { return "exact"; }
    const char* operator()(const SoftPairEvidence&) { return "soft-pair"; }
    const char* operator()(const CountDistributionEvidence&) {
      return "count-distribution";
    }
    const char* operator()(const CandidateSetEvidence&) {
      return "candidate-set";
    }
    const char* operator()(const NoisyClassEvidence&) { return "noisy-class"; }
    const char* operator()(const UnlabeledEvidence&) { return "unlabeled"; }
  };
  return std::visit(Visitor{}, ev);
}

const char* setting_kind_name(SettingKind kind) {
  switch (kind) {
    case SettingKind::MultiIns: return "multiins";
    case SettingKind::LProp: return "lprop";
    case SettingKind::PairComp: return "paircomp";
    case SettingKind::PairSim: return "pairsim";
    case SettingKind::SimConf: return "simconf";
    case SettingKind::ConfDiff: return "confdiff";
    case SettingKind::PosUnl: return "posunl";
    case SettingKind::UnlUnl: return "unlunl";
    case SettingKind::PartialL: return "partiall";
    case SettingKind::Noisy: return "noisy";
    case SettingKind::CompL: return "compl";
    case SettingKind::SemiSup: return "semisup";
    case SettingKind::CrowdL: return "crowdl";
    case SettingKind::SimUnl: return "simunl";
  }
  return "unknown";
}

SettingKind setting_kind_from_name(const std::string& name) {
  static const std::map<std::string, SettingKind> table = {
      {"multiins", SettingKind::MultiIns}, {"lprop", SettingKind::LProp},
      {"paircomp", SettingKind::PairComp}, {"pairsim", SettingKind::PairSim},
      {"simconf", SettingKind::SimConf},   {"confdiff", SettingKind::ConfDiff},
      {"posunl", SettingKind::PosUnl},     {"unlunl", SettingKind::UnlUnl},
      {"partiall", SettingKind::PartialL}, {"noisy", SettingKind::Noisy},
      {"compl", SettingKind::CompL},       {"semisup", SettingKind::SemiSup},
      {"crowdl", SettingKind::CrowdL},     {"simunl", SettingKind::SimUnl},
  };
  auto it = table.find(name);
  if (it == table.end())
    throw Error(ErrorCode::BadParameter, "unknown setting '" + name + "'");
  return it->second;
}

namespace {

bool is_count_chain(SettingKind k) {
  return k == SettingKind::LProp || k == SettingKind::PosUnl ||
         k == SettingKind::UnlUnl;
}

bool is_pairwise(SettingKind k) {
  return k == SettingKind::PairComp || k == SettingKind::PairSim ||
         k == SettingKind::SimConf || k == SettingKind::ConfDiff;
}

bool is_category_chain(SettingKind k) {
  return k == SettingKind::PartialL || k == SettingKind::CompL ||
         k == SettingKind::Noisy;
}

const char* meaning_for(SettingKind k) {
  switch (k) {
    case SettingKind::MultiIns:
    case SettingKind::SemiSup:
      return "whether a positive label appeared among the first k instances";
    case SettingKind::LProp:
    case SettingKind::PosUnl:
    case SettingKind::UnlUnl:
      return "number of positive labels among the first k instances";
    case SettingKind::PairComp:
    case SettingKind::PairSim:
    case SettingKind::SimConf:
    case SettingKind::ConfDiff:
      return "label of the first instance, carried so the final state can "
             "be compared against it";
    case SettingKind::PartialL:
    case SettingKind::CompL:
    case SettingKind::Noisy:
      return "whether the true category appeared among the first k "
             "categories";
    default:
      return "";
  }
}

// Shared evidence-kind rejection with a uniform message.
[[noreturn]] void bad_evidence(SettingKind kind, const WeakEvidence& ev) {
  throw Error(ErrorCode::EvidenceKindMismatch,
              std::string(evidence_kind_name(ev)) + " evidence not valid for " +
                  setting_kind_name(kind));
}

}  // namespace

SettingDescriptor make_setting(SettingKind kind,
                               const std::map<std::string, double>& params) {
  if (kind == SettingKind::CrowdL || kind == SettingKind::SimUnl)
    throw Error(ErrorCode::UnsupportedSetting,
                std::string(setting_kind_name(kind)) +
                    " has no chain construction");
  SettingDescriptor d;
  d.kind_ = kind;
  d.state_meaning_ = meaning_for(kind);
  for (const auto& [key, value] : params) {
    if (key == "prior") {
      if (value < 0.0 || value > 1.0)
        throw Error(ErrorCode::BadParameter, "prior outside [0,1]");
      d.prior_ = value;
    } else if (key == "prior2") {
      if (value < 0.0 || value > 1.0)
        throw Error(ErrorCode::BadParameter, "prior2 outside [0,1]");
      d.prior2_ = value;
    } else {
      throw Error(ErrorCode::BadParameter, "unknown parameter '" + key + "'");
    }
  }
  return d;
}

int SettingDescriptor::w_card(int K) const {
  if (is_count_chain(kind_)) return K + 1;
  return 2;
}

bool SettingDescriptor::pairwise() const { return is_pairwise(kind_); }

bool SettingDescriptor::soft_pair() const {
  return kind_ == SettingKind::SimConf || kind_ == SettingKind::ConfDiff;
}

bool SettingDescriptor::category_chain() const {
  return is_category_chain(kind_);
}

int SettingDescriptor::init_z(int y_first) const {
  // Pairwise chains carry the first label itself; everything else starts
  // the accumulator at zero and applies the ordinary update.
  if (pairwise()) return y_first;
  return step(0, y_first);
}

int SettingDescriptor::step(int z, int y_next) const {
  switch (kind_) {
    case SettingKind::MultiIns:
    case SettingKind::SemiSup:
    case SettingKind::PartialL:
    case SettingKind::CompL:
    case SettingKind::Noisy:
      return z | y_next;
    case SettingKind::LProp:
    case SettingKind::PosUnl:
    case SettingKind::UnlUnl:
      return z + y_next;
    case SettingKind::PairComp:
    case SettingKind::PairSim:
    case SettingKind::SimConf:
    case SettingKind::ConfDiff:
      return z;  // first label is carried unchanged
    default:
      throw Error(ErrorCode::UnsupportedSetting, setting_kind_name(kind_));
  }
}

double SettingDescriptor::emit(int z, int y_next, double p) const {
  // Category chains are absorbing: once the true category appeared
  // (z == 1) every later category is negative with probability one. This
  // is what makes the chain reproduce the one-hot closed form exactly.
  if (category_chain() && z == 1) return y_next == 1 ? 0.0 : 1.0;
  return y_next == 1 ? p : 1.0 - p;
}

Eigen::VectorXd SettingDescriptor::terminal_factor(const WeakEvidence& ev,
                                                   const StateSpace& space,
                                                   int K) const {
  Eigen::VectorXd g;
  terminal_factor(ev, space, K, g);
  return g;
}

void SettingDescriptor::terminal_factor(const WeakEvidence& ev,
                                        const StateSpace& space, int K,
                                        Eigen::VectorXd& g) const {
  g.resize(space.size());
  g.setZero();
  auto fill = [&](auto&& fn) {
    for (int s = 0; s < space.size(); ++s)
      g[s] = fn(space.y_of(s), space.z_of(s));
  };

  switch (kind_) {
    case SettingKind::MultiIns: {
      const auto* e = std::get_if<ExactEvidence>(&ev);
      if (!e || !e->scalar()) bad_evidence(kind_, ev);
      const int w = e->value();
      if (w != 0 && w != 1)
        throw Error(ErrorCode::EvidenceKindMismatch,
                    "multiins weak label must be 0 or 1");
      fill([&](int, int z) { return z == w ? 1.0 : 0.0; });
      return;
    }
    case SettingKind::LProp:
    case SettingKind::PosUnl:
    case SettingKind::UnlUnl: {
      if (const auto* e = std::get_if<ExactEvidence>(&ev)) {
        if (!e->scalar()) bad_evidence(kind_, ev);
        if (kind_ == SettingKind::UnlUnl) bad_evidence(kind_, ev);
        const int w = e->value();
        if (w < 0 || w > K)
          throw Error(ErrorCode::EvidenceKindMismatch,
                      "count label exceeds bag size");
        fill([&](int, int z) { return z == w ? 1.0 : 0.0; });
        return;
      }
      if (const auto* cd = std::get_if<CountDistributionEvidence>(&ev)) {
        if (static_cast<int>(cd->dist.size()) != K + 1)
          throw Error(ErrorCode::EvidenceKindMismatch,
                      "count distribution length must be K+1");
        fill([&](int, int z) {
          return z <= K ? cd->dist[static_cast<size_t>(z)] : 0.0;
        });
        return;
      }
      if (std::holds_alternative<UnlabeledEvidence>(ev) &&
          kind_ == SettingKind::PosUnl) {
        Eigen::VectorXd pmf = binomial_pmf(K, prior_);
        fill([&](int, int z) { return z <= K ? pmf[z] : 0.0; });
        return;
      }
      bad_evidence(kind_, ev);
    }
    case SettingKind::PairComp: {
      const auto* e = std::get_if<ExactEvidence>(&ev);
      if (!e || !e->scalar()) bad_evidence(kind_, ev);
      const int w = e->value();
      if (w != 0 && w != 1)
        throw Error(ErrorCode::EvidenceKindMismatch,
                    "paircomp weak label must be 0 or 1");
      // z holds the first label, y the second; w = 1 iff first >= second.
      fill([&](int y, int z) { return ((z >= y) ? 1 : 0) == w ? 1.0 : 0.0; });
      return;
    }
    case SettingKind::PairSim: {
      const auto* e = std::get_if<ExactEvidence>(&ev);
      if (!e || !e->scalar()) bad_evidence(kind_, ev);
      const int w = e->value();
      if (w != 0 && w != 1)
        throw Error(ErrorCode::EvidenceKindMismatch,
                    "pairsim weak label must be 0 or 1");
      fill([&](int y, int z) { return ((y == z) ? 1 : 0) == w ? 1.0 : 0.0; });
      return;
    }
    case SettingKind::SimConf: {
      const auto* e = std::get_if<SoftPairEvidence>(&ev);
      if (!e) bad_evidence(kind_, ev);
      const double s = e->score;
      fill([&](int y, int z) { return y == z ? s : 1.0 - s; });
      return;
    }
    case SettingKind::ConfDiff: {
      const auto* e = std::get_if<SoftPairEvidence>(&ev);
      if (!e) bad_evidence(kind_, ev);
      const double s = e->score;
      // Pair (first, second) = (z, y). The weights integrate to one and
      // reproduce E[confidence difference] = s.
      fill([&](int y, int z) {
        if (z == 0 && y == 1) return std::max(s, 0.0);
        if (z == 1 && y == 0) return std::max(-s, 0.0);
        return (1.0 - std::abs(s)) / 2.0;
      });
      return;
    }
    case SettingKind::SemiSup: {
      // Observed labels are consumed by clamping the per-node inputs, so
      // the terminal is flat for both labeled and unlabeled bags.
      if (std::holds_alternative<ExactEvidence>(ev) ||
          std::holds_alternative<UnlabeledEvidence>(ev)) {
        g.setOnes();
        return;
      }
      bad_evidence(kind_, ev);
    }
    case SettingKind::PartialL:
    case SettingKind::CompL:
    case SettingKind::Noisy:
      // Category chains fold their evidence into per-category masses; the
      // chain terminal only requires that the label was placed.
      fill([&](int, int z) { return z == 1 ? 1.0 : 0.0; });
      return;
    default:
      throw Error(ErrorCode::UnsupportedSetting, setting_kind_name(kind_));
  }
}

int SettingDescriptor::aggregate_scalar(const std::vector<int>& labels) const {
  switch (kind_) {
    case SettingKind::MultiIns:
    case SettingKind::SemiSup:
      return std::any_of(labels.begin(), labels.end(),
                         [](int y) { return y != 0; })
                 ? 1
                 : 0;
    case SettingKind::LProp:
    case SettingKind::PosUnl:
    case SettingKind::UnlUnl:
      return std::accumulate(labels.begin(), labels.end(), 0);
    case SettingKind::PairComp:
      return labels.at(0) >= labels.at(1) ? 1 : 0;
    case SettingKind::PairSim:
    case SettingKind::SimConf:
      return labels.at(0) == labels.at(1) ? 1 : 0;
    case SettingKind::ConfDiff:
      return labels.at(1) - labels.at(0);
    default:
      throw Error(ErrorCode::SettingMismatch,
                  std::string("no deterministic aggregate for ") +
                      setting_kind_name(kind_));
  }
}

StateSpace build_state_space(const SettingDescriptor& setting, int K) {
  if (K < 1) throw Error(ErrorCode::BagSizeMismatch, "K must be >= 1");
  return StateSpace{setting.w_card(K)};
}

namespace {

void validate_evidence(const SettingDescriptor& setting, const Bag& bag,
                       const WeakEvidence& ev) {
  const SettingKind kind = setting.kind();
  switch (kind) {
    case SettingKind::MultiIns:
    case SettingKind::PairComp:
    case SettingKind::PairSim: {
      const auto* e = std::get_if<ExactEvidence>(&ev);
      if (!e || !e->scalar() || (e->value() != 0 && e->value() != 1))
        bad_evidence(kind, ev);
      return;
    }
    case SettingKind::LProp: {
      const auto* e = std::get_if<ExactEvidence>(&ev);
      if (!e || !e->scalar()) bad_evidence(kind, ev);
      if (e->value() < 0 || e->value() > bag.K)
        throw Error(ErrorCode::EvidenceKindMismatch,
                    "count label " + std::to_string(e->value()) +
                        " exceeds bag size " + std::to_string(bag.K));
      return;
    }
    case SettingKind::SimConf: {
      const auto* e = std::get_if<SoftPairEvidence>(&ev);
      if (!e) bad_evidence(kind, ev);
      if (e->score < 0.0 || e->score > 1.0)
        throw Error(ErrorCode::EvidenceKindMismatch,
                    "simconf score outside [0,1]");
      return;
    }
    case SettingKind::ConfDiff: {
      const auto* e = std::get_if<SoftPairEvidence>(&ev);
      if (!e) bad_evidence(kind, ev);
      if (e->score < -1.0 || e->score > 1.0)
        throw Error(ErrorCode::EvidenceKindMismatch,
                    "confdiff score outside [-1,1]");
      return;
    }
    case SettingKind::PosUnl:
    case SettingKind::UnlUnl: {
      if (const auto* e = std::get_if<ExactEvidence>(&ev)) {
        if (kind == SettingKind::UnlUnl) bad_evidence(kind, ev);
        if (!e->scalar() || e->value() < 0 || e->value() > bag.K)
          bad_evidence(kind, ev);
        return;
      }
      if (const auto* cd = std::get_if<CountDistributionEvidence>(&ev)) {
        if (static_cast<int>(cd->dist.size()) != bag.K + 1)
          throw Error(ErrorCode::EvidenceKindMismatch,
                      "count distribution length must be K+1");
        double sum = 0.0;
        for (double v : cd->dist) {
          if (v < 0.0)
            throw Error(ErrorCode::EvidenceKindMismatch,
                        "count distribution has a negative entry");
          sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-12)
          throw Error(ErrorCode::EvidenceKindMismatch,
                      "count distribution does not sum to 1");
        return;
      }
      if (std::holds_alternative<UnlabeledEvidence>(ev) &&
          kind == SettingKind::PosUnl)
        return;
      bad_evidence(kind, ev);
    }
    case SettingKind::PartialL:
    case SettingKind::CompL: {
      const auto* cs = std::get_if<CandidateSetEvidence>(&ev);
      if (!cs) bad_evidence(kind, ev);
      if (cs->classes.empty())
        throw Error(ErrorCode::EvidenceKindMismatch, "empty candidate set");
      const int C = static_cast<int>(bag.probs.cols());
      for (int c : cs->classes)
        if (c < 0 || c >= C)
          throw Error(ErrorCode::EvidenceKindMismatch,
                      "candidate class index out of range");
      return;
    }
    case SettingKind::Noisy: {
      const auto* e = std::get_if<NoisyClassEvidence>(&ev);
      if (!e) bad_evidence(kind, ev);
      const int C = static_cast<int>(bag.probs.cols());
      if (e->label < 0 || e->label >= C)
        throw Error(ErrorCode::EvidenceKindMismatch,
                    "observed class index out of range");
      return;
    }
    case SettingKind::SemiSup: {
      if (const auto* e = std::get_if<ExactEvidence>(&ev)) {
        if (static_cast<int>(e->values.size()) != bag.K)
          throw Error(ErrorCode::EvidenceKindMismatch,
                      "semisup labels must cover all K instances");
        for (int b : e->values)
          if (b != 0 && b != 1)
            throw Error(ErrorCode::EvidenceKindMismatch,
                        "semisup label bits must be 0 or 1");
        return;
      }
      if (std::holds_alternative<UnlabeledEvidence>(ev)) return;
      bad_evidence(kind, ev);
    }
    default:
      throw Error(ErrorCode::UnsupportedSetting, setting_kind_name(kind));
  }
}

}  // namespace

void validate_bag(const SettingDescriptor& setting, const Bag& bag) {
  if (bag.K < 1) throw Error(ErrorCode::BagSizeMismatch, "K must be >= 1");
  if (setting.pairwise() && bag.K != 2)
    throw Error(ErrorCode::BagSizeMismatch,
                std::string(setting_kind_name(setting.kind())) +
                    " requires K = 2, got " + std::to_string(bag.K));
  if (setting.category_chain() && bag.K != 1)
    throw Error(ErrorCode::BagSizeMismatch,
                std::string(setting_kind_name(setting.kind())) +
                    " bags hold a single instance");

  if (!bag.has_probs())
    throw Error(ErrorCode::ShapeMismatch, "bag has no probability matrix");
  if (static_cast<int>(bag.probs.rows()) != bag.K)
    throw Error(ErrorCode::ShapeMismatch, "probs row count differs from K");
  for (int k = 0; k < bag.probs.rows(); ++k)
    for (int c = 0; c < bag.probs.cols(); ++c) {
      const double p = bag.probs(k, c);
      if (!(p >= 0.0 && p <= 1.0))
        throw Error(ErrorCode::BadProbability,
                    "probs(" + std::to_string(k) + "," + std::to_string(c) +
                        ") = " + std::to_string(p));
    }

  const int C = static_cast<int>(bag.probs.cols());
  const size_t expected = setting.joint_evidence() ? 1u : static_cast<size_t>(C);
  if (bag.evidence.size() != expected)
    throw Error(ErrorCode::EvidenceKindMismatch,
                "expected " + std::to_string(expected) +
                    " evidence records, got " +
                    std::to_string(bag.evidence.size()));
  for (const auto& ev : bag.evidence) validate_evidence(setting, bag, ev);
}

Eigen::VectorXd binomial_pmf(int K, double p) {
  Eigen::VectorXd pmf(K + 1);
  // Stable in log space for large K.
  const double logp = std::log(std::max(p, 1e-300));
  const double logq = std::log(std::max(1.0 - p, 1e-300));
  double log_choose = 0.0;
  for (int z = 0; z <= K; ++z) {
    if (z > 0) log_choose += std::log(double(K - z + 1)) - std::log(double(z));
    if (p == 0.0) {
      pmf[z] = z == 0 ? 1.0 : 0.0;
    } else if (p == 1.0) {
      pmf[z] = z == K ? 1.0 : 0.0;
    } else {
      pmf[z] = std::exp(log_choose + z * logp + (K - z) * logq);
    }
  }
  return pmf;
}

}  // namespace wsinfer
