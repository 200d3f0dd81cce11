#include "wsinfer/oracle.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace wsinfer {
namespace oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Streaming log-sum-exp.
struct LogAccumulator {
  double max_log = kNegInf;
  double sum = 0.0;

  void add(double log_term) {
    if (log_term == kNegInf) return;
    if (log_term <= max_log) {
      sum += std::exp(log_term - max_log);
    } else {
      sum = sum * std::exp(max_log - log_term) + 1.0;
      max_log = log_term;
    }
  }
  double value() const {
    return sum > 0.0 ? max_log + std::log(sum) : kNegInf;
  }
};

// Weak-label weight of one bit pattern, re-derived from the definition of
// each setting rather than from the descriptor's terminal factor.
double config_weight(const SettingDescriptor& setting, const WeakEvidence& ev,
                     unsigned mask, int K) {
  const int count = std::popcount(mask);
  switch (setting.kind()) {
    case SettingKind::MultiIns: {
      const int w = std::get<ExactEvidence>(ev).value();
      return (count > 0 ? 1 : 0) == w ? 1.0 : 0.0;
    }
    case SettingKind::LProp: {
      const int w = std::get<ExactEvidence>(ev).value();
      return count == w ? 1.0 : 0.0;
    }
    case SettingKind::PairComp: {
      const int first = mask & 1u, second = (mask >> 1) & 1u;
      const int w = std::get<ExactEvidence>(ev).value();
      return (first >= second ? 1 : 0) == w ? 1.0 : 0.0;
    }
    case SettingKind::PairSim: {
      const int first = mask & 1u, second = (mask >> 1) & 1u;
      const int w = std::get<ExactEvidence>(ev).value();
      return (first == second ? 1 : 0) == w ? 1.0 : 0.0;
    }
    case SettingKind::SimConf: {
      const double s = std::get<SoftPairEvidence>(ev).score;
      const int first = mask & 1u, second = (mask >> 1) & 1u;
      return first == second ? s : 1.0 - s;
    }
    case SettingKind::ConfDiff: {
      const double s = std::get<SoftPairEvidence>(ev).score;
      const int first = mask & 1u, second = (mask >> 1) & 1u;
      if (first == 0 && second == 1) return std::max(s, 0.0);
      if (first == 1 && second == 0) return std::max(-s, 0.0);
      return (1.0 - std::abs(s)) / 2.0;
    }
    case SettingKind::PosUnl:
    case SettingKind::UnlUnl: {
      if (const auto* e = std::get_if<ExactEvidence>(&ev))
        return count == e->value() ? 1.0 : 0.0;
      if (const auto* cd = std::get_if<CountDistributionEvidence>(&ev))
        return cd->dist[static_cast<size_t>(count)];
      // Unlabeled PosUnl: Binomial(K, prior) over the positive count.
      return binomial_pmf(K, setting.prior())[count];
    }
    case SettingKind::SemiSup: {
      if (const auto* e = std::get_if<ExactEvidence>(&ev)) {
        for (int k = 0; k < K; ++k)
          if (((mask >> k) & 1u) != static_cast<unsigned>(e->values[static_cast<size_t>(k)]))
            return 0.0;
        return 1.0;
      }
      return 1.0;  // unlabeled
    }
    default:
      throw Error(ErrorCode::SettingMismatch,
                  "no enumeration rule for this setting");
  }
}

// Per-category weight u_c for the single-label settings.
Eigen::VectorXd category_weights(const WeakEvidence& ev, int C,
                                 const Eigen::MatrixXd* t_class) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(C);
  if (const auto* cs = std::get_if<CandidateSetEvidence>(&ev)) {
    for (int c : cs->classes) u[c] = 1.0;
    return u;
  }
  if (const auto* nc = std::get_if<NoisyClassEvidence>(&ev)) {
    if (t_class) {
      if (t_class->rows() != C || t_class->cols() != C)
        throw Error(ErrorCode::DimensionMismatch,
                    "class transition matrix must be C x C");
      return t_class->col(nc->label);
    }
    u[nc->label] = 1.0;
    return u;
  }
  throw Error(ErrorCode::EvidenceKindMismatch,
              std::string(evidence_kind_name(ev)) +
                  " evidence has no category weight");
}

void check_cap(int K, int cap) {
  if (K > cap)
    throw Error(ErrorCode::CapExceeded,
                "K = " + std::to_string(K) + " exceeds the enumeration cap " +
                    std::to_string(cap));
}

}  // namespace

std::vector<SigmaItem> enumerate_sigma(const SettingDescriptor& setting,
                                       const WeakEvidence& w, int K, int cap) {
  check_cap(K, cap);
  std::vector<SigmaItem> out;

  if (setting.category_chain()) {
    // One-hot rows over categories; K here is the category count.
    Eigen::VectorXd u = category_weights(w, K, nullptr);
    for (int c = 0; c < K; ++c) {
      if (u[c] <= 0.0) continue;
      SigmaItem item;
      item.config.bits = Eigen::MatrixXi::Zero(1, K);
      item.config.bits(0, c) = 1;
      item.weight = u[c];
      out.push_back(std::move(item));
    }
    return out;
  }

  const bool hard = !setting.soft_pair() &&
                    !std::holds_alternative<CountDistributionEvidence>(w) &&
                    !std::holds_alternative<UnlabeledEvidence>(w);
  for (unsigned mask = 0; mask < (1u << K); ++mask) {
    const double weight = config_weight(setting, w, mask, K);
    if (hard && weight <= 0.0) continue;
    SigmaItem item;
    item.config.bits = Eigen::MatrixXi::Zero(K, 1);
    for (int k = 0; k < K; ++k)
      item.config.bits(k, 0) = static_cast<int>((mask >> k) & 1u);
    item.weight = weight;
    out.push_back(std::move(item));
  }
  return out;
}

LatentPosterior brute_posterior(const SettingDescriptor& setting,
                                const Bag& bag,
                                const Eigen::MatrixXd* class_transition,
                                int cap) {
  validate_bag(setting, bag);
  LatentPosterior post;

  if (setting.category_chain()) {
    const int C = static_cast<int>(bag.probs.cols());
    Eigen::VectorXd p = bag.probs.row(0).transpose();
    const double psum = p.sum();
    if (!(psum > 0.0))
      throw Error(ErrorCode::InfeasibleBag, "all class probabilities are zero");
    p /= psum;
    const Eigen::VectorXd u =
        category_weights(bag.evidence.front(), C, class_transition);
    const Eigen::VectorXd m = p.cwiseProduct(u);
    const double mass = m.sum();
    if (!(mass > 0.0))
      throw Error(ErrorCode::InfeasibleWeakLabel,
                  "weak label has zero probability");
    post.table = (m / mass).transpose();
    post.log_likelihood = Eigen::VectorXd::Constant(1, std::log(mass));
    return post;
  }

  check_cap(bag.K, cap);
  const int C = static_cast<int>(bag.probs.cols());
  post.table.resize(bag.K, C);
  post.log_likelihood.resize(C);
  for (int c = 0; c < C; ++c) {
    const WeakEvidence& ev = bag.evidence[static_cast<size_t>(c)];
    LogAccumulator denom;
    std::vector<LogAccumulator> numer(static_cast<size_t>(bag.K));
    for (unsigned mask = 0; mask < (1u << bag.K); ++mask) {
      const double terminal = config_weight(setting, ev, mask, bag.K);
      if (terminal <= 0.0) continue;
      double log_weight = std::log(terminal);
      bool zero = false;
      for (int k = 0; k < bag.K && !zero; ++k) {
        const double p = bag.probs(k, c);
        const double factor = ((mask >> k) & 1u) ? p : 1.0 - p;
        if (factor <= 0.0)
          zero = true;
        else
          log_weight += std::log(factor);
      }
      if (zero) continue;
      denom.add(log_weight);
      for (int k = 0; k < bag.K; ++k)
        if ((mask >> k) & 1u) numer[static_cast<size_t>(k)].add(log_weight);
    }
    const double log_denom = denom.value();
    if (log_denom == kNegInf)
      throw Error(ErrorCode::InfeasibleWeakLabel,
                  "weak label has zero probability");
    for (int k = 0; k < bag.K; ++k) {
      const double log_numer = numer[static_cast<size_t>(k)].value();
      post.table(k, c) =
          log_numer == kNegInf ? 0.0 : std::exp(log_numer - log_denom);
    }
    post.log_likelihood[c] = log_denom;
  }
  return post;
}

DiffReport compare(const LatentPosterior& engine_out,
                   const LatentPosterior& oracle_out) {
  if (engine_out.table.rows() != oracle_out.table.rows() ||
      engine_out.table.cols() != oracle_out.table.cols() ||
      engine_out.log_likelihood.size() != oracle_out.log_likelihood.size())
    throw Error(ErrorCode::ShapeMismatch,
                "posterior shapes differ between engine and oracle");
  DiffReport report;
  const Eigen::MatrixXd diff =
      (engine_out.table - oracle_out.table).cwiseAbs();
  report.max_abs = diff.size() > 0 ? diff.maxCoeff() : 0.0;
  report.mean_abs = diff.size() > 0 ? diff.mean() : 0.0;
  report.max_loglik_diff =
      (engine_out.log_likelihood - oracle_out.log_likelihood)
          .cwiseAbs()
          .maxCoeff();
  return report;
}

}  // namespace oracle
}  // namespace wsinfer
