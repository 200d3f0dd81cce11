#include "wsinfer/synth.hpp"

#include <algorithm>
#include <cmath>

namespace wsinfer {
namespace synth {

namespace {

double clamp_prob(double p) { return std::clamp(p, 1e-9, 1.0 - 1e-9); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  return std::log(clamp_prob(p)) - std::log(1.0 - clamp_prob(p));
}

int draw_bag_size(const SettingDescriptor& setting, const GenSpec& spec,
                  std::mt19937_64& rng) {
  if (setting.pairwise()) return 2;
  if (setting.category_chain()) return 1;
  std::normal_distribution<double> n(spec.instances_mean, spec.instances_std);
  return std::max(1, static_cast<int>(std::lround(n(rng))));
}

void check_dims(const GenSpec& spec) {
  if (spec.n_bags < 1)
    throw Error(ErrorCode::BadParameter, "n_bags must be >= 1");
  if (spec.instances_mean < 1.0)
    throw Error(ErrorCode::BadParameter, "instances_mean must be >= 1");
  if (spec.feature_dim < spec.n_classes)
    throw Error(ErrorCode::BadParameter,
                "feature_dim must be at least n_classes for the axis-aligned "
                "mixture");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over (seed, index) so bag streams never overlap.
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<WeakEvidence> aggregate(const SettingDescriptor& setting,
                                    const Eigen::MatrixXi& labels,
                                    const GenSpec& spec,
                                    const ClassTransitionMatrix* t_class,
                                    std::mt19937_64& rng) {
  const int K = static_cast<int>(labels.rows());
  const int C = static_cast<int>(labels.cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, spec.soft_noise_sigma);

  auto column = [&](int c) {
    std::vector<int> bits(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) bits[static_cast<size_t>(k)] = labels(k, c);
    return bits;
  };

  switch (setting.kind()) {
    case SettingKind::MultiIns:
    case SettingKind::LProp:
    case SettingKind::PairComp:
    case SettingKind::PairSim: {
      std::vector<WeakEvidence> out;
      for (int c = 0; c < C; ++c)
        out.push_back(ExactEvidence{{setting.aggregate_scalar(column(c))}});
      return out;
    }
    case SettingKind::SimConf: {
      std::vector<WeakEvidence> out;
      for (int c = 0; c < C; ++c) {
        const double sim = labels(0, c) == labels(1, c) ? 1.0 : 0.0;
        out.push_back(
            SoftPairEvidence{std::clamp(sim + jitter(rng), 0.0, 1.0)});
      }
      return out;
    }
    case SettingKind::ConfDiff: {
      std::vector<WeakEvidence> out;
      for (int c = 0; c < C; ++c) {
        const double diff = static_cast<double>(labels(1, c) - labels(0, c));
        out.push_back(
            SoftPairEvidence{std::clamp(diff + jitter(rng), -1.0, 1.0)});
      }
      return out;
    }
    case SettingKind::SemiSup: {
      std::vector<WeakEvidence> out;
      const bool labeled = unit(rng) < spec.labeled_fraction;
      for (int c = 0; c < C; ++c) {
        if (labeled)
          out.push_back(ExactEvidence{column(c)});
        else
          out.push_back(UnlabeledEvidence{});
      }
      return out;
    }
    case SettingKind::PartialL: {
      int truth = 0;
      labels.row(0).maxCoeff(&truth);
      CandidateSetEvidence cs;
      for (int c = 0; c < C; ++c)
        if (c == truth || unit(rng) < spec.partial_ratio)
          cs.classes.push_back(c);
      return {cs};
    }
    case SettingKind::CompL: {
      int truth = 0;
      labels.row(0).maxCoeff(&truth);
      if (C < 2)
        throw Error(ErrorCode::BadParameter,
                    "complementary labels need at least two classes");
      std::uniform_int_distribution<int> pick(0, C - 2);
      int wrong = pick(rng);
      if (wrong >= truth) ++wrong;
      CandidateSetEvidence cs;
      for (int c = 0; c < C; ++c)
        if (c != wrong) cs.classes.push_back(c);
      return {cs};
    }
    case SettingKind::Noisy: {
      int truth = 0;
      labels.row(0).maxCoeff(&truth);
      int observed = truth;
      if (t_class) {
        if (t_class->entries.rows() != C)
          throw Error(ErrorCode::DimensionMismatch,
                      "class transition matrix must be C x C");
        std::vector<double> row(static_cast<size_t>(C));
        for (int c = 0; c < C; ++c) row[static_cast<size_t>(c)] =
            t_class->entries(truth, c);
        std::discrete_distribution<int> flip(row.begin(), row.end());
        observed = flip(rng);
      }
      return {NoisyClassEvidence{observed}};
    }
    default:
      throw Error(ErrorCode::SettingMismatch,
                  std::string(setting_kind_name(setting.kind())) +
                      " evidence is constructed at the dataset level");
  }
}

namespace {

// Axis-aligned mixture: positive classes shift the feature along their
// own axis; the calibrated posterior is a sigmoid (per-class settings) or
// softmax (single-label settings) of the linear discriminant.
struct InstanceModel {
  const GenSpec& spec;
  bool single_label;

  Eigen::VectorXd sample_features(const Eigen::VectorXi& bits,
                                  std::mt19937_64& rng) const {
    std::normal_distribution<double> noise(0.0, 1.0);
    Eigen::VectorXd x(spec.feature_dim);
    for (int d = 0; d < spec.feature_dim; ++d) x[d] = noise(rng);
    for (int c = 0; c < spec.n_classes; ++c)
      if (bits[c]) x[c] += spec.class_separation;
    return x;
  }

  Eigen::VectorXd posterior(const Eigen::VectorXd& x) const {
    const double s = spec.class_separation;
    Eigen::VectorXd p(spec.n_classes);
    if (single_label) {
      Eigen::VectorXd score(spec.n_classes);
      for (int c = 0; c < spec.n_classes; ++c)
        score[c] = s * x[c] - s * s / 2.0;
      const double m = score.maxCoeff();
      const Eigen::VectorXd e = (score.array() - m).exp();
      p = e / e.sum();
      for (int c = 0; c < spec.n_classes; ++c) p[c] = clamp_prob(p[c]);
      return p;
    }
    for (int c = 0; c < spec.n_classes; ++c)
      p[c] = clamp_prob(
          sigmoid(s * x[c] - s * s / 2.0 + logit(spec.positive_prior)));
    return p;
  }
};

}  // namespace

Dataset gen_dataset(const SettingDescriptor& setting, const GenSpec& spec,
                    const ClassTransitionMatrix* t_class) {
  check_dims(spec);
  const bool single_label = setting.category_chain();
  const InstanceModel model{spec, single_label};
  const int C = spec.n_classes;

  Dataset data;
  data.bags.reserve(static_cast<size_t>(spec.n_bags));
  data.truth.reserve(static_cast<size_t>(spec.n_bags));

  const int n_labeled_posunl = setting.kind() == SettingKind::PosUnl
                                   ? static_cast<int>(std::lround(
                                         spec.labeled_fraction * spec.n_bags))
                                   : 0;

  for (int b = 0; b < spec.n_bags; ++b) {
    std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(b)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Bag bag;
    bag.id = "bag-" + std::to_string(b);

    const bool posunl_labeled =
        setting.kind() == SettingKind::PosUnl && b < n_labeled_posunl;
    bag.K = posunl_labeled ? 1 : draw_bag_size(setting, spec, rng);

    Eigen::MatrixXi labels(bag.K, C);
    if (single_label) {
      std::uniform_int_distribution<int> pick(0, C - 1);
      labels.setZero();
      labels(0, pick(rng)) = 1;
    } else {
      double prior = spec.positive_prior;
      if (setting.kind() == SettingKind::UnlUnl && b >= spec.n_bags / 2)
        prior = spec.prior2;
      for (int k = 0; k < bag.K; ++k)
        for (int c = 0; c < C; ++c)
          labels(k, c) = posunl_labeled ? 1 : (unit(rng) < prior ? 1 : 0);
    }

    bag.features.resize(bag.K, spec.feature_dim);
    bag.probs.resize(bag.K, C);
    for (int k = 0; k < bag.K; ++k) {
      const Eigen::VectorXd x = model.sample_features(labels.row(k), rng);
      bag.features.row(k) = x.transpose();
      bag.probs.row(k) = model.posterior(x).transpose();
    }

    switch (setting.kind()) {
      case SettingKind::PosUnl:
        if (posunl_labeled)
          bag.evidence.assign(static_cast<size_t>(C), ExactEvidence{{1}});
        else
          bag.evidence.assign(static_cast<size_t>(C), UnlabeledEvidence{});
        break;
      case SettingKind::UnlUnl: {
        const double prior =
            b < spec.n_bags / 2 ? spec.positive_prior : spec.prior2;
        Eigen::VectorXd pmf = binomial_pmf(bag.K, prior);
        pmf /= pmf.sum();
        CountDistributionEvidence cd;
        cd.dist.assign(pmf.data(), pmf.data() + pmf.size());
        bag.evidence.assign(static_cast<size_t>(C), cd);
        break;
      }
      default:
        bag.evidence = aggregate(setting, labels, spec, t_class, rng);
        break;
    }

    data.bags.push_back(std::move(bag));
    data.truth.push_back(std::move(labels));
  }
  return data;
}

std::vector<int> corrupt_labels(const std::vector<int>& labels,
                                const ClassTransitionMatrix& t_class,
                                std::uint64_t seed) {
  const int n = static_cast<int>(t_class.entries.rows());
  std::mt19937_64 rng(seed);
  std::vector<int> out;
  out.reserve(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    const int label = labels[i];
    if (label < 0 || label >= n)
      throw Error(ErrorCode::DimensionMismatch,
                  "label index outside the transition matrix");
    std::vector<double> row(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) row[static_cast<size_t>(c)] =
        t_class.entries(label, c);
    std::discrete_distribution<int> flip(row.begin(), row.end());
    out.push_back(flip(rng));
  }
  return out;
}

}  // namespace synth
}  // namespace wsinfer
