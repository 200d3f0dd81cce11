#ifndef WSINFER_TEST_HELPERS_HPP
#define WSINFER_TEST_HELPERS_HPP

#include <random>
#include <vector>

#include "wsinfer/bag.hpp"
#include "wsinfer/setting.hpp"

namespace wsinfer::test {

inline Bag make_bag(std::vector<std::vector<double>> probs,
                    std::vector<WeakEvidence> evidence,
                    std::string id = "t") {
  Bag bag;
  bag.id = std::move(id);
  bag.K = static_cast<int>(probs.size());
  const int C = static_cast<int>(probs.front().size());
  bag.probs.resize(bag.K, C);
  for (int k = 0; k < bag.K; ++k)
    for (int c = 0; c < C; ++c)
      bag.probs(k, c) = probs[static_cast<size_t>(k)][static_cast<size_t>(c)];
  bag.evidence = std::move(evidence);
  return bag;
}

// Random bag with evidence sampled from the generative labels, so the
// weak label is always feasible.
inline Bag random_bag(const SettingDescriptor& setting, std::mt19937_64& rng,
                      int max_K = 10, int C = 1) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> ksize(1, max_K);

  Bag bag;
  bag.id = "rand";
  bag.K = setting.pairwise() ? 2 : (setting.category_chain() ? 1 : ksize(rng));
  const int cols = setting.category_chain() ? std::max(C, 2) : C;
  bag.probs.resize(bag.K, cols);
  Eigen::MatrixXi labels(bag.K, cols);
  for (int k = 0; k < bag.K; ++k)
    for (int c = 0; c < cols; ++c) {
      bag.probs(k, c) = 0.02 + 0.96 * unit(rng);
      labels(k, c) = unit(rng) < bag.probs(k, c) ? 1 : 0;
    }

  auto column = [&](int c) {
    std::vector<int> bits(static_cast<size_t>(bag.K));
    for (int k = 0; k < bag.K; ++k) bits[static_cast<size_t>(k)] = labels(k, c);
    return bits;
  };

  switch (setting.kind()) {
    case SettingKind::MultiIns:
    case SettingKind::LProp:
    case SettingKind::PairComp:
    case SettingKind::PairSim:
      for (int c = 0; c < cols; ++c)
        bag.evidence.push_back(
            ExactEvidence{{setting.aggregate_scalar(column(c))}});
      break;
    case SettingKind::SimConf:
      for (int c = 0; c < cols; ++c)
        bag.evidence.push_back(SoftPairEvidence{unit(rng)});
      break;
    case SettingKind::ConfDiff:
      for (int c = 0; c < cols; ++c)
        bag.evidence.push_back(SoftPairEvidence{2.0 * unit(rng) - 1.0});
      break;
    case SettingKind::PosUnl:
    case SettingKind::UnlUnl:
      for (int c = 0; c < cols; ++c) {
        CountDistributionEvidence cd;
        double sum = 0.0;
        for (int z = 0; z <= bag.K; ++z) {
          cd.dist.push_back(0.05 + unit(rng));
          sum += cd.dist.back();
        }
        for (auto& v : cd.dist) v /= sum;
        // Normalize exactly so validation's 1e-12 gate holds.
        double acc = 0.0;
        for (size_t i = 0; i + 1 < cd.dist.size(); ++i) acc += cd.dist[i];
        cd.dist.back() = 1.0 - acc;
        bag.evidence.push_back(cd);
      }
      break;
    case SettingKind::SemiSup:
      for (int c = 0; c < cols; ++c) {
        if (unit(rng) < 0.5) {
          bag.evidence.push_back(ExactEvidence{column(c)});
        } else {
          bag.evidence.push_back(UnlabeledEvidence{});
        }
      }
      break;
    case SettingKind::PartialL: {
      int truth = 0;
      labels.row(0).maxCoeff(&truth);
      if (labels.row(0).sum() == 0) truth = 0;
      CandidateSetEvidence cs;
      for (int c = 0; c < cols; ++c)
        if (c == truth || unit(rng) < 0.4) cs.classes.push_back(c);
      bag.evidence = {cs};
      break;
    }
    case SettingKind::CompL: {
      int truth = 0;
      labels.row(0).maxCoeff(&truth);
      if (labels.row(0).sum() == 0) truth = 0;
      std::uniform_int_distribution<int> pick(0, cols - 2);
      int wrong = pick(rng);
      if (wrong >= truth) ++wrong;
      CandidateSetEvidence cs;
      for (int c = 0; c < cols; ++c)
        if (c != wrong) cs.classes.push_back(c);
      bag.evidence = {cs};
      break;
    }
    case SettingKind::Noisy: {
      std::uniform_int_distribution<int> pick(0, cols - 1);
      bag.evidence = {NoisyClassEvidence{pick(rng)}};
      break;
    }
    default:
      break;
  }
  return bag;
}

}  // namespace wsinfer::test

#endif
