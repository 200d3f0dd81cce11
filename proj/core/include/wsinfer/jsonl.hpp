#ifndef WSINFER_JSONL_HPP
#define WSINFER_JSONL_HPP

#include <string>

#include "wsinfer/chain.hpp"
#include "wsinfer/setting.hpp"

namespace wsinfer {
namespace jsonl {

// One bag per line:
//   {"id": "...", "setting": "...", "probs": [[...]], "features": [[...]],
//    "weak": <setting-specific>}
// Exactly one of probs/features may be omitted. weak shapes:
//   multiins/lprop/paircomp/pairsim  int, or array of C ints
//   simconf/confdiff                 real, or array of C reals
//   posunl                           int | null | array of K+1 reals,
//                                    or an array of C such entries
//   unlunl                           array of K+1 reals (per class)
//   semisup                          null, array of K bits (C = 1), or
//                                    array of C entries (null | K bits)
//   partiall                         array of candidate class indices
//   compl                            the complementary class index
//   noisy                            the observed class index
Bag parse_bag(const std::string& line, const SettingDescriptor& setting);

std::string bag_to_json(const Bag& bag, const SettingDescriptor& setting);

// {"id": "...", "posterior": [[...]], "log_likelihood": [...]}
std::string posterior_to_json(const std::string& id,
                              const LatentPosterior& posterior);

std::string truth_to_json(const std::string& id,
                          const Eigen::MatrixXi& labels);

}  // namespace jsonl
}  // namespace wsinfer

#endif
