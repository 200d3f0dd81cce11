#include "wsinfer/jsonl.hpp"

#include <json.hpp>

namespace wsinfer {
namespace jsonl {

using nlohmann::json;

namespace {

[[noreturn]] void parse_fail(const std::string& what) {
  throw Error(ErrorCode::ParseError, what);
}

Eigen::MatrixXd parse_matrix(const json& j, const char* name) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    parse_fail(std::string(name) + " must be an array of arrays");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      parse_fail(std::string(name) + " rows differ in length");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = row[static_cast<size_t>(c)];
      if (!v.is_number()) parse_fail(std::string(name) + " entries must be numbers");
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

bool is_int(const json& j) { return j.is_number_integer(); }

WeakEvidence parse_class_evidence(const json& j, SettingKind kind, int K) {
  switch (kind) {
    case SettingKind::MultiIns:
    case SettingKind::LProp:
    case SettingKind::PairComp:
    case SettingKind::PairSim:
      if (!is_int(j)) parse_fail("weak value must be an integer");
      return ExactEvidence{{j.get<int>()}};
    case SettingKind::SimConf:
    case SettingKind::ConfDiff:
      if (!j.is_number()) parse_fail("weak value must be a number");
      return SoftPairEvidence{j.get<double>()};
    case SettingKind::PosUnl:
    case SettingKind::UnlUnl: {
      if (j.is_null()) return UnlabeledEvidence{};
      if (is_int(j)) return ExactEvidence{{j.get<int>()}};
      if (j.is_array()) {
        CountDistributionEvidence cd;
        for (const auto& v : j) {
          if (!v.is_number()) parse_fail("count distribution entries must be numbers");
          cd.dist.push_back(v.get<double>());
        }
        return cd;
      }
      parse_fail("weak value must be an integer, null, or an array of reals");
    }
    case SettingKind::SemiSup: {
      if (j.is_null()) return UnlabeledEvidence{};
      if (j.is_array()) {
        ExactEvidence e;
        for (const auto& v : j) {
          if (!is_int(v)) parse_fail("semisup label bits must be integers");
          e.values.push_back(v.get<int>());
        }
        if (static_cast<int>(e.values.size()) != K)
          parse_fail("semisup label array must have K entries");
        return e;
      }
      parse_fail("semisup weak value must be null or an array of bits");
    }
    default:
      parse_fail("unsupported per-class weak value");
  }
}

std::vector<WeakEvidence> parse_weak(const json& j, SettingKind kind, int K,
                                     int C) {
  switch (kind) {
    case SettingKind::PartialL: {
      if (!j.is_array() || j.empty())
        parse_fail("partiall weak value must be a non-empty array of class "
                   "indices");
      CandidateSetEvidence cs;
      for (const auto& v : j) {
        if (!is_int(v)) parse_fail("candidate indices must be integers");
        cs.classes.push_back(v.get<int>());
      }
      return {cs};
    }
    case SettingKind::CompL: {
      if (!is_int(j)) parse_fail("compl weak value must be the complementary "
                                 "class index");
      const int wrong = j.get<int>();
      if (wrong < 0 || wrong >= C)
        parse_fail("complementary class index out of range");
      CandidateSetEvidence cs;
      for (int c = 0; c < C; ++c)
        if (c != wrong) cs.classes.push_back(c);
      return {cs};
    }
    case SettingKind::Noisy:
      if (!is_int(j)) parse_fail("noisy weak value must be the observed class "
                                 "index");
      return {NoisyClassEvidence{j.get<int>()}};
    default:
      break;
  }

  // Per-class settings: a single value when C == 1, otherwise an array of
  // C per-class values.
  if (C == 1) return {parse_class_evidence(j, kind, K)};
  if (!j.is_array() || static_cast<int>(j.size()) != C)
    parse_fail("weak value must be an array with one entry per class");
  std::vector<WeakEvidence> out;
  out.reserve(static_cast<size_t>(C));
  for (const auto& v : j) out.push_back(parse_class_evidence(v, kind, K));
  return out;
}

json evidence_to_json(const WeakEvidence& ev, SettingKind kind, int C) {
  struct Visitor {
    SettingKind kind;
    int C;
    json operator()(const ExactEvidence& e) {
      if (kind == SettingKind::SemiSup) return json(e.values);
      return json(e.value());
    }
    json operator()(const SoftPairEvidence& e) { return json(e.score); }
    json operator()(const CountDistributionEvidence& e) { return json(e.dist); }
    json operator()(const CandidateSetEvidence& e) { return json(e.classes); }
    json operator()(const NoisyClassEvidence& e) { return json(e.label); }
    json operator()(const UnlabeledEvidence&) { return json(nullptr); }
  };
  return std::visit(Visitor{kind, C}, ev);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Bag parse_bag(const std::string& line, const SettingDescriptor& setting) {
  json j;
  try {
    j = json::parse(line);
  } catch (const std::exception& e) {
    parse_fail(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) parse_fail("bag record must be a JSON object");

  Bag bag;
  bag.id = j.value("id", "");
  if (bag.id.empty()) parse_fail("bag record is missing an id");
  if (j.contains("setting") && j["setting"].is_string() &&
      j["setting"].get<std::string>() != setting_kind_name(setting.kind()))
    parse_fail("bag " + bag.id + " was written for setting '" +
               j["setting"].get<std::string>() + "'");

  const bool has_probs = j.contains("probs") && !j["probs"].is_null();
  const bool has_features = j.contains("features") && !j["features"].is_null();
  if (!has_probs && !has_features)
    parse_fail("bag " + bag.id + " carries neither probs nor features");
  if (has_probs) bag.probs = parse_matrix(j["probs"], "probs");
  if (has_features) bag.features = parse_matrix(j["features"], "features");

  bag.K = static_cast<int>(has_probs ? bag.probs.rows() : bag.features.rows());
  if (has_probs && has_features && bag.features.rows() != bag.probs.rows())
    parse_fail("bag " + bag.id + ": probs and features disagree on K");

  if (!j.contains("weak")) parse_fail("bag " + bag.id + " has no weak field");
  const int C = has_probs ? static_cast<int>(bag.probs.cols()) : 1;
  bag.evidence = parse_weak(j["weak"], setting.kind(), bag.K, C);
  return bag;
}

std::string bag_to_json(const Bag& bag, const SettingDescriptor& setting) {
  json j;
  j["id"] = bag.id;
  j["setting"] = setting_kind_name(setting.kind());
  if (bag.has_probs()) j["probs"] = matrix_to_json(bag.probs);
  if (bag.has_features()) j["features"] = matrix_to_json(bag.features);

  const SettingKind kind = setting.kind();
  if (setting.joint_evidence()) {
    if (kind == SettingKind::CompL) {
      // Stored as the complementary class: the one index not in the set.
      const auto& cs = std::get<CandidateSetEvidence>(bag.evidence.front());
      const int C = static_cast<int>(bag.probs.cols());
      int wrong = -1;
      std::vector<bool> present(static_cast<size_t>(C), false);
      for (int c : cs.classes) present[static_cast<size_t>(c)] = true;
      for (int c = 0; c < C; ++c)
        if (!present[static_cast<size_t>(c)]) wrong = c;
      j["weak"] = wrong;
    } else {
      j["weak"] = evidence_to_json(bag.evidence.front(), kind,
                                   static_cast<int>(bag.probs.cols()));
    }
  } else if (bag.evidence.size() == 1) {
    j["weak"] = evidence_to_json(bag.evidence.front(), kind, 1);
  } else {
    json weak = json::array();
    for (const auto& ev : bag.evidence)
      weak.push_back(evidence_to_json(ev, kind,
                                      static_cast<int>(bag.evidence.size())));
    j["weak"] = weak;
  }
  return j.dump();
}

std::string posterior_to_json(const std::string& id,
                              const LatentPosterior& posterior) {
  json j;
  j["id"] = id;
  j["posterior"] = matrix_to_json(posterior.table);
  json ll = json::array();
  for (Eigen::Index c = 0; c < posterior.log_likelihood.size(); ++c)
    ll.push_back(posterior.log_likelihood[c]);
  j["log_likelihood"] = ll;
  return j.dump();
}

std::string truth_to_json(const std::string& id,
                          const Eigen::MatrixXi& labels) {
  json j;
  j["id"] = id;
  json rows = json::array();
  for (Eigen::Index r = 0; r < labels.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < labels.cols(); ++c)
      row.push_back(labels(r, c));
    rows.push_back(std::move(row));
  }
  j["labels"] = rows;
  return j.dump();
}

}  // namespace jsonl
}  // namespace wsinfer
