#include "wsinfer/loop.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace wsinfer {

bool ClassTransitionMatrix::is_identity(double tol) const {
  const Eigen::Index n = entries.rows();
  return (entries - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <=
         tol;
}

ClassTransitionMatrix make_class_transition(Eigen::MatrixXd entries) {
  if (entries.rows() != entries.cols() || entries.rows() == 0)
    throw Error(ErrorCode::DimensionMismatch,
                "class transition matrix must be square and non-empty");
  if ((entries - entries.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw Error(ErrorCode::DimensionMismatch,
                "class transition matrix must be symmetric");
  for (Eigen::Index i = 0; i < entries.rows(); ++i) {
    if (entries.row(i).minCoeff() < 0.0)
      throw Error(ErrorCode::DimensionMismatch,
                  "class transition matrix has a negative entry");
    if (std::abs(entries.row(i).sum() - 1.0) > 1e-9)
      throw Error(ErrorCode::DimensionMismatch,
                  "class transition row " + std::to_string(i) +
                      " does not sum to 1");
  }
  return ClassTransitionMatrix{std::move(entries)};
}

ClassTransitionMatrix load_class_transition(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ParseError,
                "invalid JSON in " + path + ": " + e.what());
  }
  if (!j.is_array() || j.empty())
    throw Error(ErrorCode::ParseError,
                path + ": expected a square array of arrays");
  const Eigen::Index n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = j[static_cast<size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
      throw Error(ErrorCode::ParseError,
                  path + ": row " + std::to_string(r) + " is not length " +
                      std::to_string(n));
    for (Eigen::Index c = 0; c < n; ++c)
      m(r, c) = row[static_cast<size_t>(c)].get<double>();
  }
  return make_class_transition(std::move(m));
}

ClassTransitionMatrix identity_class_transition(int n) {
  return ClassTransitionMatrix{Eigen::MatrixXd::Identity(n, n)};
}

ClassTransitionMatrix symmetric_noise_transition(int n, double flip_rate) {
  if (n < 1) throw Error(ErrorCode::DimensionMismatch, "need n >= 1");
  if (flip_rate < 0.0 || flip_rate > 1.0)
    throw Error(ErrorCode::BadParameter, "flip rate outside [0,1]");
  Eigen::MatrixXd m =
      Eigen::MatrixXd::Constant(n, n, n > 1 ? flip_rate / (n - 1) : 0.0);
  m.diagonal().setConstant(n > 1 ? 1.0 - flip_rate : 1.0);
  return make_class_transition(std::move(m));
}

ClassEvidence class_evidence(const SettingDescriptor& setting,
                             const StateSpace& space, int K,
                             const MessageVector& final_forward) {
  const int values = setting.w_card(K);
  ClassEvidence ev;
  ev.weights.resize(values);
  for (int w = 0; w < values; ++w) {
    const Eigen::VectorXd g = setting.terminal_factor(
        ExactEvidence{{w}}, space, K);
    ev.weights[w] = final_forward.weights.dot(g);
  }
  const double sum = ev.weights.sum();
  if (!(sum > 0.0))
    throw Error(ErrorCode::NormalizationFailure,
                "class evidence is zero for every weak value");
  ev.weights /= sum;
  ev.log_scale = final_forward.log_scale + std::log(sum);
  return ev;
}

std::vector<ClassEvidence> class_evidence(const SettingDescriptor& setting,
                                          const Bag& bag, Mode mode) {
  validate_bag(setting, bag);
  if (setting.category_chain())
    throw Error(ErrorCode::SettingMismatch,
                "class evidence is defined on per-class chains");
  const int C = static_cast<int>(bag.probs.cols());
  std::vector<ClassEvidence> out;
  out.reserve(static_cast<size_t>(C));
  for (int c = 0; c < C; ++c) {
    ChainPlan plan = plan_chain(setting, bag, c);
    auto fwd = forward_pass(plan, mode);
    out.push_back(class_evidence(setting, plan.space, bag.K, fwd.back()));
  }
  return out;
}

std::vector<Eigen::VectorXd> loop_messages(
    const std::vector<ClassEvidence>& evidence,
    const ClassTransitionMatrix& t_class) {
  const Eigen::Index values = t_class.entries.rows();
  for (const auto& ev : evidence)
    if (ev.weights.size() != values)
      throw Error(ErrorCode::DimensionMismatch,
                  "evidence dimension differs from the transition matrix");

  std::vector<Eigen::VectorXd> transported;
  transported.reserve(evidence.size());
  for (const auto& ev : evidence) {
    Eigen::VectorXd t = t_class.entries * ev.weights;
    const double sum = t.sum();
    if (sum > 0.0) t /= sum;
    transported.push_back(std::move(t));
  }

  std::vector<Eigen::VectorXd> fused;
  fused.reserve(evidence.size());
  for (size_t i = 0; i < evidence.size(); ++i) {
    Eigen::VectorXd b = evidence[i].weights;
    for (size_t k = 0; k < evidence.size(); ++k) {
      if (k == i) continue;
      b = b.cwiseProduct(transported[k]);
      const double sum = b.sum();
      if (!(sum > 0.0))
        throw Error(ErrorCode::NormalizationFailure,
                    "fused weak belief collapsed to zero");
      b /= sum;
    }
    fused.push_back(std::move(b));
  }
  return fused;
}

LatentPosterior multilabel_posterior(const SettingDescriptor& setting,
                                     const Bag& bag,
                                     const ClassTransitionMatrix& t_class,
                                     Mode mode) {
  validate_bag(setting, bag);
  if (setting.category_chain())
    return infer_bag(setting, bag, mode, &t_class.entries);

  const int C = static_cast<int>(bag.probs.cols());
  const StateSpace space = build_state_space(setting, bag.K);
  const int values = setting.w_card(bag.K);
  if (t_class.entries.rows() != values)
    throw Error(ErrorCode::DimensionMismatch,
                "transition matrix is " +
                    std::to_string(t_class.entries.rows()) + "x" +
                    std::to_string(t_class.entries.cols()) +
                    " but the weak-value space has " +
                    std::to_string(values) + " values");

  // Loop fusion couples classes through their scalar weak values; other
  // evidence kinds only support the identity channel.
  std::vector<int> observed(static_cast<size_t>(C), -1);
  for (int c = 0; c < C; ++c) {
    const auto* e = std::get_if<ExactEvidence>(&bag.evidence[static_cast<size_t>(c)]);
    if (e && e->scalar()) {
      observed[static_cast<size_t>(c)] = e->value();
    } else if (!t_class.is_identity()) {
      throw Error(ErrorCode::EvidenceKindMismatch,
                  "loop fusion requires scalar hard evidence per class");
    }
  }
  if (t_class.is_identity()) return infer_bag(setting, bag, mode);

  // All candidate terminals, one column per weak value.
  Eigen::MatrixXd candidate_terminals(space.size(), values);
  for (int w = 0; w < values; ++w)
    candidate_terminals.col(w) =
        setting.terminal_factor(ExactEvidence{{w}}, space, bag.K);

  std::vector<ChainPlan> plans;
  std::vector<std::vector<MessageVector>> forwards;
  std::vector<ClassEvidence> evidence;
  plans.reserve(static_cast<size_t>(C));
  forwards.reserve(static_cast<size_t>(C));
  evidence.reserve(static_cast<size_t>(C));
  for (int c = 0; c < C; ++c) {
    plans.push_back(plan_chain(setting, bag, c));
    forwards.push_back(forward_pass(plans.back(), mode));
    evidence.push_back(
        class_evidence(setting, space, bag.K, forwards.back().back()));
  }

  // Incoming loop message to class i, excluding its own evidence.
  std::vector<Eigen::VectorXd> transported;
  transported.reserve(static_cast<size_t>(C));
  for (const auto& ev : evidence) {
    Eigen::VectorXd t = t_class.entries * ev.weights;
    const double sum = t.sum();
    if (sum > 0.0) t /= sum;
    transported.push_back(std::move(t));
  }

  LatentPosterior post;
  post.table.resize(bag.K, C);
  post.log_likelihood.resize(C);
  for (int c = 0; c < C; ++c) {
    Eigen::VectorXd incoming = Eigen::VectorXd::Ones(values);
    for (int k = 0; k < C; ++k) {
      if (k == c) continue;
      incoming = incoming.cwiseProduct(transported[static_cast<size_t>(k)]);
      const double sum = incoming.sum();
      if (sum > 0.0) incoming /= sum;
    }
    // Observation channel: the annotated value reaches the latent weak
    // label through T_class, then the weighted mixture of candidate
    // terminals seeds the backward pass.
    Eigen::VectorXd weak_weight =
        t_class.entries.col(observed[static_cast<size_t>(c)])
            .cwiseProduct(incoming);
    Eigen::VectorXd seed = candidate_terminals * weak_weight;
    auto bwd = backward_pass(plans[static_cast<size_t>(c)], seed, mode);
    BeliefTable table =
        beliefs(plans[static_cast<size_t>(c)], forwards[static_cast<size_t>(c)],
                bwd);
    for (int k = 0; k < bag.K; ++k)
      post.table(k, c) =
          table.nodes[static_cast<size_t>(k)].tail(space.w_card).sum();
    post.log_likelihood[c] = table.log_likelihood;
  }
  return post;
}

}  // namespace wsinfer
