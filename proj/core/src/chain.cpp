#include "wsinfer/chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wsinfer {

const char* mode_name(Mode mode) {
  return mode == Mode::Dense ? "dense" : "lowrank";
}

Mode mode_from_name(const std::string& name) {
  if (name == "dense") return Mode::Dense;
  if (name == "lowrank") return Mode::LowRank;
  throw Error(ErrorCode::BadParameter, "unknown mode '" + name + "'");
}

namespace {

constexpr double kFactorizationTol = 1e-12;

// Count chains cannot increment past the top state. That transition only
// exists for source columns no realizable chain ever occupies, so the
// saturated value is inert; it keeps every column stochastic and the
// factorization exact.
int clamped_step(const SettingDescriptor& st, const StateSpace& sp, int z,
                 int y_next) {
  return std::min(st.step(z, y_next), sp.w_card - 1);
}

// Step targets resolved once per chain; the emission weight of landing in
// them is q (positive) / 1 - q (negative), with the category chains'
// absorbing rule folded in through emission_at.
struct StepTables {
  std::vector<int> to_neg;  // index of (0, step(z, 0)) per z
  std::vector<int> to_pos;  // index of (1, step(z, 1)) per z
  bool absorbing = false;   // category chains: z == 1 emits no positives

  StepTables() = default;
  StepTables(const SettingDescriptor& st, const StateSpace& sp) {
    reset(st, sp);
  }

  void reset(const SettingDescriptor& st, const StateSpace& sp) {
    const int W = sp.w_card;
    to_neg.resize(static_cast<size_t>(W));
    to_pos.resize(static_cast<size_t>(W));
    for (int z = 0; z < W; ++z) {
      to_neg[static_cast<size_t>(z)] = sp.index(0, clamped_step(st, sp, z, 0));
      to_pos[static_cast<size_t>(z)] = sp.index(1, clamped_step(st, sp, z, 1));
    }
    absorbing = st.category_chain();
  }

  double emission_at(int z, double p) const {
    return absorbing && z == 1 ? 0.0 : p;
  }
};

// mu' = T * mu without materializing T: collapse the two y-blocks
// (V^T mu), then scatter through the step structure (the sparse U).
void lowrank_forward_step(const StepTables& tables, int w_card, double p,
                          Eigen::Ref<const Eigen::VectorXd> in,
                          Eigen::Ref<Eigen::VectorXd> out) {
  out.setZero();
  for (int z = 0; z < w_card; ++z) {
    const double s = in[z] + in[w_card + z];
    if (s == 0.0) continue;
    const double q = tables.emission_at(z, p);
    out[tables.to_neg[static_cast<size_t>(z)]] += (1.0 - q) * s;
    out[tables.to_pos[static_cast<size_t>(z)]] += q * s;
  }
}

// mu' = T^T * mu = V * (U^T mu); the result repeats across y-blocks.
void lowrank_backward_step(const StepTables& tables, int w_card, double p,
                           Eigen::Ref<const Eigen::VectorXd> in,
                           Eigen::Ref<Eigen::VectorXd> out) {
  for (int z = 0; z < w_card; ++z) {
    const double q = tables.emission_at(z, p);
    const double t = (1.0 - q) * in[tables.to_neg[static_cast<size_t>(z)]] +
                     q * in[tables.to_pos[static_cast<size_t>(z)]];
    out[z] = t;
    out[w_card + z] = t;
  }
}

double normalize_or_throw(Eigen::VectorXd& v, ErrorCode code,
                          const std::string& what) {
  const double sum = v.sum();
  if (!(sum > 0.0) || !std::isfinite(sum)) throw Error(code, what);
  v /= sum;
  return std::log(sum);
}

[[noreturn]] void throw_step_failure(ErrorCode code, const char* what) {
  throw Error(code, what);
}

void fill_transition(const SettingDescriptor& setting, double p_next,
                     const StateSpace& space, Eigen::MatrixXd& entries) {
  entries.setZero();
  for (int z = 0; z < space.w_card; ++z)
    for (int y = 0; y < 2; ++y) {
      const int col = space.index(y, z);
      for (int y_next = 0; y_next < 2; ++y_next)
        entries(space.index(y_next, clamped_step(setting, space, z, y_next)),
                col) += setting.emit(z, y_next, p_next);
    }
}

// Plain column-major matvec kernels; the state spaces are small enough
// that Eigen's product dispatch would dominate the arithmetic.
void dense_apply(const Eigen::MatrixXd& t, const double* in, double* out,
                 int n) {
  std::fill(out, out + n, 0.0);
  const double* col = t.data();
  for (int j = 0; j < n; ++j, col += n) {
    const double v = in[j];
    if (v != 0.0)
      for (int i = 0; i < n; ++i) out[i] += col[i] * v;
  }
}

void dense_apply_transposed(const Eigen::MatrixXd& t, const double* in,
                            double* out, int n) {
  const double* col = t.data();
  for (int j = 0; j < n; ++j, col += n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += col[i] * in[i];
    out[j] = acc;
  }
}

// Message-matrix forward sweep: column k holds the normalized message
// into node k, log_scales[k] the stripped mass up to it. Buffers are
// reused across steps so a chain run costs a handful of allocations.
void run_forward(const ChainPlan& plan, Mode mode, const StepTables& tables,
                 Eigen::MatrixXd& messages, Eigen::VectorXd& log_scales,
                 Eigen::MatrixXd& transition) {
  const int S = plan.space.size();
  const int L = plan.length;
  const int W = plan.space.w_card;
  messages.resize(S, L);
  log_scales.resize(L);

  messages.col(0).setZero();
  messages(plan.space.index(1, plan.setting.init_z(1)), 0) += plan.probs[0];
  messages(plan.space.index(0, plan.setting.init_z(0)), 0) +=
      1.0 - plan.probs[0];
  log_scales[0] = plan.node_log[0];

  if (mode == Mode::Dense && transition.rows() != S) transition.resize(S, S);
  for (int k = 1; k < L; ++k) {
    if (mode == Mode::Dense) {
      fill_transition(plan.setting, plan.probs[k], plan.space, transition);
      dense_apply(transition, messages.col(k - 1).data(),
                  messages.col(k).data(), S);
    } else {
      lowrank_forward_step(tables, W, plan.probs[k], messages.col(k - 1),
                           messages.col(k));
    }
    const double sum = messages.col(k).sum();
    if (!(sum > 0.0) || !std::isfinite(sum))
      throw_step_failure(ErrorCode::InfeasibleBag,
                         "forward message collapsed to zero");
    messages.col(k) /= sum;
    log_scales[k] = log_scales[k - 1] + std::log(sum) + plan.node_log[k];
  }
}

// Message-matrix backward sweep from an arbitrary terminal seed.
void run_backward(const ChainPlan& plan, const Eigen::VectorXd& terminal,
                  Mode mode, const StepTables& tables,
                  Eigen::MatrixXd& messages, Eigen::VectorXd& log_scales,
                  Eigen::MatrixXd& transition) {
  const int S = plan.space.size();
  const int L = plan.length;
  const int W = plan.space.w_card;
  if (terminal.size() != S)
    throw Error(ErrorCode::ShapeMismatch,
                "terminal vector does not match the state space");
  messages.resize(S, L);
  log_scales.resize(L);

  const double terminal_sum = terminal.sum();
  if (!(terminal_sum > 0.0))
    throw Error(ErrorCode::InfeasibleWeakLabel,
                "terminal factor is zero everywhere");
  messages.col(L - 1) = terminal / terminal_sum;
  log_scales[L - 1] = std::log(terminal_sum);

  if (mode == Mode::Dense && transition.rows() != S) transition.resize(S, S);
  for (int k = L - 2; k >= 0; --k) {
    if (mode == Mode::Dense) {
      fill_transition(plan.setting, plan.probs[k + 1], plan.space, transition);
      dense_apply_transposed(transition, messages.col(k + 1).data(),
                             messages.col(k).data(), S);
    } else {
      lowrank_backward_step(tables, W, plan.probs[k + 1], messages.col(k + 1),
                            messages.col(k));
    }
    const double sum = messages.col(k).sum();
    if (!(sum > 0.0) || !std::isfinite(sum))
      throw_step_failure(ErrorCode::InfeasibleWeakLabel,
                         "backward message collapsed to zero");
    messages.col(k) /= sum;
    log_scales[k] = log_scales[k + 1] + std::log(sum) + plan.node_log[k + 1];
  }
}

// Per-slot emission probabilities for one instance chain, with SemiSup
// labels clamped in. Returns the stripped per-slot log mass.
void instance_chain_inputs(const SettingDescriptor& setting,
                           const Eigen::MatrixXd& bag_probs, int class_index,
                           const WeakEvidence& ev, Eigen::VectorXd& probs,
                           Eigen::VectorXd& node_log) {
  const int K = static_cast<int>(bag_probs.rows());
  probs = bag_probs.col(class_index);
  node_log = Eigen::VectorXd::Zero(K);
  if (setting.kind() != SettingKind::SemiSup) return;
  const auto* e = std::get_if<ExactEvidence>(&ev);
  if (!e) return;  // unlabeled bag: predictions pass through
  for (int k = 0; k < K; ++k) {
    const int bit = e->values[static_cast<size_t>(k)];
    const double weight = bit ? probs[k] : 1.0 - probs[k];
    if (!(weight > 0.0))
      throw Error(ErrorCode::InfeasibleWeakLabel,
                  "observed label contradicts a hard-zero prediction");
    probs[k] = bit ? 1.0 : 0.0;
    node_log[k] = std::log(weight);
  }
}

// Per-category masses for the single-label settings. The candidate set /
// observation channel supplies a weight u_c per category; the chain then
// places exactly one positive with P(category = c) proportional to
// p_c * u_c.
void category_chain_inputs(const SettingDescriptor& setting,
                           const Eigen::MatrixXd& bag_probs,
                           const WeakEvidence& ev,
                           const Eigen::MatrixXd* t_class,
                           Eigen::VectorXd& probs, Eigen::VectorXd& node_log) {
  const int C = static_cast<int>(bag_probs.cols());
  Eigen::VectorXd p = bag_probs.row(0).transpose();
  const double psum = p.sum();
  if (!(psum > 0.0))
    throw Error(ErrorCode::InfeasibleBag, "all class probabilities are zero");
  p /= psum;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(C);
  if (const auto* cs = std::get_if<CandidateSetEvidence>(&ev)) {
    for (int c : cs->classes) u[c] = 1.0;
  } else if (const auto* nc = std::get_if<NoisyClassEvidence>(&ev)) {
    if (t_class) {
      if (t_class->rows() != C || t_class->cols() != C)
        throw Error(ErrorCode::DimensionMismatch,
                    "class transition matrix must be C x C");
      u = t_class->col(nc->label);
    } else {
      u[nc->label] = 1.0;
    }
  } else {
    throw Error(ErrorCode::EvidenceKindMismatch,
                std::string(evidence_kind_name(ev)) + " evidence not valid for " +
                    setting_kind_name(setting.kind()));
  }

  Eigen::VectorXd m = p.cwiseProduct(u);
  const double mass = m.sum();
  if (!(mass > 0.0))
    throw Error(ErrorCode::InfeasibleWeakLabel,
                "no category carries probability under the weak label");
  m /= mass;

  // Stick-breaking: q_c = mass of c conditioned on no earlier placement.
  probs.resize(C);
  double remaining = 1.0;
  for (int c = 0; c < C; ++c) {
    const double q = remaining > 0.0 ? m[c] / remaining : 0.0;
    probs[c] = std::clamp(q, 0.0, 1.0);
    remaining -= m[c];
  }
  node_log = Eigen::VectorXd::Zero(C);
  node_log[0] = std::log(mass);
}

// Fills a plan in place; buffers already holding the right sizes are
// reused without reallocation.
void plan_chain_into(const SettingDescriptor& setting, const Bag& bag,
                     int class_index, const WeakEvidence& ev,
                     const Eigen::MatrixXd* t_class, ChainPlan& plan) {
  plan.setting = setting;
  if (setting.category_chain()) {
    const int C = static_cast<int>(bag.probs.cols());
    plan.space = StateSpace{2};
    category_chain_inputs(setting, bag.probs, ev, t_class, plan.probs,
                          plan.node_log);
    plan.length = C;
    setting.terminal_factor(ev, plan.space, C, plan.terminal);
  } else {
    plan.space = build_state_space(setting, bag.K);
    instance_chain_inputs(setting, bag.probs, class_index, ev, plan.probs,
                          plan.node_log);
    plan.length = bag.K;
    setting.terminal_factor(ev, plan.space, bag.K, plan.terminal);
  }
}

ChainPlan plan_chain_with_evidence(const SettingDescriptor& setting,
                                   const Bag& bag, int class_index,
                                   const WeakEvidence& ev,
                                   const Eigen::MatrixXd* t_class) {
  ChainPlan plan;
  plan_chain_into(setting, bag, class_index, ev, t_class, plan);
  return plan;
}

}  // namespace

ChainPlan plan_chain(const SettingDescriptor& setting, const Bag& bag,
                     int class_index, const Eigen::MatrixXd* t_class) {
  validate_bag(setting, bag);
  const size_t ev_index =
      setting.joint_evidence() ? 0 : static_cast<size_t>(class_index);
  return plan_chain_with_evidence(setting, bag, class_index,
                                  bag.evidence[ev_index], t_class);
}

MessageVector initial_message(const SettingDescriptor& setting,
                              const StateSpace& space, double p) {
  MessageVector msg;
  msg.weights = Eigen::VectorXd::Zero(space.size());
  msg.weights[space.index(1, setting.init_z(1))] += p;
  msg.weights[space.index(0, setting.init_z(0))] += 1.0 - p;
  msg.log_scale = 0.0;
  return msg;
}

TransitionMatrix build_transition(const SettingDescriptor& setting,
                                  double p_next, const StateSpace& space) {
  TransitionMatrix t;
  t.entries.resize(space.size(), space.size());
  fill_transition(setting, p_next, space, t.entries);
  return t;
}

LowRankFactors factorize(const TransitionMatrix& t, const StateSpace& space) {
  const int W = space.w_card;
  if (t.entries.rows() != 2 * W || t.entries.cols() != 2 * W)
    throw Error(ErrorCode::ShapeMismatch,
                "transition matrix does not match the state space");
  const double residual =
      (t.entries.rightCols(W) - t.entries.leftCols(W)).cwiseAbs().maxCoeff();
  if (residual > kFactorizationTol)
    throw Error(ErrorCode::RankCheckFailed,
                "half-block residual " + std::to_string(residual) +
                    " exceeds 1e-12");
  LowRankFactors f;
  f.rank = W;
  f.U = t.entries.leftCols(W);
  f.V = Eigen::MatrixXd::Zero(2 * W, W);
  f.V.topRows(W) = Eigen::MatrixXd::Identity(W, W);
  f.V.bottomRows(W) = Eigen::MatrixXd::Identity(W, W);
  return f;
}

std::vector<MessageVector> forward_pass(const ChainPlan& plan, Mode mode) {
  const StepTables tables(plan.setting, plan.space);
  Eigen::MatrixXd messages, transition;
  Eigen::VectorXd log_scales;
  run_forward(plan, mode, tables, messages, log_scales, transition);
  std::vector<MessageVector> msgs(static_cast<size_t>(plan.length));
  for (int k = 0; k < plan.length; ++k) {
    msgs[static_cast<size_t>(k)].weights = messages.col(k);
    msgs[static_cast<size_t>(k)].log_scale = log_scales[k];
  }
  return msgs;
}

std::vector<MessageVector> forward_pass(const SettingDescriptor& setting,
                                        const Bag& bag, int class_index,
                                        Mode mode) {
  return forward_pass(plan_chain(setting, bag, class_index), mode);
}

std::vector<MessageVector> backward_pass(const ChainPlan& plan,
                                         const Eigen::VectorXd& terminal,
                                         Mode mode) {
  const StepTables tables(plan.setting, plan.space);
  Eigen::MatrixXd messages, transition;
  Eigen::VectorXd log_scales;
  run_backward(plan, terminal, mode, tables, messages, log_scales, transition);
  std::vector<MessageVector> msgs(static_cast<size_t>(plan.length));
  for (int k = 0; k < plan.length; ++k) {
    msgs[static_cast<size_t>(k)].weights = messages.col(k);
    msgs[static_cast<size_t>(k)].log_scale = log_scales[k];
  }
  return msgs;
}

std::vector<MessageVector> backward_pass(const SettingDescriptor& setting,
                                         const Bag& bag, int class_index,
                                         const Eigen::VectorXd& terminal,
                                         Mode mode) {
  return backward_pass(plan_chain(setting, bag, class_index), terminal, mode);
}

BeliefTable beliefs(const ChainPlan& plan,
                    const std::vector<MessageVector>& forward,
                    const std::vector<MessageVector>& backward) {
  if (forward.size() != backward.size() ||
      forward.size() != static_cast<size_t>(plan.length))
    throw Error(ErrorCode::ShapeMismatch,
                "forward/backward message lists differ in length");
  const double contraction = forward.back().weights.dot(plan.terminal);
  if (!(contraction > 0.0))
    throw Error(ErrorCode::InfeasibleWeakLabel,
                "weak label has zero probability under the forward pass");
  BeliefTable table;
  table.nodes.resize(forward.size());
  for (size_t k = 0; k < forward.size(); ++k) {
    Eigen::VectorXd b = forward[k].weights.cwiseProduct(backward[k].weights);
    normalize_or_throw(b, ErrorCode::NormalizationFailure,
                       "belief product is zero at node " + std::to_string(k));
    table.nodes[k] = std::move(b);
  }
  table.log_likelihood = forward.back().log_scale + std::log(contraction);
  return table;
}

LatentPosterior latent_posterior(const BeliefTable& table,
                                 const StateSpace& space) {
  LatentPosterior post;
  post.table.resize(static_cast<Eigen::Index>(table.nodes.size()), 1);
  for (size_t k = 0; k < table.nodes.size(); ++k)
    post.table(static_cast<Eigen::Index>(k), 0) =
        table.nodes[k].tail(space.w_card).sum();
  post.log_likelihood = Eigen::VectorXd::Constant(1, table.log_likelihood);
  return post;
}

namespace {

// Reused per-thread working set: plan, step tables, and message
// matrices. Bags of the same shape run with no allocations at all.
struct ChainScratch {
  ChainPlan plan;
  StepTables tables;
  Eigen::MatrixXd forward, backward, transition;
  Eigen::VectorXd fwd_scales, bwd_scales;
};

ChainScratch& thread_scratch() {
  thread_local ChainScratch scratch;
  return scratch;
}

double chain_marginals(Mode mode, ChainScratch& s,
                       Eigen::Ref<Eigen::VectorXd> positive) {
  const ChainPlan& plan = s.plan;
  s.tables.reset(plan.setting, plan.space);
  run_forward(plan, mode, s.tables, s.forward, s.fwd_scales, s.transition);
  const double contraction =
      s.forward.col(plan.length - 1).dot(plan.terminal);
  if (!(contraction > 0.0))
    throw Error(ErrorCode::InfeasibleWeakLabel,
                "weak label has zero probability under the forward pass");
  run_backward(plan, plan.terminal, mode, s.tables, s.backward, s.bwd_scales,
               s.transition);
  const int W = plan.space.w_card;
  for (int k = 0; k < plan.length; ++k) {
    const double pos =
        s.forward.col(k).tail(W).dot(s.backward.col(k).tail(W));
    const double total = pos + s.forward.col(k).head(W).dot(
                                   s.backward.col(k).head(W));
    if (!(total > 0.0))
      throw Error(ErrorCode::NormalizationFailure,
                  "belief product is zero at node " + std::to_string(k));
    positive[k] = pos / total;
  }
  return s.fwd_scales[plan.length - 1] + std::log(contraction);
}

}  // namespace

double weak_label_likelihood(const SettingDescriptor& setting, const Bag& bag,
                             int class_index, const WeakEvidence& w,
                             Mode mode) {
  validate_bag(setting, bag);
  ChainScratch& s = thread_scratch();
  plan_chain_into(setting, bag, class_index, w, nullptr, s.plan);
  s.tables.reset(s.plan.setting, s.plan.space);
  run_forward(s.plan, mode, s.tables, s.forward, s.fwd_scales, s.transition);
  const double contraction =
      s.forward.col(s.plan.length - 1).dot(s.plan.terminal);
  if (!(contraction > 0.0))
    throw Error(ErrorCode::InfeasibleWeakLabel,
                "weak label has zero probability");
  return s.fwd_scales[s.plan.length - 1] + std::log(contraction);
}

LatentPosterior infer_bag(const SettingDescriptor& setting, const Bag& bag,
                          Mode mode,
                          const Eigen::MatrixXd* class_transition) {
  validate_bag(setting, bag);
  ChainScratch& scratch = thread_scratch();
  if (setting.category_chain()) {
    plan_chain_into(setting, bag, 0, bag.evidence.front(), class_transition,
                    scratch.plan);
    const int C = scratch.plan.length;
    LatentPosterior post;
    post.table.resize(1, C);
    Eigen::VectorXd positive(C);
    const double loglik = chain_marginals(mode, scratch, positive);
    post.table.row(0) = positive.transpose();
    post.log_likelihood = Eigen::VectorXd::Constant(1, loglik);
    return post;
  }

  const int C = static_cast<int>(bag.probs.cols());
  LatentPosterior post;
  post.table.resize(bag.K, C);
  post.log_likelihood.resize(C);
  for (int c = 0; c < C; ++c) {
    plan_chain_into(setting, bag, c, bag.evidence[static_cast<size_t>(c)],
                    class_transition, scratch.plan);
    post.log_likelihood[c] = chain_marginals(mode, scratch, post.table.col(c));
  }
  return post;
}

namespace {

// Fused low-rank kernel: every (bag, class) chain is one column of a
// message matrix; a step collapses the y-blocks and scatters through the
// shared transition structure. Columns are sorted by descending chain
// length so shorter bags simply drop out of the active prefix, which is
// the identity-padding contract.
std::vector<BatchItem> batched_fused(const SettingDescriptor& setting,
                                     const std::vector<Bag>& bags,
                                     std::vector<BatchItem>& items) {
  struct Column {
    int bag = 0;
    int cls = 0;
    int length = 0;
  };

  std::vector<Column> cols;
  int k_max = 1;
  for (size_t b = 0; b < bags.size(); ++b) {
    if (!items[b].error.empty()) continue;
    const Bag& bag = bags[b];
    k_max = std::max(k_max, bag.K);
    const int C = static_cast<int>(bag.probs.cols());
    items[b].posterior = LatentPosterior{};
    items[b].posterior->table.resize(bag.K, C);
    items[b].posterior->log_likelihood.resize(C);
    for (int c = 0; c < C; ++c)
      cols.push_back({static_cast<int>(b), c, bag.K});
  }
  std::stable_sort(cols.begin(), cols.end(),
                   [](const Column& a, const Column& b) {
                     return a.length > b.length;
                   });
  const int N = static_cast<int>(cols.size());
  if (N == 0) return items;

  const StateSpace space{setting.w_card(k_max)};
  const int S = space.size();
  const int W = space.w_card;

  Eigen::RowVectorXd log_scale = Eigen::RowVectorXd::Zero(N);
  std::vector<char> failed(static_cast<size_t>(N), 0);
  auto fail_col = [&](int j, const char* why) {
    failed[static_cast<size_t>(j)] = 1;
    BatchItem& item = items[static_cast<size_t>(cols[static_cast<size_t>(j)].bag)];
    if (item.error.empty()) {
      item.error = why;
      item.posterior.reset();
    }
  };

  // Pooled per-column inputs: slot k of every chain sits in one
  // contiguous column, so the step loops gather without striding.
  Eigen::MatrixXd probs_pool = Eigen::MatrixXd::Constant(N, k_max, 0.5);
  Eigen::MatrixXd node_log_pool = Eigen::MatrixXd::Zero(N, k_max);
  Eigen::MatrixXd terminal_pool = Eigen::MatrixXd::Ones(S, N);
  {
    Eigen::VectorXd probs_scratch, node_log_scratch, terminal_scratch;
    for (int j = 0; j < N; ++j) {
      const Column& col = cols[static_cast<size_t>(j)];
      const Bag& bag = bags[static_cast<size_t>(col.bag)];
      try {
        instance_chain_inputs(setting, bag.probs, col.cls,
                              bag.evidence[static_cast<size_t>(col.cls)],
                              probs_scratch, node_log_scratch);
        setting.terminal_factor(bag.evidence[static_cast<size_t>(col.cls)],
                                space, bag.K, terminal_scratch);
      } catch (const Error& e) {
        fail_col(j, e.what());
        continue;
      }
      probs_pool.row(j).head(col.length) = probs_scratch.transpose();
      node_log_pool.row(j).head(col.length) = node_log_scratch.transpose();
      terminal_pool.col(j) = terminal_scratch;
    }
  }

  // Shared step targets; emissions are z-independent for every fused
  // setting so a per-column scalar q suffices.
  std::vector<int> dz0(static_cast<size_t>(W)), dz1(static_cast<size_t>(W));
  int max_increment = 0;
  for (int z = 0; z < W; ++z) {
    dz0[static_cast<size_t>(z)] = space.index(0, clamped_step(setting, space, z, 0));
    dz1[static_cast<size_t>(z)] = space.index(1, clamped_step(setting, space, z, 1));
    max_increment = std::max(
        {max_increment, clamped_step(setting, space, z, 0) - z,
         clamped_step(setting, space, z, 1) - z});
  }
  // Highest z that can carry mass after k slots; count chains only
  // populate a growing frontier, so the scatter skips the dead tail.
  const int z_start = std::max(setting.init_z(0), setting.init_z(1));
  auto z_frontier = [&](int slots_done) {
    if (max_increment == 0) return std::min(z_start, W - 1);
    return std::min(z_start + slots_done * max_increment, W - 1);
  };

  // Message storage per node, written in place: fwd[k] / bwd[k] column j
  // is only meaningful (and only ever read) while node k lies inside
  // column j's own chain, so inactive columns are never touched.
  std::vector<Eigen::MatrixXd> fwd(static_cast<size_t>(k_max));
  std::vector<Eigen::MatrixXd> bwd(static_cast<size_t>(k_max));
  for (int k = 0; k < k_max; ++k) {
    int covered = 0;
    while (covered < N && cols[static_cast<size_t>(covered)].length > k)
      ++covered;
    fwd[static_cast<size_t>(k)].resize(S, covered);
    bwd[static_cast<size_t>(k)].resize(S, covered);
  }

  // Failed columns are kept numerically inert so the fused ops stay
  // finite for their neighbours.
  auto reset_failed = [&](Eigen::MatrixXd& m, int j) {
    m.col(j).setConstant(1.0 / S);
  };

  fwd[0].setZero();
  for (int j = 0; j < N; ++j) {
    fwd[0](space.index(1, setting.init_z(1)), j) += probs_pool(j, 0);
    fwd[0](space.index(0, setting.init_z(0)), j) += 1.0 - probs_pool(j, 0);
    log_scale[j] = node_log_pool(j, 0);
  }

  Eigen::MatrixXd sums(W, N);
  Eigen::RowVectorXd q(N), node_log(N), colsum(N);
  for (int k = 1; k < k_max; ++k) {
    const int active = static_cast<int>(fwd[static_cast<size_t>(k)].cols());
    if (active == 0) break;
    const Eigen::MatrixXd& prev = fwd[static_cast<size_t>(k - 1)];
    Eigen::MatrixXd& next = fwd[static_cast<size_t>(k)];
    const int z_live = z_frontier(k - 1) + 1;
    sums.topRows(z_live).leftCols(active) =
        prev.middleRows(0, z_live).leftCols(active) +
        prev.middleRows(W, z_live).leftCols(active);
    q.head(active) = probs_pool.col(k).head(active).transpose();
    node_log.head(active) = node_log_pool.col(k).head(active).transpose();
    next.setZero();
    for (int z = 0; z < z_live; ++z) {
      next.row(dz0[static_cast<size_t>(z)]) +=
          (Eigen::RowVectorXd::Ones(active) - q.head(active))
              .cwiseProduct(sums.row(z).head(active));
      next.row(dz1[static_cast<size_t>(z)]) +=
          q.head(active).cwiseProduct(sums.row(z).head(active));
    }
    colsum.head(active) = next.colwise().sum();
    if ((colsum.head(active).array() > 0.0).all()) {
      next.array().rowwise() /= colsum.head(active).array();
      log_scale.head(active) +=
          colsum.head(active).array().log().matrix() + node_log.head(active);
      continue;
    }
    for (int j = 0; j < active; ++j) {
      if (failed[static_cast<size_t>(j)]) {
        reset_failed(next, j);
        continue;
      }
      const double sum = colsum[j];
      if (!(sum > 0.0)) {
        fail_col(j, "InfeasibleBag: forward message collapsed to zero");
        reset_failed(next, j);
        continue;
      }
      next.col(j) /= sum;
      log_scale[j] += std::log(sum) + node_log[j];
    }
  }

  // Backward with the same prefix structure in reverse: at node k, columns
  // ending there seed from their terminal, longer columns step back from
  // node k + 1.
  for (int k = k_max - 1; k >= 0; --k) {
    Eigen::MatrixXd& here = bwd[static_cast<size_t>(k)];
    const int covered = static_cast<int>(here.cols());
    const int active =
        k + 1 < k_max ? static_cast<int>(bwd[static_cast<size_t>(k + 1)].cols())
                      : 0;
    if (active > 0) {
      const Eigen::MatrixXd& succ = bwd[static_cast<size_t>(k + 1)];
      q.head(active) = probs_pool.col(k + 1).head(active).transpose();
      for (int z = 0; z < W; ++z)
        sums.row(z).head(active) =
            (Eigen::RowVectorXd::Ones(active) - q.head(active))
                .cwiseProduct(
                    succ.row(dz0[static_cast<size_t>(z)]).head(active)) +
            q.head(active).cwiseProduct(
                succ.row(dz1[static_cast<size_t>(z)]).head(active));
      here.topRows(W).leftCols(active) = sums.leftCols(active);
      here.bottomRows(W).leftCols(active) = sums.leftCols(active);
      colsum.head(active) = here.leftCols(active).colwise().sum();
      if ((colsum.head(active).array() > 0.0).all()) {
        here.leftCols(active).array().rowwise() /=
            colsum.head(active).array();
      } else {
        for (int j = 0; j < active; ++j) {
          if (failed[static_cast<size_t>(j)]) {
            reset_failed(here, j);
            continue;
          }
          const double sum = colsum[j];
          if (!(sum > 0.0)) {
            fail_col(j, "InfeasibleWeakLabel: backward message collapsed");
            reset_failed(here, j);
            continue;
          }
          here.col(j) /= sum;
        }
      }
    }
    // Columns whose final node is k.
    for (int j = active; j < covered; ++j) {
      if (failed[static_cast<size_t>(j)]) {
        reset_failed(here, j);
        continue;
      }
      const double sum = terminal_pool.col(j).sum();
      if (!(sum > 0.0)) {
        fail_col(j, "InfeasibleWeakLabel: terminal factor is zero everywhere");
        reset_failed(here, j);
        continue;
      }
      here.col(j) = terminal_pool.col(j) / sum;
    }
  }

  for (int j = 0; j < N; ++j) {
    if (failed[static_cast<size_t>(j)]) continue;
    const Column& col = cols[static_cast<size_t>(j)];
    BatchItem& item = items[static_cast<size_t>(col.bag)];
    if (!item.posterior) continue;
    const double contraction =
        fwd[static_cast<size_t>(col.length - 1)].col(j).dot(
            terminal_pool.col(j));
    if (!(contraction > 0.0)) {
      fail_col(j, "InfeasibleWeakLabel: weak label has zero probability");
      continue;
    }
    item.posterior->log_likelihood[col.cls] =
        log_scale[j] + std::log(contraction);
    for (int k = 0; k < col.length; ++k) {
      const auto f = fwd[static_cast<size_t>(k)].col(j);
      const auto b = bwd[static_cast<size_t>(k)].col(j);
      const double pos = f.tail(W).dot(b.tail(W));
      const double total = pos + f.head(W).dot(b.head(W));
      if (!(total > 0.0)) {
        fail_col(j, "NormalizationFailure: belief product is zero");
        break;
      }
      item.posterior->table(k, col.cls) = pos / total;
    }
  }
  return items;
}

}  // namespace

std::vector<BatchItem> batched_infer(const SettingDescriptor& setting,
                                     const std::vector<Bag>& bags, Mode mode,
                                     const Eigen::MatrixXd* class_transition) {
  std::vector<BatchItem> items(bags.size());
  for (size_t b = 0; b < bags.size(); ++b) {
    items[b].bag_id = bags[b].id;
    try {
      validate_bag(setting, bags[b]);
    } catch (const Error& e) {
      items[b].error = e.what();
    }
  }

  if (mode == Mode::LowRank && !setting.category_chain()) {
    return batched_fused(setting, bags, items);
  }

  for (size_t b = 0; b < bags.size(); ++b) {
    if (!items[b].error.empty()) continue;
    try {
      items[b].posterior = infer_bag(setting, bags[b], mode, class_transition);
    } catch (const Error& e) {
      items[b].error = e.what();
    }
  }
  return items;
}

}  // namespace wsinfer
