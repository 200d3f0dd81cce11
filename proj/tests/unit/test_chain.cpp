#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "wsinfer/chain.hpp"
#include "wsinfer/oracle.hpp"

using namespace wsinfer;

TEST_SUITE_BEGIN("chain");

namespace {

Bag multiins_bag(std::vector<double> p, int w) {
  std::vector<std::vector<double>> probs;
  for (double v : p) probs.push_back({v});
  return test::make_bag(std::move(probs), {ExactEvidence{{w}}});
}

}  // namespace

TEST_CASE("initial message splits mass between the two reachable states") {
  const auto s = make_setting(SettingKind::MultiIns);
  const StateSpace space = build_state_space(s, 3);

  MessageVector m = initial_message(s, space, 0.5);
  CHECK(m.weights[space.index(0, 0)] == 0.5);
  CHECK(m.weights[space.index(1, 1)] == 0.5);
  CHECK(m.weights[space.index(0, 1)] == 0.0);
  CHECK(m.weights[space.index(1, 0)] == 0.0);

  m = initial_message(s, space, 0.0);
  CHECK(m.weights[space.index(0, 0)] == 1.0);
  CHECK(m.weights.sum() == 1.0);

  const auto lp = make_setting(SettingKind::LProp);
  const StateSpace lspace = build_state_space(lp, 2);
  m = initial_message(lp, lspace, 0.9);
  CHECK(m.weights[lspace.index(0, 0)] == doctest::Approx(0.1));
  CHECK(m.weights[lspace.index(1, 1)] == doctest::Approx(0.9));
}

TEST_CASE("multiins transition matches the chain adjacency pattern") {
  const auto s = make_setting(SettingKind::MultiIns);
  const StateSpace space = build_state_space(s, 3);
  const TransitionMatrix t = build_transition(s, 0.5, space);

  // Column (0,0): mass 0.5 at rows (0,0) and (1,1).
  CHECK(t.entries(space.index(0, 0), space.index(0, 0)) == 0.5);
  CHECK(t.entries(space.index(1, 1), space.index(0, 0)) == 0.5);
  CHECK(t.entries(space.index(1, 0), space.index(0, 0)) == 0.0);
  CHECK(t.entries(space.index(0, 1), space.index(0, 0)) == 0.0);

  // The support is exactly the adjacency of the state-update rule: row
  // (1,0) never receives mass, row (1,1) is reachable from every column.
  const TransitionMatrix t1 = build_transition(s, 1.0, space);
  CHECK(t1.entries(space.index(1, 1), space.index(0, 0)) == 1.0);
  CHECK(t1.entries.col(space.index(0, 0)).sum() == 1.0);
  CHECK(t1.entries.row(space.index(1, 0)).sum() == 0.0);
}

TEST_CASE("lprop transition routes mass to the incremented count") {
  const auto s = make_setting(SettingKind::LProp);
  const StateSpace space = build_state_space(s, 2);
  const TransitionMatrix t = build_transition(s, 0.3, space);
  for (int y = 0; y < 2; ++y) {
    CHECK(t.entries(space.index(0, 1), space.index(y, 1)) ==
          doctest::Approx(0.7));
    CHECK(t.entries(space.index(1, 2), space.index(y, 1)) ==
          doctest::Approx(0.3));
  }
}

TEST_CASE("transition columns are stochastic for every setting") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (SettingKind kind :
       {SettingKind::MultiIns, SettingKind::LProp, SettingKind::PairComp,
        SettingKind::PairSim, SettingKind::SimConf, SettingKind::ConfDiff,
        SettingKind::PosUnl, SettingKind::UnlUnl, SettingKind::SemiSup,
        SettingKind::PartialL, SettingKind::Noisy, SettingKind::CompL}) {
    const auto s = make_setting(kind);
    const StateSpace space = build_state_space(s, 5);
    const TransitionMatrix t = build_transition(s, unit(rng), space);
    for (int col = 0; col < space.size(); ++col)
      CHECK(t.entries.col(col).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("factorize splits the transition into the fixed-V form") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto s = make_setting(SettingKind::LProp);
  const StateSpace space = build_state_space(s, 6);
  for (int trial = 0; trial < 10; ++trial) {
    const TransitionMatrix t = build_transition(s, unit(rng), space);
    const LowRankFactors f = factorize(t, space);
    CHECK(f.rank == 7);
    const Eigen::MatrixXd rebuilt = f.U * f.V.transpose();
    CHECK((rebuilt - t.entries).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("factorize rejects a transition whose half-blocks differ") {
  const auto s = make_setting(SettingKind::MultiIns);
  const StateSpace space = build_state_space(s, 3);
  TransitionMatrix t = build_transition(s, 0.5, space);
  // Make the update depend on the previous label.
  t.entries(space.index(1, 1), space.index(1, 0)) -= 0.25;
  t.entries(space.index(0, 0), space.index(1, 0)) += 0.25;
  CHECK_THROWS_WITH_AS(factorize(t, space),
                       doctest::Contains("RankCheckFailed"), Error);
}

TEST_CASE("forward pass reproduces the enumerated OR marginals") {
  const auto s = make_setting(SettingKind::MultiIns);
  const Bag bag = multiins_bag({0.5, 0.5, 0.5}, 1);
  for (Mode mode : {Mode::Dense, Mode::LowRank}) {
    const auto msgs = forward_pass(s, bag, 0, mode);
    REQUIRE(msgs.size() == 3);
    const StateSpace space = build_state_space(s, 3);
    const Eigen::VectorXd& last = msgs.back().weights;
    const double z0 = last[space.index(0, 0)] + last[space.index(1, 0)];
    const double z1 = last[space.index(0, 1)] + last[space.index(1, 1)];
    CHECK(z0 == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(z1 == doctest::Approx(0.875).epsilon(1e-12));
  }
}

TEST_CASE("forward pass of a K=1 bag is the initial message") {
  const auto s = make_setting(SettingKind::MultiIns);
  const Bag bag = multiins_bag({0.7}, 1);
  const auto msgs = forward_pass(s, bag, 0, Mode::LowRank);
  REQUIRE(msgs.size() == 1);
  const StateSpace space = build_state_space(s, 1);
  CHECK(msgs[0].weights[space.index(1, 1)] == doctest::Approx(0.7));
  CHECK(msgs[0].log_scale == 0.0);
}

TEST_CASE("lprop forward matches the single-positive enumeration") {
  const auto s = make_setting(SettingKind::LProp);
  const Bag bag = test::make_bag({{0.2}, {0.5}, {0.9}}, {ExactEvidence{{1}}});
  const auto msgs = forward_pass(s, bag, 0, Mode::LowRank);
  const StateSpace space = build_state_space(s, 3);
  const Eigen::VectorXd& last = msgs.back().weights;
  const double z1 = last[space.index(0, 1)] + last[space.index(1, 1)];
  // 0.2*0.5*0.1 + 0.8*0.5*0.1 + 0.8*0.5*0.9
  CHECK(z1 == doctest::Approx(0.41).epsilon(1e-12));
}

TEST_CASE("multiins w=0 forces a zero posterior") {
  const auto s = make_setting(SettingKind::MultiIns);
  const Bag bag = multiins_bag({0.5, 0.25, 0.75}, 0);
  const LatentPosterior post = infer_bag(s, bag, Mode::LowRank);
  CHECK(post.table.maxCoeff() == 0.0);
  CHECK(std::exp(post.log_likelihood[0]) ==
        doctest::Approx(0.5 * 0.75 * 0.25).epsilon(1e-12));
}

TEST_CASE("lprop w=K forces every label positive") {
  const auto s = make_setting(SettingKind::LProp);
  const Bag bag = test::make_bag({{0.2}, {0.5}, {0.9}}, {ExactEvidence{{3}}});
  const LatentPosterior post = infer_bag(s, bag, Mode::Dense);
  for (int k = 0; k < 3; ++k)
    CHECK(post.table(k, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("beliefs on the uniform multiins bag give the 4/7 posterior") {
  const auto s = make_setting(SettingKind::MultiIns);
  const Bag bag = multiins_bag({0.5, 0.5, 0.5}, 1);
  for (Mode mode : {Mode::Dense, Mode::LowRank}) {
    const LatentPosterior post = infer_bag(s, bag, mode);
    for (int k = 0; k < 3; ++k)
      CHECK(post.table(k, 0) == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
    CHECK(std::exp(post.log_likelihood[0]) ==
          doctest::Approx(0.875).epsilon(1e-12));
  }
}

TEST_CASE("belief of a K=1 bag with w=1 collapses onto the positive state") {
  const auto s = make_setting(SettingKind::MultiIns);
  const Bag bag = multiins_bag({0.7}, 1);
  const ChainPlan plan = plan_chain(s, bag, 0);
  const auto fwd = forward_pass(plan, Mode::Dense);
  const auto bwd = backward_pass(plan, plan.terminal, Mode::Dense);
  const BeliefTable table = beliefs(plan, fwd, bwd);
  CHECK(table.nodes[0][plan.space.index(1, 1)] == doctest::Approx(1.0));
  CHECK(std::exp(table.log_likelihood) == doctest::Approx(0.7));
}

TEST_CASE("lprop posterior matches the enumeration-derived values") {
  const auto s = make_setting(SettingKind::LProp);
  const Bag bag = test::make_bag({{0.2}, {0.5}, {0.9}}, {ExactEvidence{{1}}});
  const LatentPosterior post = infer_bag(s, bag, Mode::LowRank);
  CHECK(post.table(0, 0) == doctest::Approx(0.01 / 0.41).epsilon(1e-9));
  CHECK(post.table(1, 0) == doctest::Approx(0.04 / 0.41).epsilon(1e-9));
  CHECK(post.table(2, 0) == doctest::Approx(0.36 / 0.41).epsilon(1e-9));
  CHECK(post.table(2, 0) == doctest::Approx(0.878049).epsilon(1e-6));
}

TEST_CASE("weak label likelihoods normalize over exhaustive hard labels") {
  const auto s = make_setting(SettingKind::MultiIns);
  const Bag bag = multiins_bag({0.5, 0.5, 0.5}, 1);
  const double p1 =
      std::exp(weak_label_likelihood(s, bag, 0, ExactEvidence{{1}},
                                     Mode::LowRank));
  const double p0 =
      std::exp(weak_label_likelihood(s, bag, 0, ExactEvidence{{0}},
                                     Mode::LowRank));
  CHECK(p1 == doctest::Approx(0.875).epsilon(1e-12));
  CHECK(p0 + p1 == doctest::Approx(1.0).epsilon(1e-9));

  const auto lp = make_setting(SettingKind::LProp);
  const Bag lbag = test::make_bag({{0.2}, {0.5}, {0.9}}, {ExactEvidence{{1}}});
  double total = 0.0;
  for (int w = 0; w <= 3; ++w)
    total += std::exp(
        weak_label_likelihood(lp, lbag, 0, ExactEvidence{{w}}, Mode::Dense));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("infeasible weak labels are reported") {
  const auto s = make_setting(SettingKind::LProp);
  const Bag bag = test::make_bag({{0.0}, {0.0}}, {ExactEvidence{{2}}});
  CHECK_THROWS_WITH_AS(infer_bag(s, bag, Mode::LowRank),
                       doctest::Contains("InfeasibleWeakLabel"), Error);
}

TEST_CASE("dense and low-rank paths agree on random bags") {
  std::mt19937_64 rng(17);
  for (SettingKind kind :
       {SettingKind::MultiIns, SettingKind::LProp, SettingKind::PairComp,
        SettingKind::PairSim, SettingKind::SimConf, SettingKind::ConfDiff,
        SettingKind::PosUnl, SettingKind::UnlUnl, SettingKind::SemiSup,
        SettingKind::PartialL, SettingKind::Noisy, SettingKind::CompL}) {
    const auto s = make_setting(kind);
    for (int trial = 0; trial < 25; ++trial) {
      const Bag bag = test::random_bag(s, rng, 8);
      const LatentPosterior dense = infer_bag(s, bag, Mode::Dense);
      const LatentPosterior lowrank = infer_bag(s, bag, Mode::LowRank);
      CHECK((dense.table - lowrank.table).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((dense.log_likelihood - lowrank.log_likelihood)
                .cwiseAbs()
                .maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("messages stay normalized and finite at K=500 with p=0.01") {
  const auto s = make_setting(SettingKind::MultiIns);
  Bag bag;
  bag.id = "long";
  bag.K = 500;
  bag.probs = Eigen::MatrixXd::Constant(500, 1, 0.01);
  bag.evidence = {ExactEvidence{{1}}};
  const LatentPosterior post = infer_bag(s, bag, Mode::LowRank);
  CHECK(std::isfinite(post.log_likelihood[0]));
  for (int k = 0; k < 500; ++k) {
    CHECK(std::isfinite(post.table(k, 0)));
    CHECK(post.table(k, 0) > 0.0);
  }
  const auto msgs = forward_pass(s, bag, 0, Mode::LowRank);
  CHECK(msgs.back().weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::isfinite(msgs.back().log_scale));
}

TEST_CASE("semisup clamps observed labels and passes predictions through") {
  const auto s = make_setting(SettingKind::SemiSup);
  const Bag labeled =
      test::make_bag({{0.9}, {0.4}, {0.3}}, {ExactEvidence{{1, 0, 1}}});
  const LatentPosterior post = infer_bag(s, labeled, Mode::LowRank);
  CHECK(post.table(0, 0) == 1.0);
  CHECK(post.table(1, 0) == 0.0);
  CHECK(post.table(2, 0) == 1.0);
  CHECK(std::exp(post.log_likelihood[0]) ==
        doctest::Approx(0.9 * 0.6 * 0.3).epsilon(1e-12));

  const Bag unlabeled =
      test::make_bag({{0.9}, {0.4}, {0.3}}, {UnlabeledEvidence{}});
  const LatentPosterior up = infer_bag(s, unlabeled, Mode::LowRank);
  CHECK(up.table(0, 0) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(up.table(1, 0) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("batched inference of one bag equals the single-bag path") {
  const auto s = make_setting(SettingKind::MultiIns);
  const Bag bag = multiins_bag({0.2, 0.8, 0.5}, 1);
  for (Mode mode : {Mode::Dense, Mode::LowRank}) {
    const auto items = batched_infer(s, {bag}, mode);
    REQUIRE(items.size() == 1);
    REQUIRE(items[0].ok());
    const LatentPosterior single = infer_bag(s, bag, mode);
    CHECK((items[0].posterior->table - single.table).cwiseAbs().maxCoeff() <=
          1e-12);
  }
}

TEST_CASE("batched inference matches sequential results on mixed bags") {
  std::mt19937_64 rng(23);
  for (SettingKind kind :
       {SettingKind::MultiIns, SettingKind::LProp, SettingKind::SemiSup}) {
    const auto s = make_setting(kind);
    std::vector<Bag> bags;
    for (int b = 0; b < 40; ++b) bags.push_back(test::random_bag(s, rng, 9, 2));
    const auto items = batched_infer(s, bags, Mode::LowRank);
    REQUIRE(items.size() == bags.size());
    for (size_t b = 0; b < bags.size(); ++b) {
      REQUIRE(items[b].ok());
      const LatentPosterior single = infer_bag(s, bags[b], Mode::Dense);
      CHECK((items[b].posterior->table - single.table).cwiseAbs().maxCoeff() <=
            1e-12);
      CHECK((items[b].posterior->log_likelihood - single.log_likelihood)
                .cwiseAbs()
                .maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("count-distribution bags match the weighted enumeration") {
  std::mt19937_64 rng(29);
  for (SettingKind kind : {SettingKind::PosUnl, SettingKind::UnlUnl}) {
    const auto s = make_setting(kind, {{"prior", 0.3}});
    for (int trial = 0; trial < 50; ++trial) {
      const Bag bag = test::random_bag(s, rng, 8);
      const LatentPosterior engine = infer_bag(s, bag, Mode::LowRank);
      const LatentPosterior truth = oracle::brute_posterior(s, bag);
      const auto diff = oracle::compare(engine, truth);
      CHECK(diff.max_abs <= 1e-9);
      CHECK(diff.max_loglik_diff <= 1e-9);
    }
  }
  // Unlabeled PosUnl bags resolve to the binomial prior terminal.
  const auto s = make_setting(SettingKind::PosUnl, {{"prior", 0.3}});
  const Bag bag = test::make_bag({{0.6}, {0.2}, {0.9}}, {UnlabeledEvidence{}});
  const auto diff = oracle::compare(infer_bag(s, bag, Mode::Dense),
                                     oracle::brute_posterior(s, bag));
  CHECK(diff.max_abs <= 1e-12);
}

TEST_CASE("a failing bag does not poison the rest of the batch") {
  const auto s = make_setting(SettingKind::LProp);
  std::vector<Bag> bags;
  bags.push_back(test::make_bag({{0.3}, {0.6}}, {ExactEvidence{{1}}}, "ok-1"));
  bags.push_back(
      test::make_bag({{0.0}, {0.0}}, {ExactEvidence{{2}}}, "bad"));
  bags.push_back(test::make_bag({{0.9}, {0.1}}, {ExactEvidence{{2}}}, "ok-2"));
  const auto items = batched_infer(s, bags, Mode::LowRank);
  CHECK(items[0].ok());
  CHECK_FALSE(items[1].ok());
  CHECK(items[1].bag_id == "bad");
  CHECK(items[1].error.find("Infeasible") != std::string::npos);
  REQUIRE(items[2].ok());
  const LatentPosterior single = infer_bag(s, bags[2], Mode::Dense);
  CHECK((items[2].posterior->table - single.table).cwiseAbs().maxCoeff() <=
        1e-12);
}

TEST_SUITE_END();
