#include <doctest.h>

#include "helpers.hpp"
#include "wsinfer/jsonl.hpp"
#include "wsinfer/oracle.hpp"

using namespace wsinfer;

TEST_SUITE_BEGIN("jsonl");

TEST_CASE("bag records survive a serialize/parse round trip") {
  std::mt19937_64 rng(3);
  for (SettingKind kind :
       {SettingKind::MultiIns, SettingKind::LProp, SettingKind::PairSim,
        SettingKind::SimConf, SettingKind::ConfDiff, SettingKind::PosUnl,
        SettingKind::SemiSup, SettingKind::PartialL, SettingKind::Noisy,
        SettingKind::CompL}) {
    const auto s = make_setting(kind);
    for (int trial = 0; trial < 10; ++trial) {
      const Bag bag = test::random_bag(s, rng, 5, 2);
      const std::string line = jsonl::bag_to_json(bag, s);
      const Bag parsed = jsonl::parse_bag(line, s);
      CHECK(parsed.id == bag.id);
      CHECK(parsed.K == bag.K);
      REQUIRE(parsed.probs.size() == bag.probs.size());
      CHECK((parsed.probs - bag.probs).cwiseAbs().maxCoeff() == 0.0);
      // Same inference result implies the evidence round-tripped.
      const LatentPosterior a = infer_bag(s, bag, Mode::LowRank);
      const LatentPosterior b = infer_bag(s, parsed, Mode::LowRank);
      CHECK((a.table - b.table).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("scalar weak labels parse for single-class bags") {
  const auto s = make_setting(SettingKind::MultiIns);
  const Bag bag =
      jsonl::parse_bag(R"({"id":"b1","probs":[[0.5],[0.25]],"weak":1})", s);
  CHECK(bag.K == 2);
  CHECK(std::get<ExactEvidence>(bag.evidence[0]).value() == 1);
}

TEST_CASE("count distributions parse from arrays of reals") {
  const auto s = make_setting(SettingKind::PosUnl);
  const Bag bag = jsonl::parse_bag(
      R"({"id":"b2","probs":[[0.5],[0.25]],"weak":[0.5,0.25,0.25]})", s);
  const auto& cd = std::get<CountDistributionEvidence>(bag.evidence[0]);
  CHECK(cd.dist.size() == 3);
  CHECK(cd.dist[1] == 0.25);
}

TEST_CASE("malformed records raise ParseError") {
  const auto s = make_setting(SettingKind::MultiIns);
  CHECK_THROWS_WITH_AS(jsonl::parse_bag("{not json", s),
                       doctest::Contains("ParseError"), Error);
  CHECK_THROWS_AS(jsonl::parse_bag(R"({"id":"x","weak":1})", s), Error);
  CHECK_THROWS_AS(
      jsonl::parse_bag(R"({"probs":[[0.5]],"weak":1})", s), Error);
  CHECK_THROWS_AS(
      jsonl::parse_bag(R"({"id":"x","probs":[[0.5]],"weak":"one"})", s),
      Error);
  CHECK_THROWS_AS(
      jsonl::parse_bag(
          R"({"id":"x","setting":"lprop","probs":[[0.5]],"weak":1})", s),
      Error);
}

TEST_CASE("posterior records serialize all fields") {
  const auto s = make_setting(SettingKind::MultiIns);
  const Bag bag = test::make_bag({{0.5}, {0.5}}, {ExactEvidence{{1}}}, "p1");
  const LatentPosterior post = infer_bag(s, bag, Mode::Dense);
  const std::string line = jsonl::posterior_to_json(bag.id, post);
  CHECK(line.find("\"id\":\"p1\"") != std::string::npos);
  CHECK(line.find("\"posterior\"") != std::string::npos);
  CHECK(line.find("\"log_likelihood\"") != std::string::npos);
}

TEST_SUITE_END();
