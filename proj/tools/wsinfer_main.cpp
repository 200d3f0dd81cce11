// Command line front end: latent-posterior inference, brute-force
// verification, synthetic data generation, EM training, and runtime
// benchmarking over JSONL bag records.
//
// Exit codes: 0 success, 1 usage or parse failure, 2 infeasible bags,
// 3 verification failure.

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "wsinfer/bench.hpp"
#include "wsinfer/jsonl.hpp"
#include "wsinfer/loop.hpp"
#include "wsinfer/oracle.hpp"
#include "wsinfer/synth.hpp"
#include "wsinfer/trainer.hpp"

namespace {

using namespace wsinfer;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitVerification = 3;

std::uint64_t env_seed_fallback(std::uint64_t seed, bool seed_given) {
  if (seed_given) return seed;
  if (const char* env = std::getenv("WSINFER_SEED"))
    return std::strtoull(env, nullptr, 10);
  return seed;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

std::vector<Bag> read_bags(const std::string& path,
                           const SettingDescriptor& setting) {
  std::vector<Bag> bags;
  for (const std::string& line : read_lines(path))
    bags.push_back(jsonl::parse_bag(line, setting));
  return bags;
}

std::optional<ClassTransitionMatrix> maybe_load_transition(
    const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_class_transition(path);
}

// Ordered fan-out across bags: results land at their input index no
// matter which worker produced them.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

struct InferOptions {
  std::string setting;
  std::string input;
  std::string output;
  std::string mode = "lowrank";
  std::string class_transition;
  std::string errors;
  double prior = 0.5;
  int threads = 1;
};

int cmd_infer(const InferOptions& opt) {
  const SettingDescriptor setting = make_setting(
      setting_kind_from_name(opt.setting), {{"prior", opt.prior}});
  const Mode mode = mode_from_name(opt.mode);
  const auto t_class = maybe_load_transition(opt.class_transition);
  const std::vector<Bag> bags = read_bags(opt.input, setting);

  struct Result {
    std::optional<LatentPosterior> posterior;
    std::string error;
  };
  std::vector<Result> results(bags.size());
  parallel_for(static_cast<int>(bags.size()), opt.threads, [&](int i) {
    try {
      if (t_class)
        results[static_cast<size_t>(i)].posterior =
            multilabel_posterior(setting, bags[static_cast<size_t>(i)],
                                 *t_class, mode);
      else
        results[static_cast<size_t>(i)].posterior =
            infer_bag(setting, bags[static_cast<size_t>(i)], mode);
    } catch (const Error& e) {
      results[static_cast<size_t>(i)].error = e.what();
    }
  });

  std::ofstream out(opt.output, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + opt.output);
  std::ofstream error_file;
  std::ostream* err_stream = &std::cerr;
  if (!opt.errors.empty()) {
    error_file.open(opt.errors, std::ios::binary);
    if (!error_file)
      throw Error(ErrorCode::IoFailure, "cannot open " + opt.errors);
    err_stream = &error_file;
  }

  int failures = 0;
  for (size_t i = 0; i < bags.size(); ++i) {
    if (results[i].posterior) {
      out << jsonl::posterior_to_json(bags[i].id, *results[i].posterior)
          << "\n";
    } else {
      ++failures;
      json e;
      e["id"] = bags[i].id;
      e["error"] = results[i].error;
      (*err_stream) << e.dump() << "\n";
    }
  }
  return failures > 0 ? kExitInfeasible : kExitOk;
}

struct OracleCheckOptions {
  std::string setting;
  std::string input;
  std::string mode = "lowrank";
  std::string class_transition;
  double prior = 0.5;
  double tolerance = 1e-9;
  int max_instances = oracle::kEnumerationCap;
};

int cmd_oracle_check(const OracleCheckOptions& opt) {
  const SettingDescriptor setting = make_setting(
      setting_kind_from_name(opt.setting), {{"prior", opt.prior}});
  const Mode mode = mode_from_name(opt.mode);
  const auto t_class = maybe_load_transition(opt.class_transition);
  const Eigen::MatrixXd* channel = t_class ? &t_class->entries : nullptr;

  double max_abs = 0.0, mean_abs = 0.0, max_ll = 0.0;
  int count = 0;
  for (const Bag& bag : read_bags(opt.input, setting)) {
    if (!setting.category_chain() && bag.K > opt.max_instances)
      throw Error(ErrorCode::CapExceeded,
                  "bag " + bag.id + " exceeds --max-instances");
    const LatentPosterior engine = infer_bag(setting, bag, mode, channel);
    const LatentPosterior truth =
        oracle::brute_posterior(setting, bag, channel, opt.max_instances);
    const oracle::DiffReport diff = oracle::compare(engine, truth);
    max_abs = std::max(max_abs, diff.max_abs);
    max_ll = std::max(max_ll, diff.max_loglik_diff);
    mean_abs += diff.mean_abs;
    ++count;
  }
  if (count > 0) mean_abs /= count;
  std::cout << "bags=" << count << " max_abs_diff=" << max_abs
            << " mean_abs_diff=" << mean_abs
            << " max_loglik_diff=" << max_ll << "\n";
  const bool pass = max_abs <= opt.tolerance && max_ll <= opt.tolerance;
  return pass ? kExitOk : kExitVerification;
}

struct GenOptions {
  std::string setting;
  std::string out;
  std::string truth;
  std::string class_transition;
  synth::GenSpec spec;
  double noise_rate = -1.0;  // builds a symmetric channel when >= 0
  bool emit_probs = true;
};

int cmd_gen(const GenOptions& opt, bool seed_given) {
  const SettingDescriptor setting = make_setting(
      setting_kind_from_name(opt.setting),
      {{"prior", opt.spec.positive_prior}, {"prior2", opt.spec.prior2}});
  synth::GenSpec spec = opt.spec;
  spec.seed = env_seed_fallback(spec.seed, seed_given);

  std::optional<ClassTransitionMatrix> t_class =
      maybe_load_transition(opt.class_transition);
  if (!t_class && opt.noise_rate >= 0.0)
    t_class = symmetric_noise_transition(spec.n_classes, opt.noise_rate);

  json echo;
  echo["command"] = "gen";
  echo["setting"] = opt.setting;
  echo["n_bags"] = spec.n_bags;
  echo["instances_mean"] = spec.instances_mean;
  echo["instances_std"] = spec.instances_std;
  echo["classes"] = spec.n_classes;
  echo["feature_dim"] = spec.feature_dim;
  echo["separation"] = spec.class_separation;
  echo["seed"] = spec.seed;
  std::cerr << echo.dump() << "\n";

  const synth::Dataset data =
      synth::gen_dataset(setting, spec, t_class ? &*t_class : nullptr);
  std::ofstream out(opt.out, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + opt.out);
  for (const Bag& bag : data.bags) {
    Bag record = bag;
    if (!opt.emit_probs) record.probs.resize(0, 0);
    out << jsonl::bag_to_json(record, setting) << "\n";
  }
  if (!opt.truth.empty()) {
    std::ofstream tout(opt.truth, std::ios::binary);
    if (!tout) throw Error(ErrorCode::IoFailure, "cannot open " + opt.truth);
    for (size_t b = 0; b < data.bags.size(); ++b)
      tout << jsonl::truth_to_json(data.bags[b].id, data.truth[b]) << "\n";
  }
  return kExitOk;
}

struct TrainOptions {
  std::string setting;
  std::string input;
  std::string truth;
  std::string out;
  std::string algorithm = "em";
  std::string mode = "lowrank";
  std::string class_transition;
  trainer::TrainConfig config;
};

Eigen::MatrixXi parse_truth_labels(const std::string& line) {
  json j = json::parse(line);
  const auto& rows = j.at("labels");
  Eigen::MatrixXi m(rows.size(), rows[0].size());
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r][c].get<int>();
  return m;
}

int cmd_train(const TrainOptions& opt, bool seed_given) {
  const SettingDescriptor setting =
      make_setting(setting_kind_from_name(opt.setting));
  trainer::TrainConfig config = opt.config;
  config.seed = env_seed_fallback(config.seed, seed_given);
  config.mode = mode_from_name(opt.mode);
  const auto t_class = maybe_load_transition(opt.class_transition);

  synth::Dataset data;
  data.bags = read_bags(opt.input, setting);
  if (!opt.truth.empty()) {
    for (const std::string& line : read_lines(opt.truth))
      data.truth.push_back(parse_truth_labels(line));
    if (data.truth.size() != data.bags.size())
      throw Error(ErrorCode::ShapeMismatch,
                  "truth file does not match the bag count");
  }

  json echo;
  echo["command"] = "train";
  echo["setting"] = opt.setting;
  echo["algorithm"] = opt.algorithm;
  echo["epochs"] = config.epochs;
  echo["learning_rate"] = config.learning_rate;
  echo["lambda"] = config.lambda;
  echo["seed"] = config.seed;
  echo["mode"] = mode_name(config.mode);
  std::cerr << echo.dump() << "\n";

  trainer::TrainResult result;
  if (opt.algorithm == "em") {
    result = trainer::train_em(setting, data, config,
                               t_class ? &*t_class : nullptr);
  } else if (opt.algorithm == "supervised") {
    if (data.truth.empty())
      throw Error(ErrorCode::BadParameter,
                  "--algorithm supervised requires --truth");
    result = trainer::train_supervised(data, config);
  } else {
    throw Error(ErrorCode::BadParameter,
                "unknown algorithm '" + opt.algorithm + "'");
  }

  json model;
  model["setting"] = opt.setting;
  model["seed"] = config.seed;
  model["feature_dim"] = result.model.feature_dim();
  model["classes"] = result.model.n_classes();
  json weights = json::array();
  for (Eigen::Index r = 0; r < result.model.weights.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < result.model.weights.cols(); ++c)
      row.push_back(result.model.weights(r, c));
    weights.push_back(std::move(row));
  }
  model["weights"] = weights;
  std::ofstream out(opt.out, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + opt.out);
  out << model.dump() << "\n";

  json metrics;
  metrics["final_ure"] = result.trace.back().ure;
  metrics["final_total"] = result.trace.back().total;
  metrics["epochs"] = result.trace.size();
  if (!data.truth.empty())
    metrics["accuracy"] = trainer::evaluate(result.model, data).accuracy;
  std::cout << metrics.dump() << "\n";
  return kExitOk;
}

struct BenchOptions {
  bench::BenchRequest request;
  std::string setting = "multiins";
  std::string modes = "dense,lowrank";
  std::string k_values = "10,20,40,80";
  std::string batches = "1";
  std::string classes = "1";
  std::string out;
  bool no_verify = false;
};

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  if (out.empty()) throw Error(ErrorCode::BadParameter, "empty list");
  return out;
}

std::vector<std::string> parse_str_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

int cmd_bench(BenchOptions opt, bool seed_given) {
  opt.request.setting = setting_kind_from_name(opt.setting);
  opt.request.k_list = parse_int_list(opt.k_values);
  opt.request.batch_list = parse_int_list(opt.batches);
  opt.request.class_list = parse_int_list(opt.classes);
  opt.request.modes = parse_str_list(opt.modes);
  opt.request.verify = !opt.no_verify;
  opt.request.seed = env_seed_fallback(opt.request.seed, seed_given);

  json echo;
  echo["command"] = "bench";
  echo["setting"] = opt.setting;
  echo["K"] = opt.request.k_list;
  echo["batch"] = opt.request.batch_list;
  echo["classes"] = opt.request.class_list;
  echo["modes"] = opt.request.modes;
  echo["repeats"] = opt.request.repeats;
  echo["seed"] = opt.request.seed;
  std::cerr << echo.dump() << "\n";

  const auto records = bench::time_inference(opt.request);
  if (!opt.out.empty()) bench::emit_report(records, opt.out);

  // Fitted scaling exponents per mode, when the sweep allows a fit.
  if (opt.request.k_list.size() >= 3 && opt.request.batch_list.size() == 1 &&
      opt.request.class_list.size() == 1) {
    for (const std::string& mode : opt.request.modes) {
      std::vector<double> sizes, times;
      for (const auto& r : records)
        if (r.mode == mode) {
          sizes.push_back(r.K);
          times.push_back(r.seconds);
        }
      std::cout << "slope " << mode << " "
                << bench::fit_scaling_exponent(sizes, times) << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent instance-label posteriors under weak supervision"};
  app.require_subcommand(1);

  InferOptions infer_opt;
  auto* infer = app.add_subcommand("infer", "Compute latent posteriors");
  infer->add_option("--setting", infer_opt.setting)->required();
  infer->add_option("--input", infer_opt.input)->required();
  infer->add_option("--output", infer_opt.output)->required();
  infer->add_option("--mode", infer_opt.mode);
  infer->add_option("--class-transition", infer_opt.class_transition);
  infer->add_option("--errors", infer_opt.errors);
  infer->add_option("--prior", infer_opt.prior);
  infer->add_option("--threads", infer_opt.threads);

  OracleCheckOptions check_opt;
  auto* check = app.add_subcommand(
      "oracle-check", "Verify posteriors against direct enumeration");
  check->add_option("--setting", check_opt.setting)->required();
  check->add_option("--input", check_opt.input)->required();
  check->add_option("--mode", check_opt.mode);
  check->add_option("--class-transition", check_opt.class_transition);
  check->add_option("--prior", check_opt.prior);
  check->add_option("--tolerance", check_opt.tolerance);
  check->add_option("--max-instances", check_opt.max_instances);

  GenOptions gen_opt;
  bool gen_seed_given = false;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--setting", gen_opt.setting)->required();
  gen->add_option("--out", gen_opt.out)->required();
  gen->add_option("--truth", gen_opt.truth);
  gen->add_option("--n-bags", gen_opt.spec.n_bags);
  gen->add_option("--instances-mean", gen_opt.spec.instances_mean);
  gen->add_option("--instances-std", gen_opt.spec.instances_std);
  gen->add_option("--classes", gen_opt.spec.n_classes);
  gen->add_option("--feature-dim", gen_opt.spec.feature_dim);
  gen->add_option("--separation", gen_opt.spec.class_separation);
  gen->add_option("--seed", gen_opt.spec.seed)
      ->each([&](const std::string&) { gen_seed_given = true; });
  gen->add_option("--prior", gen_opt.spec.positive_prior);
  gen->add_option("--prior2", gen_opt.spec.prior2);
  gen->add_option("--partial-ratio", gen_opt.spec.partial_ratio);
  gen->add_option("--labeled-fraction", gen_opt.spec.labeled_fraction);
  gen->add_option("--soft-noise", gen_opt.spec.soft_noise_sigma);
  gen->add_option("--noise", gen_opt.noise_rate);
  gen->add_option("--class-transition", gen_opt.class_transition);
  gen->add_flag("--no-probs{false}", gen_opt.emit_probs,
                "omit calibrated probabilities from the records");

  TrainOptions train_opt;
  bool train_seed_given = false;
  auto* train = app.add_subcommand("train", "EM-train a linear model");
  train->add_option("--setting", train_opt.setting)->required();
  train->add_option("--input", train_opt.input)->required();
  train->add_option("--out", train_opt.out)->required();
  train->add_option("--truth", train_opt.truth);
  train->add_option("--algorithm", train_opt.algorithm);
  train->add_option("--mode", train_opt.mode);
  train->add_option("--class-transition", train_opt.class_transition);
  train->add_option("--epochs", train_opt.config.epochs);
  train->add_option("--lr", train_opt.config.learning_rate);
  train->add_option("--lambda", train_opt.config.lambda);
  train->add_option("--seed", train_opt.config.seed)
      ->each([&](const std::string&) { train_seed_given = true; });

  BenchOptions bench_opt;
  bool bench_seed_given = false;
  auto* benchcmd = app.add_subcommand("bench", "Time the inference kernels");
  benchcmd->add_option("--setting", bench_opt.setting);
  benchcmd->add_option("--K", bench_opt.k_values);
  benchcmd->add_option("--modes", bench_opt.modes);
  benchcmd->add_option("--batch", bench_opt.batches);
  benchcmd->add_option("--classes", bench_opt.classes);
  benchcmd->add_option("--repeats", bench_opt.request.repeats);
  benchcmd->add_option("--seed", bench_opt.request.seed)
      ->each([&](const std::string&) { bench_seed_given = true; });
  benchcmd->add_option("--out", bench_opt.out);
  benchcmd->add_flag("--no-verify", bench_opt.no_verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*infer) return cmd_infer(infer_opt);
    if (*check) return cmd_oracle_check(check_opt);
    if (*gen) return cmd_gen(gen_opt, gen_seed_given);
    if (*train) return cmd_train(train_opt, train_seed_given);
    if (*benchcmd) return cmd_bench(bench_opt, bench_seed_given);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::InfeasibleBag:
      case ErrorCode::InfeasibleWeakLabel:
        return kExitInfeasible;
      default:
        return kExitUsage;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
