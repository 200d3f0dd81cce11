#include "wsinfer/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "wsinfer/chain.hpp"
#include "wsinfer/oracle.hpp"
#include "wsinfer/synth.hpp"

namespace wsinfer {
namespace bench {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Random bags with feasible weak labels for one (setting, K, classes)
// cell. Bag sizes are fixed to K so the scaling axis is clean.
std::vector<Bag> make_bags(const SettingDescriptor& setting, int K,
                           int classes, int count, std::uint64_t seed) {
  std::vector<Bag> bags;
  bags.reserve(static_cast<size_t>(count));
  synth::GenSpec spec;
  spec.n_classes = classes;
  spec.feature_dim = std::max(classes, 2);
  for (int b = 0; b < count; ++b) {
    std::mt19937_64 rng(synth::derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Bag bag;
    bag.id = "bench-" + std::to_string(b);
    bag.K = setting.pairwise() ? 2 : (setting.category_chain() ? 1 : K);
    const int C = setting.category_chain() ? std::max(classes, 2) : classes;
    bag.probs.resize(bag.K, C);
    Eigen::MatrixXi labels(bag.K, C);
    for (int k = 0; k < bag.K; ++k)
      for (int c = 0; c < C; ++c) {
        bag.probs(k, c) = 0.05 + 0.9 * unit(rng);
        labels(k, c) = unit(rng) < bag.probs(k, c) ? 1 : 0;
      }
    if (setting.category_chain()) {
      labels.setZero();
      labels(0, static_cast<int>(unit(rng) * C) % C) = 1;
    }
    synth::GenSpec agg_spec = spec;
    switch (setting.kind()) {
      case SettingKind::PosUnl:
        bag.evidence.assign(static_cast<size_t>(C), UnlabeledEvidence{});
        break;
      case SettingKind::UnlUnl: {
        const Eigen::VectorXd pmf = binomial_pmf(bag.K, 0.4);
        CountDistributionEvidence cd;
        cd.dist.assign(pmf.data(), pmf.data() + pmf.size());
        bag.evidence.assign(static_cast<size_t>(C), cd);
        break;
      }
      default:
        bag.evidence = synth::aggregate(setting, labels, agg_spec, nullptr, rng);
        break;
    }
    bags.push_back(std::move(bag));
  }
  return bags;
}

void verify_cell(const SettingDescriptor& setting, const std::vector<Bag>& bags,
                 const std::string& mode) {
  // Never time an incorrect kernel: check against the enumeration oracle
  // when feasible, otherwise cross-check the two message-passing paths.
  const Bag& bag = bags.front();
  if (mode == "oracle") return;
  const Mode m = mode == "dense" ? Mode::Dense : Mode::LowRank;
  const LatentPosterior got = infer_bag(setting, bag, m);
  if (bag.K <= oracle::kEnumerationCap) {
    const LatentPosterior want = oracle::brute_posterior(setting, bag);
    const auto diff = oracle::compare(got, want);
    if (diff.max_abs > 1e-9 || diff.max_loglik_diff > 1e-9)
      throw Error(ErrorCode::NormalizationFailure,
                  "kernel disagrees with the oracle before timing");
  } else {
    const LatentPosterior dense = infer_bag(setting, bag, Mode::Dense);
    const auto diff = oracle::compare(got, dense);
    if (diff.max_abs > 1e-9)
      throw Error(ErrorCode::NormalizationFailure,
                  "dense and low-rank paths disagree before timing");
  }
}

void run_once(const SettingDescriptor& setting, const std::vector<Bag>& bags,
              const std::string& mode) {
  if (mode == "oracle") {
    for (const Bag& bag : bags) oracle::brute_posterior(setting, bag);
    return;
  }
  if (mode == "lowrank-batched") {
    const auto items = batched_infer(setting, bags, Mode::LowRank);
    for (const auto& item : items)
      if (!item.ok())
        throw Error(ErrorCode::InfeasibleBag, "bench bag failed: " + item.error);
    return;
  }
  const Mode m = mode_from_name(mode);
  for (const Bag& bag : bags) infer_bag(setting, bag, m);
}

}  // namespace

std::vector<BenchRecord> time_inference(const BenchRequest& request) {
  if (request.repeats < 3)
    throw Error(ErrorCode::BadParameter, "repeats must be >= 3");
  const SettingDescriptor setting = make_setting(request.setting);

  struct Cell {
    int K = 0, batch = 0, classes = 0;
    std::string mode;
    std::vector<Bag> bags;
    int inner = 1;
    std::vector<double> samples;
  };
  std::vector<Cell> cells;
  for (int classes : request.class_list)
    for (int batch : request.batch_list)
      for (int K : request.k_list)
        for (const std::string& mode : request.modes) {
          if (mode == "oracle" && K > oracle::kEnumerationCap)
            throw Error(ErrorCode::CapExceeded,
                        "oracle mode capped at K <= " +
                            std::to_string(oracle::kEnumerationCap));
          Cell cell;
          cell.K = K;
          cell.batch = batch;
          cell.classes = classes;
          cell.mode = mode;
          cell.bags = make_bags(
              setting, K, classes, batch,
              synth::derive_seed(request.seed,
                                 static_cast<std::uint64_t>(K * 131 + batch)));
          if (request.verify) verify_cell(setting, cell.bags, mode);
          cells.push_back(std::move(cell));
        }

  // Calibrate inner repetition counts against the clock floor, then
  // interleave: each round touches every cell once, so slow machine-speed
  // drift hits all cells alike instead of biasing the scaling fit. One
  // warm-up round is discarded; the median over rounds is recorded.
  for (Cell& cell : cells) {
    run_once(setting, cell.bags, cell.mode);
    const auto t0 = Clock::now();
    run_once(setting, cell.bags, cell.mode);
    const double est =
        std::chrono::duration<double>(Clock::now() - t0).count();
    cell.inner = std::max(
        1, static_cast<int>(request.min_measure_seconds / std::max(est, 1e-9)));
    cell.samples.reserve(static_cast<size_t>(request.repeats));
  }
  for (int round = 0; round < request.repeats; ++round)
    for (Cell& cell : cells) {
      const auto start = Clock::now();
      for (int i = 0; i < cell.inner; ++i)
        run_once(setting, cell.bags, cell.mode);
      const double elapsed =
          std::chrono::duration<double>(Clock::now() - start).count();
      cell.samples.push_back(elapsed / cell.inner);
    }

  std::vector<BenchRecord> records;
  records.reserve(cells.size());
  for (Cell& cell : cells) {
    BenchRecord record;
    record.setting = setting_kind_name(request.setting);
    record.K = cell.K;
    record.batch = cell.batch;
    record.classes = cell.classes;
    record.mode = cell.mode;
    record.seconds = median(std::move(cell.samples));
    record.repeats = request.repeats;
    records.push_back(std::move(record));
  }
  return records;
}

double fit_scaling_exponent(const std::vector<double>& sizes,
                            const std::vector<double>& times) {
  if (sizes.size() != times.size() || sizes.size() < 3)
    throw Error(ErrorCode::DegenerateFit, "need at least 3 matched points");
  for (size_t i = 0; i + 1 < sizes.size(); ++i)
    if (!(sizes[i] < sizes[i + 1]))
      throw Error(ErrorCode::DegenerateFit, "sizes must strictly increase");
  const size_t n = sizes.size();
  double mx = 0.0, my = 0.0;
  std::vector<double> lx(n), ly(n);
  for (size_t i = 0; i < n; ++i) {
    if (!(sizes[i] > 0.0) || !(times[i] > 0.0))
      throw Error(ErrorCode::DegenerateFit, "sizes and times must be positive");
    lx[i] = std::log(sizes[i]);
    ly[i] = std::log(times[i]);
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0)
    throw Error(ErrorCode::DegenerateFit, "zero variance in sizes");
  return sxy / sxx;
}

std::string report_csv(const std::vector<BenchRecord>& records) {
  if (records.empty())
    throw Error(ErrorCode::DegenerateFit, "no records to report");
  std::string out = "setting,K,batch,classes,mode,seconds,repeats\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.seconds);
    out += r.setting + "," + std::to_string(r.K) + "," +
           std::to_string(r.batch) + "," + std::to_string(r.classes) + "," +
           r.mode + "," + buf + "," + std::to_string(r.repeats) + "\n";
  }
  return out;
}

void emit_report(const std::vector<BenchRecord>& records,
                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  out << report_csv(records);
  if (!out) throw Error(ErrorCode::IoFailure, "failed writing " + path);
}

}  // namespace bench
}  // namespace wsinfer
