#ifndef WSINFER_BENCH_HPP
#define WSINFER_BENCH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "wsinfer/setting.hpp"

namespace wsinfer {
namespace bench {

struct BenchRecord {
  std::string setting;
  int K = 0;
  int batch = 0;
  int classes = 0;
  std::string mode;  // dense | lowrank | lowrank-batched | oracle
  double seconds = 0.0;  // median seconds per iteration (one pass over the
                         // generated bag set)
  int repeats = 0;
};

struct BenchRequest {
  SettingKind setting = SettingKind::MultiIns;
  std::vector<int> k_list;
  std::vector<int> batch_list = {1};
  std::vector<int> class_list = {1};
  std::vector<std::string> modes = {"dense", "lowrank"};
  int repeats = 5;
  std::uint64_t seed = 1;
  // Timed regions shorter than this are repeated internally and averaged,
  // keeping slope fits out of the clock-resolution floor.
  double min_measure_seconds = 2e-3;
  bool verify = true;  // cross-check kernels before timing them
};

// Median-of-repeats timings over freshly generated random bags, one
// warm-up discarded, single-threaded. Kernels are verified against the
// enumeration oracle (K within cap) or against the dense path before any
// timing is recorded. Oracle mode refuses K beyond the enumeration cap.
std::vector<BenchRecord> time_inference(const BenchRequest& request);

// Least-squares slope of log(time) against log(size).
double fit_scaling_exponent(const std::vector<double>& sizes,
                            const std::vector<double>& times);

// CSV with a fixed header and deterministic formatting.
void emit_report(const std::vector<BenchRecord>& records,
                 const std::string& path);
std::string report_csv(const std::vector<BenchRecord>& records);

}  // namespace bench
}  // namespace wsinfer

#endif
