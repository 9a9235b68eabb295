#pragma once
#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace thermal {

// Rollout-stage buckets, step indices (1-based): [1,5) [5,10) [10,20) [20,50)
// [50,100].
struct StageBucket {
  std::string label;
  int lo = 0, hi = 0;  // steps lo..hi inclusive
  int frames = 0;
  double rmse_mean = 0, rmse_std = 0;
  double npd_mean = 0, npd_std = 0;
  double ssim_mean = 0, ssim_std = 0;
};

struct EvalTiming {
  double surrogate_ms_per_horizon = 0;
  double surrogate_ms_per_map = 0;
  double solver_ms_per_equivalent_horizon = 0;
  double speedup_ratio = 0;  // solver / surrogate
  int horizon_steps = 0;
  double horizon_s = 0;
  int runs = 0;  // median-of
};

struct EvalReport {
  std::string model_hash;
  std::string dataset_hash;
  size_t model_params = 0;
  std::string split;
  int rollout_steps = 0;
  int n_samples = 0;
  std::vector<StageBucket> buckets;
  int agg_frames = 0;
  double agg_rmse_mean = 0, agg_rmse_std = 0;
  double agg_npd_mean = 0, agg_npd_std = 0;
  double agg_ssim_mean = 0, agg_ssim_std = 0;
  double full_scale_rmse_pct = 0;  // aggregate RMSE / normalization range * 100
  Normalization normalization;
  std::vector<std::pair<int, int>> conditioning;  // (sample, partner)
  std::vector<std::string> warnings;
  std::optional<EvalTiming> timing;
};

std::string model_hash(const SurrogateModel& m);

// Free-running rollout evaluation of `model` over the chosen split of `man`:
// each sample is rolled out from frame 1 (the first frame that shows the
// sample's power pattern; frame 0 is the uniform initial condition) with a
// train-split conditioning partner (matched dominant class, then nearest
// budget, seeded ties) and compared frame-by-frame against ground truth in
// stage buckets; prediction step k is scored against truth frame 1+k.
EvalReport evaluate_model(const SurrogateModel& model, const DatasetManifest& man,
                          const std::string& split, int max_steps, uint64_t seed);

// Single-threaded wall-time comparison over the same physical horizon:
// surrogate rollout vs the implicit solver, median of `runs` (>= 5) each.
EvalTiming benchmark_speed(const SurrogateModel& model, const DatasetManifest& man,
                           int horizon_steps, int runs, uint64_t seed);

void write_report(const EvalReport& rep, const std::string& path);

}  // namespace thermal
