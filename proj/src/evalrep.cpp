#include "evalrep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

#include "hash.hpp"
#include "rng.hpp"
#include "solver.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace thermal {

namespace {

struct Acc {
  std::vector<double> rmse, npd, ssim;
  void add(const MetricReport& r) {
    rmse.push_back(r.rmse);
    npd.push_back(r.npd);
    ssim.push_back(r.ssim);
  }
};

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  if (v.empty()) {
    mean = 0;
    sd = 0;
    return;
  }
  double s = 0;
  for (double x : v) s += x;
  mean = s / (double)v.size();
  double q = 0;
  for (double x : v) q += (x - mean) * (x - mean);
  sd = std::sqrt(q / (double)v.size());
}

// Same partner preference as training-pair construction: matched dominant
// class, then nearest budget, seeded ties; the pool here is the train split.
int pick_partner(const DatasetManifest& man, int qid, const std::vector<int>& pool,
                 uint64_t seed) {
  const SampleRecord& q = man.sample(qid);
  std::vector<int> cand;
  for (int id : pool)
    if (id != qid) cand.push_back(id);
  if (cand.empty()) return qid;
  std::vector<int> matched;
  for (int id : cand)
    if (man.sample(id).dominant == q.dominant) matched.push_back(id);
  if (!matched.empty()) cand = matched;
  double best = std::numeric_limits<double>::infinity();
  for (int id : cand) best = std::min(best, std::abs(man.sample(id).budget_w - q.budget_w));
  std::vector<int> tied;
  for (int id : cand)
    if (std::abs(man.sample(id).budget_w - q.budget_w) <= best) tied.push_back(id);
  if (tied.size() == 1) return tied[0];
  std::mt19937_64 eng(make_rng(derive_seed(seed, (uint64_t)qid)));
  return tied[std::uniform_int_distribution<size_t>(0, tied.size() - 1)(eng)];
}

std::vector<StageBucket> empty_buckets() {
  return {
      {"1-5", 1, 4}, {"5-10", 5, 9}, {"10-20", 10, 19}, {"20-50", 20, 49}, {"50-100", 50, 100},
  };
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string model_hash(const SurrogateModel& m) {
  const ArchConfig& a = m.arch();
  std::string s;
  s += std::to_string(a.base_channels) + "/" + std::to_string(a.depth) + "/";
  for (int d : a.dilation_rates) s += std::to_string(d) + ",";
  s += "/" + std::to_string(a.pos_dim) + "/" +
       (a.concat_mode == ConcatMode::PixelLevel ? "px" : "ft") + "/" +
       std::to_string((int)a.use_pair_conditioning) + std::to_string((int)a.shared_encoders) +
       std::to_string((int)a.bilinear_decoder);
  uint64_t h = fnv1a64(s);
  h ^= fnv1a64(m.params().data(), m.params().size() * sizeof(double));
  return hash_hex(h);
}

EvalReport evaluate_model(const SurrogateModel& model, const DatasetManifest& man,
                          const std::string& split, int max_steps, uint64_t seed) {
  if (max_steps < 1) fail_arg("evaluation needs at least one rollout step");
  const std::vector<int>* ids = nullptr;
  if (split == "train") ids = &man.train_ids;
  else if (split == "val") ids = &man.val_ids;
  else fail_arg("split must be \"train\" or \"val\"");
  if (ids->empty()) fail_arg("split \"" + split + "\" is empty");

  EvalReport rep;
  rep.model_hash = model_hash(model);
  rep.dataset_hash = man.sim_hash();
  rep.model_params = model.param_count();
  rep.split = split;
  rep.n_samples = (int)ids->size();
  rep.normalization = man.normalization;
  rep.buckets = empty_buckets();

  SsimConfig scfg;
  scfg.dynamic_range = man.normalization.range();

  std::vector<Acc> bucket_acc(rep.buckets.size());
  Acc agg;

  const std::vector<int>& pool = man.train_ids.empty() ? *ids : man.train_ids;
  int steps_used = 0;
  for (int qid : *ids) {
    const SampleRecord& q = man.sample(qid);
    int partner = pick_partner(man, qid, pool, seed);
    if (partner == qid)
      rep.warnings.push_back("sample " + std::to_string(qid) +
                             ": no distinct conditioning partner; self-pairing");
    rep.conditioning.emplace_back(qid, partner);

    FieldSequence truth = read_sequence((fs::path(man.dir) / q.file).string());
    FieldSequence cond =
        partner == qid ? truth
                       : read_sequence((fs::path(man.dir) / man.sample(partner).file).string());
    if (truth.frames.size() < 3 || cond.frames.size() < 3)
      fail_run("evaluation needs sequences with at least 3 frames (the rollout starts at "
               "the first transient frame)");

    // Frame 0 is the uniform initial condition and carries no information
    // about this sample's power pattern; the rollout is seeded from frame 1,
    // so prediction step k lines up with truth frame 1+k.
    int n_steps = std::min(max_steps, (int)truth.frames.size() - 2);
    steps_used = std::max(steps_used, n_steps);
    FieldSequence pred =
        model.rollout(truth.frames[1], cond.frames[1], cond.frames[2], n_steps);

    for (int k = 1; k <= n_steps; ++k) {
      MetricReport mr =
          evaluate_pair(pred.frames[k], truth.frames[1 + k], man.normalization.max_i, scfg);
      for (size_t b = 0; b < rep.buckets.size(); ++b)
        if (k >= rep.buckets[b].lo && k <= rep.buckets[b].hi) {
          bucket_acc[b].add(mr);
          agg.add(mr);
          break;
        }
    }
  }
  rep.rollout_steps = steps_used;

  for (size_t b = 0; b < rep.buckets.size(); ++b) {
    StageBucket& sb = rep.buckets[b];
    sb.frames = (int)bucket_acc[b].rmse.size();
    mean_std(bucket_acc[b].rmse, sb.rmse_mean, sb.rmse_std);
    mean_std(bucket_acc[b].npd, sb.npd_mean, sb.npd_std);
    mean_std(bucket_acc[b].ssim, sb.ssim_mean, sb.ssim_std);
  }
  rep.agg_frames = (int)agg.rmse.size();
  mean_std(agg.rmse, rep.agg_rmse_mean, rep.agg_rmse_std);
  mean_std(agg.npd, rep.agg_npd_mean, rep.agg_npd_std);
  mean_std(agg.ssim, rep.agg_ssim_mean, rep.agg_ssim_std);
  rep.full_scale_rmse_pct = 100.0 * rep.agg_rmse_mean / rep.normalization.range();
  return rep;
}

EvalTiming benchmark_speed(const SurrogateModel& model, const DatasetManifest& man,
                           int horizon_steps, int runs, uint64_t seed) {
  if (horizon_steps < 1) fail_arg("benchmark horizon must be >= 1 step");
  if (runs < 5) fail_arg("benchmark needs at least 5 runs for a median");

  int qid = man.val_ids.empty() ? man.samples.front().id : man.val_ids.front();
  const SampleRecord& q = man.sample(qid);
  const std::vector<int>& pool = man.train_ids.empty() ? man.val_ids : man.train_ids;
  int partner = pick_partner(man, qid, pool, seed);

  FieldSequence truth = read_sequence((fs::path(man.dir) / q.file).string());
  FieldSequence cond =
      partner == qid ? truth
                     : read_sequence((fs::path(man.dir) / man.sample(partner).file).string());

  using clock = std::chrono::steady_clock;
  auto time_ms = [](auto&& fn) {
    auto t0 = clock::now();
    fn();
    auto t1 = clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };

  std::vector<double> sur_ms, sol_ms;
  for (int r = 0; r < runs; ++r)
    sur_ms.push_back(time_ms([&] {
      FieldSequence p = model.rollout(truth.frames[0], cond.frames[0], cond.frames[1],
                                      horizon_steps);
      if ((int)p.frames.size() != horizon_steps + 1) fail_run("benchmark rollout came up short");
    }));
  for (int r = 0; r < runs; ++r)
    sol_ms.push_back(time_ms([&] {
      FieldSequence s =
          simulate(q.layout, man.sim, truth.frames[0], man.frame_dt, horizon_steps + 1);
      if ((int)s.frames.size() != horizon_steps + 1) fail_run("benchmark solve came up short");
    }));

  EvalTiming t;
  t.horizon_steps = horizon_steps;
  t.horizon_s = horizon_steps * man.frame_dt;
  t.runs = runs;
  t.surrogate_ms_per_horizon = median_of(sur_ms);
  t.surrogate_ms_per_map = t.surrogate_ms_per_horizon / horizon_steps;
  t.solver_ms_per_equivalent_horizon = median_of(sol_ms);
  t.speedup_ratio = t.solver_ms_per_equivalent_horizon / t.surrogate_ms_per_horizon;
  return t;
}

void write_report(const EvalReport& rep, const std::string& path) {
  ordered_json j;
  j["report_version"] = 1;
  j["model"] = {{"hash", rep.model_hash}, {"params", rep.model_params}};
  j["dataset"] = {{"hash", rep.dataset_hash}, {"split", rep.split},
                  {"n_samples", rep.n_samples}};
  j["normalization"] = {{"t_floor", rep.normalization.t_floor},
                        {"max_i", rep.normalization.max_i}};
  j["rollout_steps"] = rep.rollout_steps;
  ordered_json buckets = ordered_json::array();
  for (const auto& b : rep.buckets) {
    ordered_json jb;
    jb["stage"] = b.label;
    jb["steps"] = {b.lo, b.hi};
    jb["frames"] = b.frames;
    if (b.frames > 0) {
      jb["rmse_c"] = {{"mean", b.rmse_mean}, {"std", b.rmse_std}};
      jb["npd"] = {{"mean", b.npd_mean}, {"std", b.npd_std}};
      jb["ssim"] = {{"mean", b.ssim_mean}, {"std", b.ssim_std}};
    } else {
      jb["rmse_c"] = nullptr;
      jb["npd"] = nullptr;
      jb["ssim"] = nullptr;
    }
    buckets.push_back(jb);
  }
  j["buckets"] = buckets;
  j["aggregate"] = {{"frames", rep.agg_frames},
                    {"rmse_c", {{"mean", rep.agg_rmse_mean}, {"std", rep.agg_rmse_std}}},
                    {"npd", {{"mean", rep.agg_npd_mean}, {"std", rep.agg_npd_std}}},
                    {"ssim", {{"mean", rep.agg_ssim_mean}, {"std", rep.agg_ssim_std}}}};
  j["full_scale_rmse_pct"] = rep.full_scale_rmse_pct;
  ordered_json cond = ordered_json::array();
  for (auto [a, b] : rep.conditioning) cond.push_back({{"sample", a}, {"partner", b}});
  j["conditioning"] = cond;
  j["warnings"] = rep.warnings;
  if (rep.timing) {
    const EvalTiming& t = *rep.timing;
    j["timing"] = {{"horizon_steps", t.horizon_steps},
                   {"horizon_s", t.horizon_s},
                   {"runs", t.runs},
                   {"surrogate_ms_per_horizon", t.surrogate_ms_per_horizon},
                   {"surrogate_ms_per_map", t.surrogate_ms_per_map},
                   {"solver_ms_per_equivalent_horizon", t.solver_ms_per_equivalent_horizon},
                   {"speedup_ratio", t.speedup_ratio}};
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_run("cannot write report: " + path);
  out << j.dump(2) << "\n";
  if (!out) fail_run("write failed for report: " + path);
}

}  // namespace thermal
