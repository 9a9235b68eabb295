#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "field.hpp"
#include "layout.hpp"
#include "model.hpp"
#include "solver.hpp"

namespace thermal {

// Binary frame-sequence container (.thm): 36-byte header
//   "THM1" | version u32 | width u32 | height u32 | frame_count u32
//   | frame_dt f64 | pitch f64
// followed by frame_count row-major little-endian f32 frames in degC.
void write_sequence(const std::string& path, const FieldSequence& seq);
FieldSequence read_sequence(const std::string& path);

enum class RangeProfile { Nominal25to55, Extended25to95 };

const char* range_profile_name(RangeProfile p);
RangeProfile range_profile_from_name(const std::string& name);
Normalization profile_normalization(RangeProfile p);
// Total-power band the layout budgets are drawn from, watts.
void profile_budget_band(RangeProfile p, double& lo, double& hi);

struct SampleRecord {
  int id = 0;               // index in the generation order
  uint64_t seed = 0;        // stream seed this sample was derived from
  std::string file;         // sequence path relative to the manifest
  int n_frames = 0;
  double frame_dt = 0;
  double budget_w = 0;
  CellClass dominant = CellClass::BasicGate;
  double min_c = 0, peak_c = 0;  // scan over all frames
  Layout layout;
};

struct SkipRecord {
  int index = 0;
  std::string reason;
};

struct DatasetManifest {
  int format_version = 1;
  RangeProfile profile = RangeProfile::Nominal25to55;
  Normalization normalization;
  GridSpec grid;
  SimConfig sim;
  int n_frames = 0;
  double frame_dt = 0;
  uint64_t seed = 0;
  std::string dir;  // directory the manifest was written to / loaded from
  std::vector<SampleRecord> samples;
  std::vector<SkipRecord> skipped;
  std::vector<int> train_ids, val_ids;

  std::string sim_hash() const;  // fingerprint of grid+sim+frame schedule
  const SampleRecord& sample(int id) const;
  void validate() const;
};

struct BuildConfig {
  int n_layouts = 12;
  ClassMix mix{12, 6, 4};
  GridSpec grid{64, 64};
  SimConfig sim;
  int n_frames = 100;
  double frame_dt = 1e-3;
  RangeProfile profile = RangeProfile::Nominal25to55;
  uint64_t seed = 0;
  int threads = 0;  // 0 = hardware (capped by THERMAL_THREADS)
};

// Generates layouts, simulates each, writes sequence files and the manifest
// into out_dir. Failed samples are skipped with a recorded reason; more than
// 10% skips fails the build. Deterministic end-to-end from cfg.seed.
DatasetManifest build_dataset(const BuildConfig& cfg, const std::string& out_dir);

void write_manifest(const DatasetManifest& man, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// One teacher-forcing record in degC: query frame I at stage k, target at
// k+1, conditioning pair E/E' from the partner sample at the same stages.
struct PairRecord {
  int sample_id = 0, cond_id = 0;
  int frame_index = 0;  // k
  ScalarField I, E, Ep, target;
};

// Consecutive-frame pairs over one split ("train" or "val"). The partner is
// another same-split sample preferring matched dominant class, then nearest
// power budget, ties broken by the seed; single-sample splits self-pair and
// append a note to *warning.
std::vector<PairRecord> make_pairs(const DatasetManifest& man, const std::string& split,
                                   uint64_t seed, std::string* warning = nullptr);

NormRecord to_norm_record(const PairRecord& rec, const Normalization& norm);

}  // namespace thermal
