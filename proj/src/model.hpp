#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "field.hpp"
#include "tensor.hpp"

namespace thermal {

enum class ConcatMode { FeatureLevel, PixelLevel };

struct ArchConfig {
  int base_channels = 8;
  int depth = 3;                          // downsampling levels
  std::vector<int> dilation_rates = {1, 2, 4};  // one per level
  int pos_dim = 16;                       // positional channels, multiple of 4
  ConcatMode concat_mode = ConcatMode::FeatureLevel;
  bool use_pair_conditioning = true;
  bool shared_encoders = true;            // one weight set for I, E, E'
  bool bilinear_decoder = false;          // upsample+conv instead of tconv
  double dropout_rate = 0.25;

  void validate() const;
  int channels(int level) const { return base_channels << level; }
  // Channels entering the level-l dilated conv (level 0 sees the raw input).
  int level_in_channels(int level, int input_channels) const {
    return level == 0 ? input_channels : channels(level);
  }
  int input_channels() const {
    return (concat_mode == ConcatMode::PixelLevel && use_pair_conditioning) ? 3 : 1;
  }
};

// Input/output mapping between degC fields and the [0,1] training scale:
// u = (T - t_floor) / (max_i - t_floor).
struct Normalization {
  double t_floor = 25.0;
  double max_i = 55.0;
  double range() const { return max_i - t_floor; }
  void validate() const {
    if (!(max_i > t_floor)) fail_arg("normalization ceiling must exceed the floor");
  }
};

struct TrainConfig {
  double lambda = 0.1;      // physics-loss weight on the dimensionless residual
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch = 8;
  int epochs = 100;
  double dropout = 0.25;
  int early_stop_patience = 10;
  double lr_decay = 0.9;
  int lr_decay_every = 20;  // epochs
  double noise_sigma = 0.01;
  uint64_t seed = 0;

  void validate() const;
};

struct ParamSlice {
  std::string name;
  size_t offset = 0;
  size_t len = 0;
  int fan_in = 0;
};

// One training record on the normalized scale. `alpha_dt_over_range` style
// constants live in the loss, not here; the grid spec carries the pitch the
// physics residual needs.
struct NormRecord {
  GridSpec spec;
  Tensor I, E, Ep, target;  // h x w x 1
};

struct LossValue {
  double total = 0, l_rmse = 0, l_physics = 0;
};

class SurrogateModel;

// Loss constants shared by loss/gradients: the residual is
// (u' - u) - alpha dt lap(u'), i.e. the physical residual nondimensionalized
// by range/dt, so lambda is dimensionless.
struct LossContext {
  double lambda = 0.1;
  double alpha = 1e-4;
  double frame_dt = 1e-3;
};

class SurrogateModel {
 public:
  SurrogateModel() = default;
  SurrogateModel(const ArchConfig& arch, const Normalization& norm, double frame_dt,
                 uint64_t init_seed);

  const ArchConfig& arch() const { return arch_; }
  const Normalization& norm() const { return norm_; }
  double frame_dt() const { return frame_dt_; }
  size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const std::vector<ParamSlice>& slices() const { return slices_; }
  const ParamSlice& slice(const std::string& name) const;

  Tensor normalize(const ScalarField& f) const;
  ScalarField denormalize(const Tensor& u, const GridSpec& spec) const;

  // Inference forward (dropout inactive), degC in and out.
  ScalarField forward(const ScalarField& I, const ScalarField& E,
                      const ScalarField& Ep) const;

  // Free-running rollout: the prediction feeds back as the next query; the
  // conditioning pair stays fixed. Returns n_steps+1 frames including I0.
  FieldSequence rollout(const ScalarField& I0, const ScalarField& E,
                        const ScalarField& Ep, int n_steps) const;

  // Batch loss without gradients (dropout inactive).
  LossValue loss(const std::vector<NormRecord>& batch, const LossContext& ctx) const;

  // Loss with dropout active (mask_seed-deterministic) and the exact
  // parameter gradient accumulated into grad (resized and zeroed here).
  LossValue loss_and_gradients(const std::vector<NormRecord>& batch, const LossContext& ctx,
                               double dropout_rate, uint64_t mask_seed,
                               std::vector<double>& grad) const;

  void save(const std::string& path) const;
  static SurrogateModel load(const std::string& path);

 private:
  friend struct ModelOps;
  ArchConfig arch_;
  Normalization norm_;
  double frame_dt_ = 1e-3;
  std::vector<double> params_;
  std::vector<ParamSlice> slices_;

  void build_registry();
  void init_params(uint64_t seed);
};

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_total = 0, train_rmse = 0, train_physics = 0;
  double val_total = 0, val_rmse = 0, val_physics = 0;
};

struct TrainResult {
  SurrogateModel model;  // best validation epoch
  std::vector<EpochStats> history;
  bool diverged = false;
  int best_epoch = -1;
  std::string message;
};

// Adam with seeded shuffling, Gaussian input noise on the normalized inputs,
// stepwise lr decay and early stopping on the validation loss. alpha is the
// diffusivity the physics term assumes for these records.
TrainResult train(const std::vector<NormRecord>& train_recs,
                  const std::vector<NormRecord>& val_recs, const ArchConfig& arch,
                  const Normalization& norm, double frame_dt, const TrainConfig& cfg,
                  double alpha = 1e-4);

// Seeded Gaussian noise on the normalized inputs (never the target), clamped
// back to [0,1].
NormRecord augment(const NormRecord& rec, double sigma, uint64_t seed);

Tensor normalize_field(const ScalarField& f, const Normalization& norm);

}  // namespace thermal
