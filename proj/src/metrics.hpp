#pragma once
#include "field.hpp"

namespace thermal {

struct SsimConfig {
  int window = 7;              // odd, >= 3; uniform box window
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 30.0; // L, same units as the fields

  void validate() const;
  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

struct MetricReport {
  double rmse = 0;   // degC
  double npd = 0;    // dimensionless
  double ssim = 0;   // dimensionless, <= 1
  double max_i = 0;  // normalization ceiling used for NPD
};

// Root-mean-square of pixel differences.
double rmse(const ScalarField& pred, const ScalarField& truth);

// Mean absolute difference normalized by the ceiling max_i.
double npd(const ScalarField& pred, const ScalarField& truth, double max_i);

// Mean structural similarity over all valid window positions (stride 1),
// two-pass central moments per window (population normalization 1/n).
double ssim(const ScalarField& pred, const ScalarField& truth, const SsimConfig& cfg);

MetricReport evaluate_pair(const ScalarField& pred, const ScalarField& truth,
                           double max_i, const SsimConfig& ssim_cfg);

}  // namespace thermal
