#pragma once
#include "field.hpp"

namespace thermal {

struct SimConfig;  // solver.hpp

struct ResidualConfig {
  double alpha = 1e-4;  // thermal diffusivity, m^2/s
  double tau = 1e-13;   // relaxation time, s
  double dt = 1e-3;     // frame spacing, s
  bool include_second_order = true;
  bool include_source_sink = false;  // diagnostic full-balance mode

  void validate() const;
};

// 5-point Laplacian with zero-flux mirror ghost cells, units of f per m^2.
// Self-adjoint under the mirror boundary, which the training gradients rely
// on.
ScalarField laplacian(const ScalarField& f);

struct TimeDerivatives {
  ScalarField dTdt;     // (T+ - T-)/(2 dt)
  ScalarField d2Tdt2;   // (T+ - 2 T0 + T-)/dt^2
};
TimeDerivatives time_derivatives(const ScalarField& Tm, const ScalarField& T0,
                                 const ScalarField& Tp, double dt);

struct ResidualResult {
  ScalarField residual;  // K/s per pixel
  double mean_sq = 0;    // mean over pixels of residual^2
};

// Heat-equation residual dT/dt + tau d2T/dt2 - alpha lap(T) on a frame triple;
// with include_source_sink the known source s = P/(rho_c V) and ambient sink
// g (T - T_amb) are subtracted, turning it into a full-balance diagnostic on
// solver output. `source_power` and `sim` are required only in that mode.
ResidualResult physics_residual(const ScalarField& Tm, const ScalarField& T0,
                                const ScalarField& Tp, const ResidualConfig& cfg,
                                const ScalarField* source_power = nullptr,
                                const SimConfig* sim = nullptr);

// Two-frame (first-order) residual (T1 - T0)/dt - alpha lap(T1), the training
// form: no second time derivative is available from a single pair.
ResidualResult physics_residual_pair(const ScalarField& T0, const ScalarField& T1,
                                     const ResidualConfig& cfg);

}  // namespace thermal
