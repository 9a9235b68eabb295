#pragma once
#include <optional>

#include "field.hpp"
#include "layout.hpp"

namespace thermal {

enum class Boundary { AdiabaticOnly, AdiabaticPlusAmbient };
enum class Scheme { ExplicitFTCS, ImplicitBackwardEuler };

// Material and integration parameters. Ambient coupling is a lumped
// die-to-ambient resistance r_th distributed uniformly over the pixels: each
// pixel sees R_pixel = r_th * N_pixels so the parallel combination restores
// r_th, giving a volumetric sink g (T - T_amb) with
// g = 1 / (rho_c * V_pixel * R_pixel), V_pixel = pitch^2 * die_thickness.
struct SimConfig {
  double alpha = 1e-4;           // thermal diffusivity, m^2/s
  double tau = 1e-13;            // Cattaneo-Vernotte relaxation time, s
  double rho_c = 1.63e6;         // volumetric heat capacity, J/(m^3 K)
  double die_thickness = 300e-6; // m
  double r_th = 1e4;             // lumped die-to-ambient resistance, K/W
  double t_ambient = 25.0;       // degC
  Boundary boundary = Boundary::AdiabaticPlusAmbient;
  Scheme scheme = Scheme::ImplicitBackwardEuler;
  // Internal steps per frame. Power is re-rasterized at every substep, so
  // this sets the temporal sampling of activity waveforms; the default
  // resolves the shortest default burst feature (~0.4 ms) with >= 8 samples
  // at the 1 ms frame scale.
  int substeps_per_frame = 20;

  void validate() const;
  double pixel_volume(const GridSpec& s) const { return s.pitch * s.pitch * die_thickness; }
  // Volumetric ambient coupling rate in 1/s (0 for AdiabaticOnly).
  double ambient_conductance(const GridSpec& s) const;
};

struct HeatState {
  ScalarField T;                       // degC
  std::optional<ScalarField> T_prev;   // previous-step field when tau > 0
  double t = 0;                        // seconds
};

// Largest stable explicit step: the parabolic bound pitch^2 / (4 alpha).
// The explicit integrator treats the Cattaneo-Vernotte term with a damped
// three-level update T+ = [dt*rhs + T + r (2T - T-)] / (1 + r), r = tau/dt,
// whose von Neumann limit dt <= h^2/(8a) * (1 + sqrt(1 + 32 a tau / h^2))
// is never below the parabolic bound, so the parabolic bound is returned for
// every tau >= 0.
double stable_dt(const SimConfig& cfg, const GridSpec& spec);

// One integration step of the configured scheme. Pure: returns a new state.
// Explicit requires dt <= stable_dt. The implicit scheme solves its SPD
// system matrix-free by conjugate gradient to 1e-10 relative residual.
HeatState step(const HeatState& state, const SimConfig& cfg, const ScalarField& power,
               double dt);

// Integrates n_frames-1 frame advances of frame_dt from T0 (frame 0). Each
// advance uses substeps_per_frame internal steps with the power map
// re-rasterized at every substep start time.
FieldSequence simulate(const Layout& layout, const SimConfig& cfg, const ScalarField& T0,
                       double frame_dt, int n_frames);

// Steady solution of 0 = alpha lap T + s - g (T - T_amb) with the power map
// rasterized at t = 0. Requires ambient coupling; verifies the global power
// balance before returning.
ScalarField steady_state(const Layout& layout, const SimConfig& cfg);

// Conjugate gradient on the SPD operator A x = d0 x - coef lap_stencil(x)
// (lap_stencil = raw 5-point mirror stencil sum, no 1/h^2). Returns
// iterations used; throws after 10 N iterations without convergence.
// Exposed for white-box tests.
int cg_solve(int width, int height, double d0, double coef, const double* b, double* x,
             double rel_tol);

}  // namespace thermal
