#include "physics.hpp"

#include <cmath>

#include "solver.hpp"

namespace thermal {

void ResidualConfig::validate() const {
  if (!(dt > 0)) fail_arg("residual dt must be positive");
  if (!(alpha > 0)) fail_arg("alpha must be positive");
  if (tau < 0) fail_arg("tau must be non-negative");
}

ScalarField laplacian(const ScalarField& f) {
  const GridSpec& g = f.spec();
  if (g.width < 3 || g.height < 3) fail_arg("laplacian needs a grid of at least 3x3");
  ScalarField out(g, FieldKind::Dimensionless);
  const double inv_h2 = 1.0 / (g.pitch * g.pitch);
  const int W = g.width, H = g.height;
  const double* v = f.data();
  double* o = out.data();
  for (int y = 0; y < H; ++y) {
    const double* up = v + (size_t)(y > 0 ? y - 1 : 0) * W;
    const double* dn = v + (size_t)(y < H - 1 ? y + 1 : y) * W;
    const double* row = v + (size_t)y * W;
    double* orow = o + (size_t)y * W;
    for (int x = 0; x < W; ++x) {
      double lf = row[x > 0 ? x - 1 : 0];
      double rt = row[x < W - 1 ? x + 1 : x];
      orow[x] = (up[x] + dn[x] + lf + rt - 4.0 * row[x]) * inv_h2;
    }
  }
  return out;
}

TimeDerivatives time_derivatives(const ScalarField& Tm, const ScalarField& T0,
                                 const ScalarField& Tp, double dt) {
  if (!(Tm.spec() == T0.spec()) || !(T0.spec() == Tp.spec()))
    fail_arg("time_derivatives: frames must share one grid");
  if (!(dt > 0)) fail_arg("time_derivatives: dt must be positive");
  TimeDerivatives d{ScalarField(T0.spec(), FieldKind::Dimensionless),
                    ScalarField(T0.spec(), FieldKind::Dimensionless)};
  const double inv2dt = 1.0 / (2.0 * dt), invdt2 = 1.0 / (dt * dt);
  for (size_t i = 0; i < T0.size(); ++i) {
    double m = Tm.data()[i], c = T0.data()[i], p = Tp.data()[i];
    d.dTdt.data()[i] = (p - m) * inv2dt;
    d.d2Tdt2.data()[i] = (p - 2.0 * c + m) * invdt2;
  }
  return d;
}

namespace {

double finish_mean_sq(ScalarField& r) {
  double acc = 0;
  for (size_t i = 0; i < r.size(); ++i) acc += r.data()[i] * r.data()[i];
  return acc / (double)r.size();
}

void subtract_source_sink(ScalarField& r, const ScalarField& T0,
                          const ScalarField* source_power, const SimConfig* sim) {
  if (!sim) fail_arg("full-balance residual needs the sim config");
  double vpx = T0.spec().pitch * T0.spec().pitch * sim->die_thickness;
  double g = sim->ambient_conductance(T0.spec());  // 0 when adiabatic-only
  double inv_rcv = 1.0 / (sim->rho_c * vpx);
  for (size_t i = 0; i < r.size(); ++i) {
    double s = source_power ? source_power->data()[i] * inv_rcv : 0.0;
    r.data()[i] -= s - g * (T0.data()[i] - sim->t_ambient);
  }
}

}  // namespace

ResidualResult physics_residual(const ScalarField& Tm, const ScalarField& T0,
                                const ScalarField& Tp, const ResidualConfig& cfg,
                                const ScalarField* source_power, const SimConfig* sim) {
  cfg.validate();
  TimeDerivatives d = time_derivatives(Tm, T0, Tp, cfg.dt);
  ScalarField lap = laplacian(T0);
  ResidualResult res{ScalarField(T0.spec(), FieldKind::Dimensionless), 0.0};
  for (size_t i = 0; i < T0.size(); ++i) {
    double r = d.dTdt.data()[i] - cfg.alpha * lap.data()[i];
    if (cfg.include_second_order) r += cfg.tau * d.d2Tdt2.data()[i];
    res.residual.data()[i] = r;
  }
  if (cfg.include_source_sink) subtract_source_sink(res.residual, T0, source_power, sim);
  res.mean_sq = finish_mean_sq(res.residual);
  return res;
}

ResidualResult physics_residual_pair(const ScalarField& T0, const ScalarField& T1,
                                     const ResidualConfig& cfg) {
  cfg.validate();
  if (!(T0.spec() == T1.spec())) fail_arg("residual pair: grids differ");
  ScalarField lap = laplacian(T1);
  ResidualResult res{ScalarField(T0.spec(), FieldKind::Dimensionless), 0.0};
  const double invdt = 1.0 / cfg.dt;
  for (size_t i = 0; i < T0.size(); ++i)
    res.residual.data()[i] =
        (T1.data()[i] - T0.data()[i]) * invdt - cfg.alpha * lap.data()[i];
  res.mean_sq = finish_mean_sq(res.residual);
  return res;
}

}  // namespace thermal
