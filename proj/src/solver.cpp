#include "solver.hpp"

#include <cmath>
#include <cstring>
#include <vector>

namespace thermal {

void SimConfig::validate() const {
  if (!(alpha > 0)) fail_arg("alpha must be positive");
  if (tau < 0) fail_arg("tau must be non-negative");
  if (!(rho_c > 0)) fail_arg("rho_c must be positive");
  if (!(die_thickness > 0)) fail_arg("die thickness must be positive");
  if (!(r_th > 0)) fail_arg("r_th must be positive");
  if (substeps_per_frame < 1) fail_arg("substeps_per_frame must be >= 1");
}

double SimConfig::ambient_conductance(const GridSpec& s) const {
  if (boundary == Boundary::AdiabaticOnly) return 0.0;
  // R_pixel = r_th * N so that N pixels in parallel reproduce r_th.
  double r_pixel = r_th * (double)s.pixels();
  return 1.0 / (rho_c * pixel_volume(s) * r_pixel);
}

double stable_dt(const SimConfig& cfg, const GridSpec& spec) {
  cfg.validate();
  spec.validate();
  return spec.pitch * spec.pitch / (4.0 * cfg.alpha);
}

namespace {

// Raw 5-point sum with mirror ghosts (no 1/h^2): neighbors - 4*center, where
// out-of-grid neighbors mirror the center cell (zero flux through walls).
void apply_stencil(const double* v, double* out, int W, int H) {
  for (int y = 0; y < H; ++y) {
    const double* up = v + (size_t)(y > 0 ? y - 1 : 0) * W;
    const double* dn = v + (size_t)(y < H - 1 ? y + 1 : y) * W;
    const double* row = v + (size_t)y * W;
    double* orow = out + (size_t)y * W;
    for (int x = 0; x < W; ++x) {
      double lf = row[x > 0 ? x - 1 : 0];
      double rt = row[x < W - 1 ? x + 1 : x];
      orow[x] = up[x] + dn[x] + lf + rt - 4.0 * row[x];
    }
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

int cg_solve(int W, int H, double d0, double coef, const double* b, double* x,
             double rel_tol) {
  const size_t N = (size_t)W * H;
  std::vector<double> r(N), p(N), ap(N);
  auto apply = [&](const double* in, double* out) {
    apply_stencil(in, out, W, H);
    for (size_t i = 0; i < N; ++i) out[i] = d0 * in[i] - coef * out[i];
  };
  double bnorm = 0;
  for (size_t i = 0; i < N; ++i) bnorm += b[i] * b[i];
  bnorm = std::sqrt(bnorm);
  if (bnorm == 0) {
    std::memset(x, 0, N * sizeof(double));
    return 0;
  }
  apply(x, ap.data());
  for (size_t i = 0; i < N; ++i) r[i] = b[i] - ap[i];
  p = r;
  double rs = dot(r, r);
  const double target = rel_tol * bnorm;
  const long max_iter = 10L * (long)N;
  long it = 0;
  while (std::sqrt(rs) > target) {
    if (it >= max_iter) fail_run("conjugate gradient did not converge");
    apply(p.data(), ap.data());
    double alpha = rs / dot(p, ap);
    for (size_t i = 0; i < N; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    double rs_new = dot(r, r);
    double beta = rs_new / rs;
    rs = rs_new;
    for (size_t i = 0; i < N; ++i) p[i] = r[i] + beta * p[i];
    ++it;
  }
  return (int)it;
}

namespace {

// CG with the constant mode deflated: used for the steady solve, whose
// operator g I - alpha lap has a near-null constant mode that would otherwise
// dominate the condition number. The constant component is solved exactly
// (A 1 = d0 1), the remainder on the zero-mean subspace.
int cg_solve_deflated(int W, int H, double d0, double coef, const double* b, double* x,
                      double rel_tol) {
  const size_t N = (size_t)W * H;
  std::vector<double> bt(N);
  double bmean = 0;
  for (size_t i = 0; i < N; ++i) bmean += b[i];
  bmean /= (double)N;
  for (size_t i = 0; i < N; ++i) bt[i] = b[i] - bmean;
  std::vector<double> xt(N, 0.0);
  auto project = [&](std::vector<double>& v) {
    double m = 0;
    for (double e : v) m += e;
    m /= (double)N;
    for (double& e : v) e -= m;
  };
  // Plain CG on the projected system; re-project the residual each iteration
  // so rounding cannot reintroduce the deflated mode.
  std::vector<double> r = bt, p(N), ap(N);
  project(r);
  p = r;
  double rs = dot(r, r);
  double bnorm = std::sqrt(dot(bt, bt));
  double target = rel_tol * (bnorm > 0 ? bnorm : 1.0);
  const long max_iter = 10L * (long)N;
  long it = 0;
  while (std::sqrt(rs) > target) {
    if (it >= max_iter) fail_run("steady-state conjugate gradient did not converge");
    apply_stencil(p.data(), ap.data(), W, H);
    for (size_t i = 0; i < N; ++i) ap[i] = d0 * p[i] - coef * ap[i];
    double alpha = rs / dot(p, ap);
    for (size_t i = 0; i < N; ++i) {
      xt[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    project(r);
    double rs_new = dot(r, r);
    double beta = rs_new / rs;
    rs = rs_new;
    for (size_t i = 0; i < N; ++i) p[i] = r[i] + beta * p[i];
    ++it;
  }
  double cmode = bmean / d0;
  for (size_t i = 0; i < N; ++i) x[i] = xt[i] + cmode;
  return (int)it;
}

}  // namespace

HeatState step(const HeatState& state, const SimConfig& cfg, const ScalarField& power,
               double dt) {
  cfg.validate();
  if (!(dt > 0)) fail_arg("step: dt must be positive");
  if (!(state.T.spec() == power.spec())) fail_arg("step: power grid differs from state grid");
  const GridSpec& spec = state.T.spec();
  const int W = spec.width, H = spec.height;
  const size_t N = state.T.size();
  const double g = cfg.ambient_conductance(spec);
  const double inv_rcv = 1.0 / (cfg.rho_c * cfg.pixel_volume(spec));
  const double* T = state.T.data();
  const double* Tm = (cfg.tau > 0 && state.T_prev) ? state.T_prev->data() : T;

  HeatState out;
  out.t = state.t + dt;
  out.T = ScalarField(spec, FieldKind::TemperatureC);
  double* Tp = out.T.data();

  if (cfg.scheme == Scheme::ExplicitFTCS) {
    double limit = stable_dt(cfg, spec);
    if (dt > limit * (1.0 + 1e-12))
      fail_arg("explicit step violates the CFL bound dt <= pitch^2/(4 alpha)");
    std::vector<double> lap(N);
    apply_stencil(T, lap.data(), W, H);
    const double c = cfg.alpha * dt / (spec.pitch * spec.pitch);
    const double r = cfg.tau / dt;
    const double inv1r = 1.0 / (1.0 + r);
    for (size_t i = 0; i < N; ++i) {
      double rhs_dt = c * lap[i] + dt * (power.data()[i] * inv_rcv - g * (T[i] - cfg.t_ambient));
      Tp[i] = (rhs_dt + T[i] + r * (2.0 * T[i] - Tm[i])) * inv1r;
    }
  } else {
    // Backward Euler, with the relaxation term handled implicitly as well:
    // (1 + g dt + tau/dt) T+ - (alpha dt) lap T+ =
    //     T + (tau/dt)(2T - T-) + dt (s + g T_amb)
    const double rr = cfg.tau / dt;
    const double d0 = 1.0 + g * dt + rr;
    const double coef = cfg.alpha * dt / (spec.pitch * spec.pitch);
    std::vector<double> b(N);
    for (size_t i = 0; i < N; ++i)
      b[i] = T[i] + rr * (2.0 * T[i] - Tm[i]) +
             dt * (power.data()[i] * inv_rcv + g * cfg.t_ambient);
    std::memcpy(Tp, T, N * sizeof(double));  // warm start from the current field
    cg_solve(W, H, d0, coef, b.data(), Tp, 1e-10);
  }
  if (cfg.tau > 0) out.T_prev = state.T;
  out.T.check_values("solver step");
  return out;
}

FieldSequence simulate(const Layout& layout, const SimConfig& cfg, const ScalarField& T0,
                       double frame_dt, int n_frames) {
  cfg.validate();
  layout.validate();
  if (n_frames < 2) fail_arg("simulate: n_frames must be >= 2");
  if (!(frame_dt > 0)) fail_arg("simulate: frame_dt must be positive");
  if (!(T0.spec() == layout.spec)) fail_arg("simulate: T0 grid differs from layout grid");
  FieldSequence seq;
  seq.dt = frame_dt;
  seq.frames.reserve(n_frames);
  seq.frames.push_back(T0);
  HeatState st{T0, std::nullopt, 0.0};
  const double dt_sub = frame_dt / cfg.substeps_per_frame;
  for (int f = 1; f < n_frames; ++f) {
    for (int k = 0; k < cfg.substeps_per_frame; ++k) {
      double t_sub = (f - 1 + (double)k / cfg.substeps_per_frame) * frame_dt;
      ScalarField P = rasterize_power(layout, t_sub);
      st = step(st, cfg, P, dt_sub);
    }
    seq.frames.push_back(st.T);
  }
  return seq;
}

ScalarField steady_state(const Layout& layout, const SimConfig& cfg) {
  cfg.validate();
  layout.validate();
  if (cfg.boundary == Boundary::AdiabaticOnly)
    fail_arg("no steady state exists without ambient coupling");
  const GridSpec& spec = layout.spec;
  const double g = cfg.ambient_conductance(spec);
  const double inv_rcv = 1.0 / (cfg.rho_c * cfg.pixel_volume(spec));
  ScalarField P = rasterize_power(layout, 0.0);
  const size_t N = P.size();
  std::vector<double> b(N);
  for (size_t i = 0; i < N; ++i) b[i] = P.data()[i] * inv_rcv + g * cfg.t_ambient;
  ScalarField T(spec, FieldKind::TemperatureC);
  cg_solve_deflated(spec.width, spec.height, g, cfg.alpha / (spec.pitch * spec.pitch),
                    b.data(), T.data(), 1e-12);
  // Global balance self-check: total sink power must equal total source power.
  double p_in = 0, p_out = 0;
  const double rcv = cfg.rho_c * cfg.pixel_volume(spec);
  for (size_t i = 0; i < N; ++i) {
    p_in += P.data()[i];
    p_out += g * (T.data()[i] - cfg.t_ambient) * rcv;
  }
  if (p_in > 0 && std::abs(p_out - p_in) > 1e-8 * p_in)
    fail_run("steady state violates the global power balance");
  T.check_values("steady state");
  return T;
}

}  // namespace thermal
