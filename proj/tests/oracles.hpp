#pragma once
// Naive reference implementations used only by the tests. Each one is written
// straight from the defining formula with a loop structure chosen to differ
// from the library kernels, so a shared bug is unlikely to cancel out.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "field.hpp"
#include "tensor.hpp"

namespace oracle {

using thermal::GridSpec;
using thermal::ScalarField;
using thermal::Tensor;

// Plain left-to-right sum, no compensation.
inline double sum_plain(const ScalarField& f) {
  double s = 0;
  for (size_t i = 0; i < f.size(); ++i) s += f.data()[i];
  return s;
}

// Mirror (zero-flux) ghost cell: the out-of-range neighbor equals the cell.
inline int refl(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

inline ScalarField laplacian(const ScalarField& f) {
  const GridSpec& g = f.spec();
  ScalarField out(g, thermal::FieldKind::Dimensionless, 0.0);
  double inv_h2 = 1.0 / (g.pitch * g.pitch);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      double c = f.at(y, x);
      double s = f.at(refl(y - 1, g.height), x) + f.at(refl(y + 1, g.height), x) +
                 f.at(y, refl(x - 1, g.width)) + f.at(y, refl(x + 1, g.width)) - 4.0 * c;
      out.at(y, x) = s * inv_h2;
    }
  return out;
}

inline double rmse(const ScalarField& a, const ScalarField& b) {
  double q = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a.data()[i] - b.data()[i];
    q += d * d;
  }
  return std::sqrt(q / (double)a.size());
}

inline double npd(const ScalarField& a, const ScalarField& b, double max_i) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += std::fabs(b.data()[i] - a.data()[i]);
  return s / ((double)a.size() * max_i);
}

// Sliding-window SSIM with raw-moment accumulation (the library uses two-pass
// central moments), population-normalized, uniform window, valid positions.
inline double ssim(const ScalarField& a, const ScalarField& b, int win, double k1,
                   double k2, double L) {
  double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
  int H = a.height(), W = a.width();
  double acc = 0;
  int count = 0;
  for (int y0 = 0; y0 + win <= H; ++y0)
    for (int x0 = 0; x0 + win <= W; ++x0) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < win; ++dy)
        for (int dx = 0; dx < win; ++dx) {
          double va = a.at(y0 + dy, x0 + dx), vb = b.at(y0 + dy, x0 + dx);
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      double n = (double)win * win;
      double ma = sa / n, mb = sb / n;
      double va = saa / n - ma * ma, vb = sbb / n - mb * mb;
      double cov = sab / n - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / count;
}

// --- tensor kernels ---------------------------------------------------------
// Weight layout everywhere: w[((ky*3 + kx)*ic + i)*oc + o].

inline Tensor conv3(const Tensor& in, const std::vector<double>& w,
                    const std::vector<double>& b, int oc, int dl) {
  Tensor out(in.h, in.w, oc, 0.0);
  for (int o = 0; o < oc; ++o)
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x) {
        double acc = b.empty() ? 0.0 : b[o];
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            int yy = y + (ky - 1) * dl, xx = x + (kx - 1) * dl;
            if (yy < 0 || yy >= in.h || xx < 0 || xx >= in.w) continue;
            for (int i = 0; i < in.c; ++i)
              acc += in.px(yy, xx)[i] * w[(((size_t)ky * 3 + kx) * in.c + i) * oc + o];
          }
        out.px(y, x)[o] = acc;
      }
  return out;
}

inline Tensor conv3s2(const Tensor& in, const std::vector<double>& w,
                      const std::vector<double>& b, int oc) {
  Tensor out((in.h + 1) / 2, (in.w + 1) / 2, oc, 0.0);
  for (int o = 0; o < oc; ++o)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) {
        double acc = b.empty() ? 0.0 : b[o];
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            int yy = 2 * y + ky - 1, xx = 2 * x + kx - 1;
            if (yy < 0 || yy >= in.h || xx < 0 || xx >= in.w) continue;
            for (int i = 0; i < in.c; ++i)
              acc += in.px(yy, xx)[i] * w[(((size_t)ky * 3 + kx) * in.c + i) * oc + o];
          }
        out.px(y, x)[o] = acc;
      }
  return out;
}

// Scatter formulation of the stride-2 transposed conv (kernel 3, pad 1,
// output pad 1): input pixel (iy,ix) contributes to output (2iy+ky-1,
// 2ix+kx-1).
inline Tensor tconv3s2(const Tensor& in, const std::vector<double>& w,
                       const std::vector<double>& b, int oc) {
  Tensor out(2 * in.h, 2 * in.w, oc, 0.0);
  if (!b.empty())
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x)
        for (int o = 0; o < oc; ++o) out.px(y, x)[o] = b[o];
  for (int iy = 0; iy < in.h; ++iy)
    for (int ix = 0; ix < in.w; ++ix)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          int y = 2 * iy + ky - 1, x = 2 * ix + kx - 1;
          if (y < 0 || y >= out.h || x < 0 || x >= out.w) continue;
          for (int i = 0; i < in.c; ++i)
            for (int o = 0; o < oc; ++o)
              out.px(y, x)[o] +=
                  in.px(iy, ix)[i] * w[(((size_t)ky * 3 + kx) * in.c + i) * oc + o];
        }
  return out;
}

inline Tensor conv1x1(const Tensor& in, const std::vector<double>& w,
                      const std::vector<double>& b, int oc) {
  Tensor out(in.h, in.w, oc, 0.0);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x)
      for (int o = 0; o < oc; ++o) {
        double acc = b.empty() ? 0.0 : b[o];
        for (int i = 0; i < in.c; ++i) acc += in.px(y, x)[i] * w[(size_t)i * oc + o];
        out.px(y, x)[o] = acc;
      }
  return out;
}

// Half-pixel-center bilinear 2x upsample with edge clamping.
inline Tensor upsample2(const Tensor& in) {
  Tensor out(2 * in.h, 2 * in.w, in.c, 0.0);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      double sy = (y + 0.5) / 2.0 - 0.5, sx = (x + 0.5) / 2.0 - 0.5;
      int y0 = (int)std::floor(sy), x0 = (int)std::floor(sx);
      double fy = sy - y0, fx = sx - x0;
      int y0c = refl(y0, in.h), y1c = refl(y0 + 1, in.h);
      int x0c = refl(x0, in.w), x1c = refl(x0 + 1, in.w);
      for (int ch = 0; ch < in.c; ++ch)
        out.px(y, x)[ch] = (1 - fy) * ((1 - fx) * in.px(y0c, x0c)[ch] +
                                       fx * in.px(y0c, x1c)[ch]) +
                           fy * ((1 - fx) * in.px(y1c, x0c)[ch] + fx * in.px(y1c, x1c)[ch]);
    }
  return out;
}

// --- generic helpers --------------------------------------------------------

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

inline void fill_random(Tensor& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.v) v = d(rng);
}

inline void fill_random(std::vector<double>& v, std::mt19937_64& rng, double lo = -1.0,
                        double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& x : v) x = d(rng);
}

inline ScalarField random_field(const GridSpec& g, std::mt19937_64& rng, double lo,
                                double hi,
                                thermal::FieldKind kind = thermal::FieldKind::TemperatureC) {
  ScalarField f(g, kind, 0.0);
  std::uniform_real_distribution<double> d(lo, hi);
  for (size_t i = 0; i < f.size(); ++i) f.data()[i] = d(rng);
  return f;
}

// Centered Gaussian bump base + A*exp(-r^2/w^2) in physical coordinates.
inline ScalarField gaussian_field(const GridSpec& g, double base, double amplitude,
                                  double width_m) {
  ScalarField f(g, thermal::FieldKind::TemperatureC, 0.0);
  double cx = 0.5 * (g.width - 1), cy = 0.5 * (g.height - 1);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      double dx = (x - cx) * g.pitch, dy = (y - cy) * g.pitch;
      f.at(y, x) = base + amplitude * std::exp(-(dx * dx + dy * dy) / (width_m * width_m));
    }
  return f;
}

// Free-space evolution of that bump: peak amplitude A * w^2 / (w^2 + 4 a t).
inline double gaussian_peak_at(double amplitude, double width_m, double alpha, double t) {
  return amplitude * width_m * width_m / (width_m * width_m + 4.0 * alpha * t);
}

inline double rel_err(double a, double b, double floor_ = 1e-12) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor_});
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// Scratch directory under the test working directory, wiped on entry.
struct TmpDir {
  std::string path;
  explicit TmpDir(const std::string& name) : path(name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  std::string file(const std::string& name) const {
    return (std::filesystem::path(path) / name).string();
  }
};

}  // namespace oracle
