#include "tensor.hpp"

#include <cmath>
#include <cstring>

#include "rng.hpp"

namespace thermal {

namespace {

inline void init_out(const double* b, int oc, Tensor& out) {
  if (b) {
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) std::memcpy(out.px(y, x), b, oc * sizeof(double));
  } else {
    std::fill(out.v.begin(), out.v.end(), 0.0);
  }
}

}  // namespace

void conv3_fwd(const Tensor& in, const double* w, const double* b, int oc, int dl,
               Tensor& out, bool accumulate) {
  const int H = in.h, W = in.w, ic = in.c;
  out.h = H; out.w = W; out.c = oc;
  out.v.resize((size_t)H * W * oc);
  if (!accumulate) init_out(b, oc, out);
  constexpr int PB = 4;  // pixel block: reuses each weight row across 4 outputs
  for (int y = 0; y < H; ++y) {
    int x = 0;
    for (; x + PB <= W; x += PB) {
      double* o0 = out.px(y, x);
      for (int ky = 0; ky < 3; ++ky) {
        int yy = y + (ky - 1) * dl;
        if (yy < 0 || yy >= H) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int xo = (kx - 1) * dl;
          const double* wb = w + ((size_t)(ky * 3 + kx) * ic) * oc;
          if (x + xo >= 0 && x + PB - 1 + xo < W) {
            const double* ib = in.px(yy, x + xo);
            double* o1 = o0 + oc;
            double* o2 = o0 + 2 * oc;
            double* o3 = o0 + 3 * oc;
            for (int c = 0; c < ic; ++c) {
              const double* wr = wb + (size_t)c * oc;
              double v0 = ib[c], v1 = ib[ic + c], v2 = ib[2 * ic + c], v3 = ib[3 * ic + c];
              for (int o = 0; o < oc; ++o) {
                double wv = wr[o];
                o0[o] += v0 * wv;
                o1[o] += v1 * wv;
                o2[o] += v2 * wv;
                o3[o] += v3 * wv;
              }
            }
          } else {
            for (int p = 0; p < PB; ++p) {
              int xx = x + p + xo;
              if (xx < 0 || xx >= W) continue;
              const double* ib = in.px(yy, xx);
              double* op = o0 + (size_t)p * oc;
              for (int c = 0; c < ic; ++c) {
                const double* wr = wb + (size_t)c * oc;
                double v = ib[c];
                for (int o = 0; o < oc; ++o) op[o] += v * wr[o];
              }
            }
          }
        }
      }
    }
    for (; x < W; ++x) {
      double* op = out.px(y, x);
      for (int ky = 0; ky < 3; ++ky) {
        int yy = y + (ky - 1) * dl;
        if (yy < 0 || yy >= H) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int xx = x + (kx - 1) * dl;
          if (xx < 0 || xx >= W) continue;
          const double* ib = in.px(yy, xx);
          const double* wb = w + ((size_t)(ky * 3 + kx) * ic) * oc;
          for (int c = 0; c < ic; ++c) {
            const double* wr = wb + (size_t)c * oc;
            double v = ib[c];
            for (int o = 0; o < oc; ++o) op[o] += v * wr[o];
          }
        }
      }
    }
  }
}

void conv3_bwd(const Tensor& in, const double* w, int oc, int dl, const Tensor& gout,
               Tensor* gin, double* gw, double* gb) {
  const int H = in.h, W = in.w, ic = in.c;
  if (gin) {
    gin->h = H; gin->w = W; gin->c = ic;
    gin->v.assign((size_t)H * W * ic, 0.0);
    // gin[q] = sum_k gout[q - (k-1) dl] . w[k, :, :]
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double* gi = gin->px(y, x);
        for (int ky = 0; ky < 3; ++ky) {
          int yy = y - (ky - 1) * dl;
          if (yy < 0 || yy >= H) continue;
          for (int kx = 0; kx < 3; ++kx) {
            int xx = x - (kx - 1) * dl;
            if (xx < 0 || xx >= W) continue;
            const double* go = gout.px(yy, xx);
            const double* wb = w + ((size_t)(ky * 3 + kx) * ic) * oc;
            for (int c = 0; c < ic; ++c) {
              const double* wr = wb + (size_t)c * oc;
              double acc = 0;
              for (int o = 0; o < oc; ++o) acc += go[o] * wr[o];
              gi[c] += acc;
            }
          }
        }
      }
  }
  if (gw) {
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double* gwb = gw + ((size_t)(ky * 3 + kx) * ic) * oc;
        for (int y = 0; y < H; ++y) {
          int yy = y + (ky - 1) * dl;
          if (yy < 0 || yy >= H) continue;
          for (int x = 0; x < W; ++x) {
            int xx = x + (kx - 1) * dl;
            if (xx < 0 || xx >= W) continue;
            const double* ib = in.px(yy, xx);
            const double* go = gout.px(y, x);
            for (int c = 0; c < ic; ++c) {
              double v = ib[c];
              double* gwr = gwb + (size_t)c * oc;
              for (int o = 0; o < oc; ++o) gwr[o] += v * go[o];
            }
          }
        }
      }
  }
  if (gb) {
    for (int y = 0; y < gout.h; ++y)
      for (int x = 0; x < gout.w; ++x) {
        const double* go = gout.px(y, x);
        for (int o = 0; o < oc; ++o) gb[o] += go[o];
      }
  }
}

void conv3s2_fwd(const Tensor& in, const double* w, const double* b, int oc, Tensor& out) {
  const int H = in.h, W = in.w, ic = in.c;
  const int OH = (H + 1) / 2, OW = (W + 1) / 2;
  out.h = OH; out.w = OW; out.c = oc;
  out.v.resize((size_t)OH * OW * oc);
  init_out(b, oc, out);
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox) {
      double* op = out.px(oy, ox);
      for (int ky = 0; ky < 3; ++ky) {
        int yy = 2 * oy + ky - 1;
        if (yy < 0 || yy >= H) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int xx = 2 * ox + kx - 1;
          if (xx < 0 || xx >= W) continue;
          const double* ib = in.px(yy, xx);
          const double* wb = w + ((size_t)(ky * 3 + kx) * ic) * oc;
          for (int c = 0; c < ic; ++c) {
            const double* wr = wb + (size_t)c * oc;
            double v = ib[c];
            for (int o = 0; o < oc; ++o) op[o] += v * wr[o];
          }
        }
      }
    }
}

void conv3s2_bwd(const Tensor& in, const double* w, int oc, const Tensor& gout,
                 Tensor* gin, double* gw, double* gb) {
  const int H = in.h, W = in.w, ic = in.c;
  const int OH = gout.h, OW = gout.w;
  if (gin) {
    gin->h = H; gin->w = W; gin->c = ic;
    gin->v.assign((size_t)H * W * ic, 0.0);
  }
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox) {
      const double* go = gout.px(oy, ox);
      if (gb)
        for (int o = 0; o < oc; ++o) gb[o] += go[o];
      for (int ky = 0; ky < 3; ++ky) {
        int yy = 2 * oy + ky - 1;
        if (yy < 0 || yy >= H) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int xx = 2 * ox + kx - 1;
          if (xx < 0 || xx >= W) continue;
          const double* wb = w + ((size_t)(ky * 3 + kx) * ic) * oc;
          const double* ib = in.px(yy, xx);
          double* gi = gin ? gin->px(yy, xx) : nullptr;
          double* gwb = gw ? gw + ((size_t)(ky * 3 + kx) * ic) * oc : nullptr;
          for (int c = 0; c < ic; ++c) {
            const double* wr = wb + (size_t)c * oc;
            double acc = 0;
            for (int o = 0; o < oc; ++o) acc += go[o] * wr[o];
            if (gi) gi[c] += acc;
            if (gwb) {
              double v = ib[c];
              double* gwr = gwb + (size_t)c * oc;
              for (int o = 0; o < oc; ++o) gwr[o] += v * go[o];
            }
          }
        }
      }
    }
}

void tconv3s2_fwd(const Tensor& in, const double* w, const double* b, int oc, Tensor& out) {
  const int H = in.h, W = in.w, ic = in.c;
  const int OH = 2 * H, OW = 2 * W;
  out.h = OH; out.w = OW; out.c = oc;
  out.v.resize((size_t)OH * OW * oc);
  init_out(b, oc, out);
  // out[p] = sum over k with p = 2q + k - 1 of in[q] . w[k]
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox) {
      double* op = out.px(oy, ox);
      for (int ky = (oy + 1) & 1; ky < 3; ky += 2) {
        int qy = (oy + 1 - ky) / 2;
        if (qy < 0 || qy >= H) continue;
        for (int kx = (ox + 1) & 1; kx < 3; kx += 2) {
          int qx = (ox + 1 - kx) / 2;
          if (qx < 0 || qx >= W) continue;
          const double* ib = in.px(qy, qx);
          const double* wb = w + ((size_t)(ky * 3 + kx) * ic) * oc;
          for (int c = 0; c < ic; ++c) {
            const double* wr = wb + (size_t)c * oc;
            double v = ib[c];
            for (int o = 0; o < oc; ++o) op[o] += v * wr[o];
          }
        }
      }
    }
}

void tconv3s2_bwd(const Tensor& in, const double* w, int oc, const Tensor& gout,
                  Tensor* gin, double* gw, double* gb) {
  const int H = in.h, W = in.w, ic = in.c;
  const int OH = gout.h, OW = gout.w;
  if (gin) {
    gin->h = H; gin->w = W; gin->c = ic;
    gin->v.assign((size_t)H * W * ic, 0.0);
  }
  if (gb) {
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox) {
        const double* go = gout.px(oy, ox);
        for (int o = 0; o < oc; ++o) gb[o] += go[o];
      }
  }
  // gin[q] = sum_k gout[2q + k - 1] . w[k];  gw[k] += in[q] x gout[2q + k - 1]
  for (int qy = 0; qy < H; ++qy)
    for (int qx = 0; qx < W; ++qx) {
      const double* ib = in.px(qy, qx);
      double* gi = gin ? gin->px(qy, qx) : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        int oy = 2 * qy + ky - 1;
        if (oy < 0 || oy >= OH) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int ox = 2 * qx + kx - 1;
          if (ox < 0 || ox >= OW) continue;
          const double* go = gout.px(oy, ox);
          const double* wb = w + ((size_t)(ky * 3 + kx) * ic) * oc;
          double* gwb = gw ? gw + ((size_t)(ky * 3 + kx) * ic) * oc : nullptr;
          for (int c = 0; c < ic; ++c) {
            const double* wr = wb + (size_t)c * oc;
            double acc = 0;
            for (int o = 0; o < oc; ++o) acc += go[o] * wr[o];
            if (gi) gi[c] += acc;
            if (gwb) {
              double v = ib[c];
              double* gwr = gwb + (size_t)c * oc;
              for (int o = 0; o < oc; ++o) gwr[o] += v * go[o];
            }
          }
        }
      }
    }
}

void conv1x1_fwd(const Tensor& in, const double* w, const double* b, int oc, Tensor& out) {
  const int ic = in.c;
  out.h = in.h; out.w = in.w; out.c = oc;
  out.v.resize((size_t)in.h * in.w * oc);
  init_out(b, oc, out);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      const double* ib = in.px(y, x);
      double* op = out.px(y, x);
      for (int c = 0; c < ic; ++c) {
        const double* wr = w + (size_t)c * oc;
        double v = ib[c];
        for (int o = 0; o < oc; ++o) op[o] += v * wr[o];
      }
    }
}

void conv1x1_bwd(const Tensor& in, const double* w, int oc, const Tensor& gout,
                 Tensor* gin, double* gw, double* gb) {
  const int ic = in.c;
  if (gin) {
    gin->h = in.h; gin->w = in.w; gin->c = ic;
    gin->v.assign(in.size(), 0.0);
  }
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      const double* ib = in.px(y, x);
      const double* go = gout.px(y, x);
      double* gi = gin ? gin->px(y, x) : nullptr;
      if (gb)
        for (int o = 0; o < oc; ++o) gb[o] += go[o];
      for (int c = 0; c < ic; ++c) {
        const double* wr = w + (size_t)c * oc;
        double acc = 0;
        for (int o = 0; o < oc; ++o) acc += go[o] * wr[o];
        if (gi) gi[c] += acc;
        if (gw) {
          double v = ib[c];
          double* gwr = gw + (size_t)c * oc;
          for (int o = 0; o < oc; ++o) gwr[o] += v * go[o];
        }
      }
    }
}

void relu_fwd(const Tensor& z, Tensor& a) {
  a.h = z.h; a.w = z.w; a.c = z.c;
  a.v.resize(z.size());
  for (size_t i = 0; i < z.size(); ++i) a.v[i] = z.v[i] > 0 ? z.v[i] : 0.0;
}

void relu_bwd(const Tensor& z, const Tensor& gout, Tensor& gin) {
  gin.h = z.h; gin.w = z.w; gin.c = z.c;
  gin.v.resize(z.size());
  for (size_t i = 0; i < z.size(); ++i) gin.v[i] = z.v[i] > 0 ? gout.v[i] : 0.0;
}

void dropout_fwd(const Tensor& in, double rate, uint64_t mask_seed, Tensor& out,
                 std::vector<double>& mask) {
  out.h = in.h; out.w = in.w; out.c = in.c;
  out.v.resize(in.size());
  mask.resize(in.size());
  if (rate <= 0) {
    std::fill(mask.begin(), mask.end(), 1.0);
    out.v = in.v;
    return;
  }
  if (rate >= 1) fail_arg("dropout rate must be < 1");
  auto eng = make_rng(mask_seed);
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  for (size_t i = 0; i < in.size(); ++i) {
    // top 53 bits -> uniform [0,1); avoids distribution-object state
    double u = (double)(eng() >> 11) * 0x1.0p-53;
    mask[i] = u < keep ? scale : 0.0;
    out.v[i] = in.v[i] * mask[i];
  }
}

void dropout_bwd(const std::vector<double>& mask, const Tensor& gout, Tensor& gin) {
  gin.h = gout.h; gin.w = gout.w; gin.c = gout.c;
  gin.v.resize(gout.size());
  for (size_t i = 0; i < gout.size(); ++i) gin.v[i] = gout.v[i] * mask[i];
}

void concat_fwd(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.h != b.h || a.w != b.w) fail_arg("concat: spatial shapes differ");
  out.h = a.h; out.w = a.w; out.c = a.c + b.c;
  out.v.resize((size_t)out.h * out.w * out.c);
  for (int y = 0; y < a.h; ++y)
    for (int x = 0; x < a.w; ++x) {
      double* op = out.px(y, x);
      std::memcpy(op, a.px(y, x), a.c * sizeof(double));
      std::memcpy(op + a.c, b.px(y, x), b.c * sizeof(double));
    }
}

void concat_bwd(const Tensor& gout, Tensor& ga, Tensor& gb) {
  // ga/gb carry their channel counts in .c (shapes must be preset).
  for (int y = 0; y < gout.h; ++y)
    for (int x = 0; x < gout.w; ++x) {
      const double* gp = gout.px(y, x);
      std::memcpy(ga.px(y, x), gp, ga.c * sizeof(double));
      std::memcpy(gb.px(y, x), gp + ga.c, gb.c * sizeof(double));
    }
}

void upsample2_fwd(const Tensor& in, Tensor& out) {
  const int H = in.h, W = in.w, C = in.c;
  out.h = 2 * H; out.w = 2 * W; out.c = C;
  out.v.resize((size_t)out.h * out.w * C);
  for (int oy = 0; oy < out.h; ++oy) {
    double sy = (oy + 0.5) * 0.5 - 0.5;
    sy = std::min(std::max(sy, 0.0), (double)(H - 1));
    int y0 = std::min((int)sy, H - 2 >= 0 ? H - 2 : 0);
    double fy = sy - y0;
    for (int ox = 0; ox < out.w; ++ox) {
      double sx = (ox + 0.5) * 0.5 - 0.5;
      sx = std::min(std::max(sx, 0.0), (double)(W - 1));
      int x0 = std::min((int)sx, W - 2 >= 0 ? W - 2 : 0);
      double fx = sx - x0;
      int y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
      const double* p00 = in.px(y0, x0);
      const double* p01 = in.px(y0, x1);
      const double* p10 = in.px(y1, x0);
      const double* p11 = in.px(y1, x1);
      double* op = out.px(oy, ox);
      for (int c = 0; c < C; ++c) {
        double top = p00[c] + fx * (p01[c] - p00[c]);
        double bot = p10[c] + fx * (p11[c] - p10[c]);
        op[c] = top + fy * (bot - top);
      }
    }
  }
}

void upsample2_bwd(const Tensor& gout, int in_h, int in_w, Tensor& gin) {
  gin.h = in_h; gin.w = in_w; gin.c = gout.c;
  gin.v.assign((size_t)in_h * in_w * gout.c, 0.0);
  for (int oy = 0; oy < gout.h; ++oy) {
    double sy = (oy + 0.5) * 0.5 - 0.5;
    sy = std::min(std::max(sy, 0.0), (double)(in_h - 1));
    int y0 = std::min((int)sy, in_h - 2 >= 0 ? in_h - 2 : 0);
    double fy = sy - y0;
    for (int ox = 0; ox < gout.w; ++ox) {
      double sx = (ox + 0.5) * 0.5 - 0.5;
      sx = std::min(std::max(sx, 0.0), (double)(in_w - 1));
      int x0 = std::min((int)sx, in_w - 2 >= 0 ? in_w - 2 : 0);
      double fx = sx - x0;
      int y1 = std::min(y0 + 1, in_h - 1), x1 = std::min(x0 + 1, in_w - 1);
      const double* go = gout.px(oy, ox);
      double* g00 = gin.px(y0, x0);
      double* g01 = gin.px(y0, x1);
      double* g10 = gin.px(y1, x0);
      double* g11 = gin.px(y1, x1);
      for (int c = 0; c < gout.c; ++c) {
        double g = go[c];
        g00[c] += (1 - fx) * (1 - fy) * g;
        g01[c] += fx * (1 - fy) * g;
        g10[c] += (1 - fx) * fy * g;
        g11[c] += fx * fy * g;
      }
    }
  }
}

Tensor positional_encoding(int h, int w, int d) {
  if (d <= 0 || d % 4 != 0) fail_arg("positional encoding dimension must be a positive multiple of 4");
  Tensor t(h, w, d);
  const int groups = d / 4;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double* p = t.px(y, x);
      for (int i = 0; i < groups; ++i) {
        double f = std::pow(10000.0, -2.0 * i / (double)d);
        p[4 * i + 0] = std::sin(x * f);
        p[4 * i + 1] = std::cos(x * f);
        p[4 * i + 2] = std::sin(y * f);
        p[4 * i + 3] = std::cos(y * f);
      }
    }
  return t;
}

Tensor field_to_tensor(const ScalarField& f) {
  Tensor t(f.height(), f.width(), 1);
  std::memcpy(t.v.data(), f.data(), f.size() * sizeof(double));
  return t;
}

ScalarField tensor_to_field(const Tensor& t, const GridSpec& spec, FieldKind kind) {
  if (t.c != 1 || t.h != spec.height || t.w != spec.width)
    fail_arg("tensor_to_field: shape mismatch");
  ScalarField f(spec, kind);
  std::memcpy(f.data(), t.v.data(), f.size() * sizeof(double));
  return f;
}

}  // namespace thermal
