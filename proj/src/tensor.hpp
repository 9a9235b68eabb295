#pragma once
#include <cstdint>
#include <vector>

#include "field.hpp"

namespace thermal {

// Dense HWC tensor (channel index fastest) — keeps the output-channel loop of
// every kernel unit-stride for vectorization.
struct Tensor {
  int h = 0, w = 0, c = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int h_, int w_, int c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), v((size_t)h_ * w_ * c_, fill) {}
  size_t size() const { return v.size(); }
  double* px(int y, int x) { return &v[((size_t)y * w + x) * c]; }
  const double* px(int y, int x) const { return &v[((size_t)y * w + x) * c]; }
  bool same_shape(const Tensor& o) const { return h == o.h && w == o.w && c == o.c; }
};

// All convolutions use 3x3 kernels with weights laid out [ky][kx][ic][oc]
// (oc fastest) and zero padding that preserves the spatial size at stride 1.

// Stride-1, dilation dl. If accumulate, adds into `out` (bias ignored);
// otherwise initializes out to the bias (or zero).
void conv3_fwd(const Tensor& in, const double* w, const double* b, int oc, int dl,
               Tensor& out, bool accumulate = false);
// gin is assigned; gw/gb are accumulated.
void conv3_bwd(const Tensor& in, const double* w, int oc, int dl, const Tensor& gout,
               Tensor* gin, double* gw, double* gb);

// Stride-2, pad 1: out is ceil(h/2) x ceil(w/2).
void conv3s2_fwd(const Tensor& in, const double* w, const double* b, int oc, Tensor& out);
void conv3s2_bwd(const Tensor& in, const double* w, int oc, const Tensor& gout,
                 Tensor* gin, double* gw, double* gb);

// Transposed conv, kernel 3, stride 2, pad 1, output pad 1: out is 2h x 2w.
void tconv3s2_fwd(const Tensor& in, const double* w, const double* b, int oc, Tensor& out);
void tconv3s2_bwd(const Tensor& in, const double* w, int oc, const Tensor& gout,
                  Tensor* gin, double* gw, double* gb);

// 1x1 linear map over channels.
void conv1x1_fwd(const Tensor& in, const double* w, const double* b, int oc, Tensor& out);
void conv1x1_bwd(const Tensor& in, const double* w, int oc, const Tensor& gout,
                 Tensor* gin, double* gw, double* gb);

void relu_fwd(const Tensor& z, Tensor& a);
// gin = gout where z > 0 (mask from the stored pre-activation).
void relu_bwd(const Tensor& z, const Tensor& gout, Tensor& gin);

// Inverted dropout: keep with probability 1-rate and scale kept values by
// 1/(1-rate). The mask is fully determined by mask_seed.
void dropout_fwd(const Tensor& in, double rate, uint64_t mask_seed, Tensor& out,
                 std::vector<double>& mask);
void dropout_bwd(const std::vector<double>& mask, const Tensor& gout, Tensor& gin);

// Channel concatenation a ++ b and its adjoint split.
void concat_fwd(const Tensor& a, const Tensor& b, Tensor& out);
void concat_bwd(const Tensor& gout, Tensor& ga, Tensor& gb);

// Bilinear 2x upsample (half-pixel centers, edge replication) and adjoint.
void upsample2_fwd(const Tensor& in, Tensor& out);
void upsample2_bwd(const Tensor& gout, int in_h, int in_w, Tensor& gin);

// Sinusoidal positional channels [sin(x f_i), cos(x f_i), sin(y f_i),
// cos(y f_i)], f_i = 10000^(-2i/d), i = 0..d/4-1, with x, y pixel indices at
// the given resolution.
Tensor positional_encoding(int h, int w, int d);

Tensor field_to_tensor(const ScalarField& f);
ScalarField tensor_to_field(const Tensor& t, const GridSpec& spec, FieldKind kind);

}  // namespace thermal
