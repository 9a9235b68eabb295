#pragma once
#include <string>

#include "field.hpp"

namespace thermal {

struct RenderRange {
  double lo = 0, hi = 1;
};

// Grayscale binary PGM (P5, maxval 255). Values are mapped linearly from
// [lo, hi] to [0, 255]; out-of-range pixels are clamped and the clamp counts
// are written to a "<path>.note" sidecar.
void write_pgm(const ScalarField& f, const RenderRange& range, const std::string& path);

// Color PNG (8-bit RGB) with a piecewise-linear hot colormap:
//   r = min(1, 3t), g = clamp(3t-1, 0, 1), b = clamp(3t-2, 0, 1)
// for t = (v - lo)/(hi - lo). Clamping behaves as for write_pgm. Available
// only when zlib support was compiled in.
bool png_supported();
void write_png(const ScalarField& f, const RenderRange& range, const std::string& path);

}  // namespace thermal
