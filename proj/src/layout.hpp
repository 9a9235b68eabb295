#pragma once
#include <cstdint>
#include <vector>

#include "field.hpp"

namespace thermal {

enum class CellClass { BasicGate, Sequential, CombinationalBlock };
enum class ActivityKind { Constant, Square, Burst };

// Piecewise-constant activity waveform in [0,1]. Constant is always on.
// Square and Burst are periodic single-pulse waveforms: on for duty*period
// seconds starting at `phase` within each period; they differ only in the
// parameter ranges the generator draws (Burst = short duty, long period).
struct ActivityProfile {
  ActivityKind kind = ActivityKind::Constant;
  double duty = 1.0;      // on fraction of a period, [0,1]
  double period = 1e-3;   // seconds, > 0 for periodic kinds
  double phase = 0.0;     // seconds

  double value(double t) const;
  // Exact integral of value() over [0, t] (waveforms are piecewise constant).
  double integral(double t) const;
  void validate() const;
};

struct PixelRect {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  bool intersects(const PixelRect& o) const {
    return x0 < o.x0 + o.w && o.x0 < x0 + w && y0 < o.y0 + o.h && o.y0 < y0 + h;
  }
  int area() const { return w * h; }
};

struct CellPlacement {
  CellClass cell_class = CellClass::BasicGate;
  PixelRect rect;
  double peak_power = 0;  // watts
  ActivityProfile activity;
};

struct Layout {
  GridSpec spec;
  std::vector<CellPlacement> cells;
  double total_power_budget = 0;  // watts; sum of peak powers equals this

  void validate() const;
  // Class covering the largest placed area; used for exemplar matching.
  CellClass dominant_class() const;
};

struct ClassMix {
  int basic = 0;
  int sequential = 0;
  int combinational = 0;
};

// Side-length bands per class, in pixels (inclusive).
constexpr int kBasicSideMin = 2, kBasicSideMax = 6;
constexpr int kSequentialSideMin = 4, kSequentialSideMax = 10;
constexpr int kCombinationalSideMin = 8, kCombinationalSideMax = 24;

// Deterministic layout synthesis: rejection-sampled non-overlapping
// rectangles with class-banded sides, per-cell peak powers scaled so the
// layout total equals power_budget, and randomized activity waveforms.
// Throws Error("layout congestion") when placement fails after bounded
// retries.
Layout generate_layout(uint64_t seed, const GridSpec& spec, const ClassMix& mix,
                       double power_budget);

// Per-pixel power map at time t: each pixel of a cell receives
// peak_power * activity(t) / cell_area_pixels; non-cell pixels are zero.
ScalarField rasterize_power(const Layout& l, double t);

// Sum over cells of peak_power * activity(t) — the exact expected field sum.
double total_power_at(const Layout& l, double t);

// Exact deposited energy integral sum_cells peak * integral(activity, [0,t]).
double total_energy_to(const Layout& l, double t);

}  // namespace thermal
