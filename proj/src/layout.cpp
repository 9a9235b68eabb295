#include "layout.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace thermal {

void ActivityProfile::validate() const {
  if (!(duty >= 0 && duty <= 1)) fail_arg("activity duty must be in [0,1]");
  if (kind != ActivityKind::Constant && !(period > 0))
    fail_arg("periodic activity needs period > 0");
}

double ActivityProfile::value(double t) const {
  if (kind == ActivityKind::Constant) return 1.0;
  double x = t - phase;
  double u = x - period * std::floor(x / period);  // wrap into [0, period)
  return u < duty * period ? 1.0 : 0.0;
}

double ActivityProfile::integral(double t) const {
  if (t <= 0) return 0.0;
  if (kind == ActivityKind::Constant) return t;
  double on = duty * period;
  // Integral of the pulse train from -phase (waveform origin) shifted to 0.
  auto cumulative = [&](double x) {
    // integral of value over waveform-time [0, x), x >= 0
    double k = std::floor(x / period);
    double frac = x - k * period;
    return k * on + std::min(frac, on);
  };
  // value(t) depends on t - phase; integrate in shifted time, handling the
  // possibility that the shifted start (-phase) is negative by offsetting by
  // a whole number of periods (the waveform is periodic).
  double shift = std::ceil(std::max(0.0, phase) / period + 1.0) * period;
  return cumulative(t - phase + shift) - cumulative(-phase + shift);
}

void Layout::validate() const {
  spec.validate();
  double sum = 0;
  for (size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (c.rect.w <= 0 || c.rect.h <= 0) fail_arg("cell rect has non-positive size");
    if (c.rect.x0 < 0 || c.rect.y0 < 0 || c.rect.x0 + c.rect.w > spec.width ||
        c.rect.y0 + c.rect.h > spec.height)
      fail_arg("cell rect outside the grid");
    if (!(c.peak_power > 0)) fail_arg("cell peak power must be positive");
    c.activity.validate();
    for (size_t j = i + 1; j < cells.size(); ++j)
      if (c.rect.intersects(cells[j].rect)) fail_arg("cells overlap");
    sum += c.peak_power;
  }
  if (sum > total_power_budget * (1 + 1e-9))
    fail_arg("cell powers exceed the layout budget");
}

CellClass Layout::dominant_class() const {
  double area[3] = {0, 0, 0};
  for (const auto& c : cells) area[(int)c.cell_class] += c.rect.area();
  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (area[k] > area[best]) best = k;
  return (CellClass)best;
}

namespace {

struct ClassSpec {
  CellClass cls;
  int side_min, side_max;
  int count;
};

ActivityProfile draw_activity(std::mt19937_64& rng) {
  ActivityProfile a;
  switch (rng() % 3) {
    case 0:
      a.kind = ActivityKind::Constant;
      a.duty = 1.0;
      break;
    case 1: {
      a.kind = ActivityKind::Square;
      a.duty = std::uniform_real_distribution<double>(0.3, 0.7)(rng);
      a.period = std::uniform_real_distribution<double>(2e-3, 8e-3)(rng);
      a.phase = std::uniform_real_distribution<double>(0.0, a.period)(rng);
      break;
    }
    default: {
      a.kind = ActivityKind::Burst;
      a.duty = std::uniform_real_distribution<double>(0.1, 0.3)(rng);
      a.period = std::uniform_real_distribution<double>(4e-3, 10e-3)(rng);
      a.phase = std::uniform_real_distribution<double>(0.0, a.period)(rng);
      break;
    }
  }
  return a;
}

}  // namespace

Layout generate_layout(uint64_t seed, const GridSpec& spec, const ClassMix& mix,
                       double power_budget) {
  spec.validate();
  if (!(power_budget > 0)) fail_arg("power budget must be positive");
  if (mix.basic < 0 || mix.sequential < 0 || mix.combinational < 0)
    fail_arg("negative class counts");
  if (mix.basic + mix.sequential + mix.combinational == 0)
    fail_arg("class mix places no cells");

  auto rng = make_rng(seed);
  Layout l;
  l.spec = spec;
  l.total_power_budget = power_budget;

  // Place the largest class first to reduce congestion failures.
  const ClassSpec order[3] = {
      {CellClass::CombinationalBlock, kCombinationalSideMin, kCombinationalSideMax,
       mix.combinational},
      {CellClass::Sequential, kSequentialSideMin, kSequentialSideMax, mix.sequential},
      {CellClass::BasicGate, kBasicSideMin, kBasicSideMax, mix.basic},
  };
  constexpr int kRetries = 500;
  for (const auto& cs : order) {
    int smax_w = std::min(cs.side_max, spec.width);
    int smax_h = std::min(cs.side_max, spec.height);
    if (cs.count > 0 && (cs.side_min > smax_w || cs.side_min > smax_h))
      fail_arg("grid too small for the requested cell class");
    for (int k = 0; k < cs.count; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < kRetries && !placed; ++attempt) {
        CellPlacement c;
        c.cell_class = cs.cls;
        c.rect.w = (int)std::uniform_int_distribution<int>(cs.side_min, smax_w)(rng);
        c.rect.h = (int)std::uniform_int_distribution<int>(cs.side_min, smax_h)(rng);
        c.rect.x0 = (int)std::uniform_int_distribution<int>(0, spec.width - c.rect.w)(rng);
        c.rect.y0 = (int)std::uniform_int_distribution<int>(0, spec.height - c.rect.h)(rng);
        bool clash = false;
        for (const auto& other : l.cells)
          if (c.rect.intersects(other.rect)) {
            clash = true;
            break;
          }
        if (clash) continue;
        c.activity = draw_activity(rng);
        c.peak_power = c.rect.area() *
                       std::uniform_real_distribution<double>(0.5, 1.5)(rng);  // raw weight
        l.cells.push_back(c);
        placed = true;
      }
      if (!placed) fail_run("layout congestion: could not place all cells");
    }
  }
  // Scale raw weights so peak powers sum exactly to the budget.
  double wsum = 0;
  for (const auto& c : l.cells) wsum += c.peak_power;
  for (auto& c : l.cells) c.peak_power *= power_budget / wsum;
  l.validate();
  return l;
}

ScalarField rasterize_power(const Layout& l, double t) {
  if (t < 0) fail_arg("rasterize_power: t must be >= 0");
  ScalarField f(l.spec, FieldKind::PowerW, 0.0);
  for (const auto& c : l.cells) {
    double a = c.activity.value(t);
    if (a == 0.0) continue;
    double per_pixel = c.peak_power * a / c.rect.area();
    for (int y = c.rect.y0; y < c.rect.y0 + c.rect.h; ++y)
      for (int x = c.rect.x0; x < c.rect.x0 + c.rect.w; ++x) f.at(y, x) = per_pixel;
  }
  return f;
}

double total_power_at(const Layout& l, double t) {
  double s = 0;
  for (const auto& c : l.cells) s += c.peak_power * c.activity.value(t);
  return s;
}

double total_energy_to(const Layout& l, double t) {
  double s = 0;
  for (const auto& c : l.cells) s += c.peak_power * c.activity.integral(t);
  return s;
}

}  // namespace thermal
