#include <doctest.h>

#include <cmath>
#include <random>

#include "layout.hpp"
#include "oracles.hpp"

using namespace thermal;

namespace {

// A time at which the cell's waveform is on: the on-interval starts at phase.
double on_time(const CellPlacement& c) {
  return c.activity.kind == ActivityKind::Constant ? 0.0 : c.activity.phase;
}

bool same_layout(const Layout& a, const Layout& b) {
  if (a.cells.size() != b.cells.size()) return false;
  if (a.total_power_budget != b.total_power_budget) return false;
  for (size_t i = 0; i < a.cells.size(); ++i) {
    const auto &x = a.cells[i], &y = b.cells[i];
    if (x.cell_class != y.cell_class) return false;
    if (x.rect.x0 != y.rect.x0 || x.rect.y0 != y.rect.y0 || x.rect.w != y.rect.w ||
        x.rect.h != y.rect.h)
      return false;
    if (x.peak_power != y.peak_power) return false;
    if (x.activity.kind != y.activity.kind || x.activity.duty != y.activity.duty ||
        x.activity.period != y.activity.period || x.activity.phase != y.activity.phase)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("single-cell layout carries the whole budget") {
  GridSpec g{64, 64};
  Layout l = generate_layout(0, g, ClassMix{1, 0, 0}, 1e-3);
  REQUIRE(l.cells.size() == 1);
  CHECK(oracle::rel_err(l.cells[0].peak_power, 1e-3) < 1e-12);
  ScalarField p = rasterize_power(l, on_time(l.cells[0]));
  CHECK(oracle::rel_err(field_stats(p).sum, 1e-3) < 1e-12);
}

TEST_CASE("generation is deterministic in the seed") {
  GridSpec g{64, 64};
  ClassMix mix{5, 3, 2};
  Layout a = generate_layout(1234, g, mix, 2e-3);
  Layout b = generate_layout(1234, g, mix, 2e-3);
  CHECK(same_layout(a, b));
  Layout c = generate_layout(1235, g, mix, 2e-3);
  CHECK_FALSE(same_layout(a, c));
}

TEST_CASE("200 layouts have no pairwise cell overlaps (brute force)") {
  GridSpec g{64, 64};
  ClassMix mix{6, 3, 2};
  for (uint64_t seed = 0; seed < 200; ++seed) {
    Layout l = generate_layout(seed, g, mix, 2e-3);
    REQUIRE(l.cells.size() == 11);
    for (size_t i = 0; i < l.cells.size(); ++i)
      for (size_t j = i + 1; j < l.cells.size(); ++j) {
        const PixelRect &a = l.cells[i].rect, &b = l.cells[j].rect;
        bool overlap = a.x0 < b.x0 + b.w && b.x0 < a.x0 + a.w && a.y0 < b.y0 + b.h &&
                       b.y0 < a.y0 + a.h;
        CHECK_FALSE(overlap);
      }
  }
}

TEST_CASE("class side lengths stay in their bands over 1000 cells") {
  GridSpec g{64, 64};
  ClassMix mix{6, 3, 2};
  int seen = 0;
  for (uint64_t seed = 0; seen < 1000; ++seed) {
    Layout l = generate_layout(seed, g, mix, 2e-3);
    for (const auto& c : l.cells) {
      int lo = 0, hi = 0;
      switch (c.cell_class) {
        case CellClass::BasicGate: lo = kBasicSideMin; hi = kBasicSideMax; break;
        case CellClass::Sequential: lo = kSequentialSideMin; hi = kSequentialSideMax; break;
        case CellClass::CombinationalBlock:
          lo = kCombinationalSideMin;
          hi = kCombinationalSideMax;
          break;
      }
      CHECK(c.rect.w >= lo);
      CHECK(c.rect.w <= hi);
      CHECK(c.rect.h >= lo);
      CHECK(c.rect.h <= hi);
      ++seen;
    }
  }
  CHECK(seen >= 1000);
}

TEST_CASE("rasterize: one 2x2 cell at 4 mW spreads 1 mW per pixel") {
  GridSpec g{8, 8};
  Layout l;
  l.spec = g;
  l.total_power_budget = 4e-3;
  CellPlacement c;
  c.cell_class = CellClass::BasicGate;
  c.rect = {3, 2, 2, 2};
  c.peak_power = 4e-3;
  c.activity = ActivityProfile{ActivityKind::Constant, 1.0, 1e-3, 0.0};
  l.cells.push_back(c);
  l.validate();
  ScalarField p = rasterize_power(l, 0.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      bool inside = x >= 3 && x < 5 && y >= 2 && y < 4;
      CHECK(p.at(y, x) == (inside ? 1e-3 : 0.0));
    }
  CHECK(oracle::rel_err(field_stats(p).sum, 4e-3) < 1e-12);
}

TEST_CASE("square wave is off in its off interval") {
  GridSpec g{8, 8};
  Layout l;
  l.spec = g;
  l.total_power_budget = 1e-3;
  CellPlacement c;
  c.cell_class = CellClass::Sequential;
  c.rect = {0, 0, 4, 4};
  c.peak_power = 1e-3;
  c.activity = ActivityProfile{ActivityKind::Square, 0.5, 2e-3, 0.0};
  l.cells.push_back(c);
  ScalarField p_on = rasterize_power(l, 0.5e-3);
  ScalarField p_off = rasterize_power(l, 1.5e-3);
  CHECK(field_stats(p_on).sum == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(field_stats(p_off).sum == 0.0);
  CHECK(total_power_at(l, 1.5e-3) == 0.0);
}

TEST_CASE("rasterized sum matches the per-cell sum at many times") {
  GridSpec g{64, 64};
  Layout l = generate_layout(99, g, ClassMix{6, 3, 2}, 2.5e-3);
  for (double t : {0.0, 1e-4, 7e-4, 1e-3, 3.3e-3, 1e-2, 0.11}) {
    double expect = total_power_at(l, t);
    double got = field_stats(rasterize_power(l, t)).sum;
    if (expect == 0.0)
      CHECK(got == 0.0);
    else
      CHECK(oracle::rel_err(got, expect) < 1e-12);
  }
}

TEST_CASE("activity integral matches quadrature") {
  ActivityProfile sq{ActivityKind::Square, 0.4, 3e-3, 1.1e-3};
  ActivityProfile bu{ActivityKind::Burst, 0.15, 7e-3, 6.2e-3};
  ActivityProfile co{ActivityKind::Constant, 1.0, 1e-3, 0.0};
  for (const auto& a : {sq, bu, co}) {
    for (double t : {0.0, 1e-3, 2.7e-3, 9e-3, 0.05}) {
      // Midpoint quadrature on a fine grid; the waveform is piecewise
      // constant so the only error comes from edge cells.
      int n = 200000;
      double h = t / n, acc = 0;
      for (int i = 0; i < n; ++i) acc += a.value((i + 0.5) * h) * h;
      CHECK(std::fabs(a.integral(t) - acc) < 2 * h + 1e-15);
    }
  }
}

TEST_CASE("congestion and argument errors") {
  GridSpec g{8, 8};
  // 8x8 grid cannot hold many 8-24 px combinational blocks.
  CHECK_THROWS_AS(generate_layout(1, g, ClassMix{0, 0, 9}, 1e-3), Error);
  CHECK_THROWS_AS(generate_layout(1, g, ClassMix{0, 0, 0}, 1e-3), Error);
  CHECK_THROWS_AS(generate_layout(1, g, ClassMix{1, 0, 0}, 0.0), Error);
  GridSpec tiny{4, 4};
  // Combinational blocks need at least 8 px sides.
  CHECK_THROWS_AS(generate_layout(1, tiny, ClassMix{0, 0, 1}, 1e-3), Error);
}

TEST_CASE("layout validation rejects overlap and oversubscribed budget") {
  GridSpec g{8, 8};
  Layout l;
  l.spec = g;
  l.total_power_budget = 1e-3;
  CellPlacement a;
  a.rect = {0, 0, 4, 4};
  a.peak_power = 6e-4;
  CellPlacement b = a;
  b.rect = {2, 2, 4, 4};
  b.peak_power = 6e-4;
  l.cells = {a, b};
  CHECK_THROWS_AS(l.validate(), Error);  // overlap (and over budget)
  l.cells[1].rect = {4, 4, 4, 4};
  CHECK_THROWS_AS(l.validate(), Error);  // 1.2 mW over a 1 mW budget
  l.cells[1].peak_power = 4e-4;
  CHECK_NOTHROW(l.validate());
}

TEST_CASE("dominant class is the largest covered area") {
  GridSpec g{32, 32};
  Layout l;
  l.spec = g;
  l.total_power_budget = 1e-3;
  CellPlacement big;
  big.cell_class = CellClass::CombinationalBlock;
  big.rect = {0, 0, 10, 10};
  big.peak_power = 5e-4;
  CellPlacement small;
  small.cell_class = CellClass::BasicGate;
  small.rect = {20, 20, 3, 3};
  small.peak_power = 5e-4;
  l.cells = {big, small};
  CHECK(l.dominant_class() == CellClass::CombinationalBlock);
}
