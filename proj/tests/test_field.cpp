#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "field.hpp"
#include "oracles.hpp"

using namespace thermal;

TEST_CASE("field_stats on a constant 4x4 field") {
  GridSpec g{4, 4};
  ScalarField f(g, FieldKind::TemperatureC, 25.0);
  FieldStats s = field_stats(f);
  CHECK(s.min == 25.0);
  CHECK(s.max == 25.0);
  CHECK(s.mean == 25.0);
  CHECK(s.sum == 400.0);
}

TEST_CASE("field_stats hand case: one hot pixel") {
  // 2x2 grids are below the 4x4 floor, so embed the same arithmetic in the
  // smallest legal grid scaled up: use a 4x4 with four pixels at 55.
  GridSpec g{4, 4};
  ScalarField f(g, FieldKind::TemperatureC, 25.0);
  f.at(0, 0) = f.at(1, 1) = f.at(2, 2) = f.at(3, 3) = 55.0;
  FieldStats s = field_stats(f);
  CHECK(s.min == 25.0);
  CHECK(s.max == 55.0);
  // 12*25 + 4*55 = 520 -> mean 32.5, the same mix as {55,25,25,25} on 2x2.
  CHECK(s.mean == doctest::Approx(32.5).epsilon(1e-15));
  CHECK(s.sum == doctest::Approx(520.0).epsilon(1e-15));
}

TEST_CASE("field_stats sum matches a plain sequential oracle") {
  std::mt19937_64 rng(42);
  GridSpec g{64, 64};
  ScalarField f = oracle::random_field(g, rng, -100.0, 100.0);
  double mass = 0;
  for (int i = 0; i < g.pixels(); ++i) mass += std::fabs(f.data()[i]);
  FieldStats s = field_stats(f);
  CHECK(std::fabs(s.sum - oracle::sum_plain(f)) / mass < 1e-13);
}

TEST_CASE("field_stats sum is permutation-invariant on many random fields") {
  // Signed values cancel, so errors are judged against the absolute mass
  // sum |x_i| (the natural scale of summation error), not the tiny net sum.
  std::mt19937_64 rng(7);
  GridSpec g{8, 8};
  double worst_naive = 0, worst_perm = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    ScalarField f = oracle::random_field(g, rng, -50.0, 50.0);
    double mass = 0;
    for (int i = 0; i < g.pixels(); ++i) mass += std::fabs(f.data()[i]);
    double naive = oracle::sum_plain(f);
    double lib = field_stats(f).sum;
    ScalarField p = f;
    std::shuffle(p.data(), p.data() + p.size(), rng);
    double lib_perm = field_stats(p).sum;
    worst_naive = std::max(worst_naive, std::fabs(lib - naive) / mass);
    worst_perm = std::max(worst_perm, std::fabs(lib - lib_perm) / mass);
  }
  CHECK(worst_naive < 1e-13);   // compensated vs plain left-to-right
  CHECK(worst_perm < 1e-15);    // compensated sum is order-robust
}

TEST_CASE("resample keeps constants constant") {
  GridSpec g{64, 64};
  ScalarField f(g, FieldKind::TemperatureC, 30.0);
  GridSpec to{128, 128, g.pitch / 2};
  ScalarField r = resample(f, to);
  for (size_t i = 0; i < r.size(); ++i) CHECK(r.data()[i] == doctest::Approx(30.0).epsilon(1e-15));
}

TEST_CASE("resample reproduces a linear ramp exactly") {
  GridSpec g{16, 16};
  ScalarField f(g, FieldKind::Dimensionless, 0.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) f.at(y, x) = (double)x;
  GridSpec to{32, 32, g.pitch / 2};
  ScalarField r = resample(f, to);
  double worst = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      double sx = (x + 0.5) * 0.5 - 0.5;  // index-proportional source coordinate
      worst = std::max(worst, std::fabs(r.at(y, x) - sx));
    }
  CHECK(worst < 1e-9);
}

TEST_CASE("resample round trip on a Gaussian bump stays within 1% of amplitude") {
  GridSpec g{64, 64};
  const double A = 10.0;
  ScalarField f = oracle::gaussian_field(g, 25.0, A, 12 * g.pitch);
  GridSpec up{128, 128, g.pitch / 2};
  ScalarField back = resample(resample(f, up), g);
  double worst = 0;
  for (size_t i = 0; i < f.size(); ++i)
    worst = std::max(worst, std::fabs(back.data()[i] - f.data()[i]));
  CHECK(worst < 0.01 * A);
}

TEST_CASE("grid and value invariants are enforced") {
  GridSpec small{3, 8};
  CHECK_THROWS_AS(small.validate(), Error);
  GridSpec badpitch{8, 8, 0.0};
  CHECK_THROWS_AS(badpitch.validate(), Error);

  GridSpec g{4, 4};
  ScalarField t(g, FieldKind::TemperatureC, 25.0);
  t.at(0, 0) = -300.0;
  CHECK_THROWS_AS(t.check_values("test"), Error);
  ScalarField p(g, FieldKind::PowerW, 0.0);
  p.at(1, 1) = -1e-6;
  CHECK_THROWS_AS(p.check_values("test"), Error);
  ScalarField n(g, FieldKind::Dimensionless, 0.0);
  n.at(2, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(n.check_values("test"), Error);
}

TEST_CASE("sequence invariants are enforced") {
  GridSpec g{4, 4};
  FieldSequence s;
  s.dt = 1e-3;
  s.frames.push_back(ScalarField(g, FieldKind::TemperatureC, 25.0));
  CHECK_THROWS_AS(s.validate(), Error);  // one frame
  s.frames.push_back(ScalarField(g, FieldKind::TemperatureC, 26.0));
  CHECK_NOTHROW(s.validate());
  s.dt = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  s.dt = 1e-3;
  GridSpec g2{8, 8};
  s.frames.push_back(ScalarField(g2, FieldKind::TemperatureC, 25.0));
  CHECK_THROWS_AS(s.validate(), Error);  // mixed specs
}
