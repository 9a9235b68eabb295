#include "field.hpp"

#include <algorithm>
#include <cmath>

namespace thermal {

void GridSpec::validate() const {
  if (width < 4 || height < 4) fail_arg("grid must be at least 4x4");
  if (!(pitch > 0) || !std::isfinite(pitch)) fail_arg("grid pitch must be positive");
}

ScalarField::ScalarField(const GridSpec& spec, FieldKind kind, double fill)
    : spec_(spec), kind_(kind) {
  spec.validate();
  v_.assign((size_t)spec.pixels(), fill);
}

void ScalarField::check_values(const std::string& context) const {
  for (double x : v_) {
    if (!std::isfinite(x)) fail_run(context + ": non-finite field value");
    if (kind_ == FieldKind::TemperatureC && x < -273.15)
      fail_run(context + ": temperature below absolute zero");
    if (kind_ == FieldKind::PowerW && x < 0) fail_run(context + ": negative power");
  }
}

FieldStats field_stats(const ScalarField& f) {
  if (f.empty()) fail_arg("field_stats: empty field");
  FieldStats s;
  const double* v = f.data();
  s.min = v[0];
  s.max = v[0];
  double sum = 0.0, comp = 0.0;  // Neumaier compensation
  for (size_t i = 0; i < f.size(); ++i) {
    double x = v[i];
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  s.sum = sum + comp;
  s.mean = s.sum / (double)f.size();
  return s;
}

ScalarField resample(const ScalarField& f, const GridSpec& to) {
  to.validate();
  const GridSpec& from = f.spec();
  ScalarField out(to, f.kind());
  const double sx_scale = (double)from.width / to.width;
  const double sy_scale = (double)from.height / to.height;
  for (int y = 0; y < to.height; ++y) {
    double sy = (y + 0.5) * sy_scale - 0.5;
    int y0 = (int)std::floor(sy);
    y0 = std::clamp(y0, 0, from.height - 2);
    double fy = sy - y0;  // may lie outside [0,1] at edges: linear extrapolation
    for (int x = 0; x < to.width; ++x) {
      double sx = (x + 0.5) * sx_scale - 0.5;
      int x0 = (int)std::floor(sx);
      x0 = std::clamp(x0, 0, from.width - 2);
      double fx = sx - x0;
      double a = f.at(y0, x0), b = f.at(y0, x0 + 1);
      double c = f.at(y0 + 1, x0), d = f.at(y0 + 1, x0 + 1);
      double top = a + fx * (b - a);
      double bot = c + fx * (d - c);
      out.at(y, x) = top + fy * (bot - top);
    }
  }
  return out;
}

void FieldSequence::validate() const {
  if (frames.size() < 2) fail_arg("sequence needs at least 2 frames");
  if (!(dt > 0)) fail_arg("sequence dt must be positive");
  const GridSpec& s0 = frames.front().spec();
  FieldKind k0 = frames.front().kind();
  for (const auto& fr : frames)
    if (!(fr.spec() == s0) || fr.kind() != k0)
      fail_arg("sequence frames must share one grid and kind");
}

}  // namespace thermal
