#pragma once
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace thermal {

// Error kinds map to process exit codes at the CLI boundary:
// InvalidArgument -> 1 (caller mistake), Runtime -> 2 (computation failure).
struct Error : std::runtime_error {
  enum class Kind { InvalidArgument, Runtime };
  Kind kind;
  Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};
[[noreturn]] inline void fail_arg(const std::string& m) {
  throw Error(Error::Kind::InvalidArgument, m);
}
[[noreturn]] inline void fail_run(const std::string& m) {
  throw Error(Error::Kind::Runtime, m);
}

enum class FieldKind { TemperatureC, PowerW, Dimensionless };

// Uniform 2D pixel grid. pitch is the physical pixel size in meters; origin is
// the physical coordinate of the center of pixel (0,0). Indexing is row-major
// with (row = y, col = x) project-wide.
struct GridSpec {
  int width = 0;
  int height = 0;
  double pitch = 3.9e-6;
  double origin_x = 0.0;
  double origin_y = 0.0;

  bool operator==(const GridSpec&) const = default;
  int pixels() const { return width * height; }
  double extent_x() const { return width * pitch; }
  double extent_y() const { return height * pitch; }
  void validate() const;
};

class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(const GridSpec& spec, FieldKind kind, double fill = 0.0);

  const GridSpec& spec() const { return spec_; }
  FieldKind kind() const { return kind_; }
  void set_kind(FieldKind k) { kind_ = k; }
  int width() const { return spec_.width; }
  int height() const { return spec_.height; }

  double& at(int y, int x) { return v_[(size_t)y * spec_.width + x]; }
  double at(int y, int x) const { return v_[(size_t)y * spec_.width + x]; }
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  // Enforces kind-specific value invariants (finiteness, physical bounds).
  void check_values(const std::string& context) const;

 private:
  GridSpec spec_;
  FieldKind kind_ = FieldKind::Dimensionless;
  std::vector<double> v_;
};

struct FieldStats {
  double min = 0, max = 0, mean = 0, sum = 0;
};

// Aggregates with compensated (Neumaier) summation for the sum/mean.
FieldStats field_stats(const ScalarField& f);

// Bilinear resample onto a new grid. The mapping is index-proportional
// (source x = (x'+0.5)*W/W' - 0.5), so constant fields stay constant and
// fields affine in pixel coordinates are reproduced exactly, including at the
// edges (clamped base cell, unclamped fraction = linear extrapolation).
ScalarField resample(const ScalarField& f, const GridSpec& to);

struct FieldSequence {
  std::vector<ScalarField> frames;
  double dt = 0;  // seconds between consecutive frames

  void validate() const;
  const GridSpec& spec() const { return frames.front().spec(); }
  int n_frames() const { return (int)frames.size(); }
};

}  // namespace thermal
