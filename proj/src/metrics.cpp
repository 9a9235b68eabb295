#include "metrics.hpp"

#include <cmath>

namespace thermal {

void SsimConfig::validate() const {
  if (window < 3 || window % 2 == 0) fail_arg("ssim window must be odd and >= 3");
  if (!(k1 > 0) || !(k2 > 0)) fail_arg("ssim constants must be positive");
  if (!(dynamic_range > 0)) fail_arg("ssim dynamic range must be positive");
}

namespace {
void require_same_spec(const ScalarField& a, const ScalarField& b, const char* op) {
  if (!(a.spec() == b.spec())) fail_arg(std::string(op) + ": field grids differ");
}
}  // namespace

double rmse(const ScalarField& pred, const ScalarField& truth) {
  require_same_spec(pred, truth, "rmse");
  double acc = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = pred.data()[i] - truth.data()[i];
    acc += d * d;
  }
  return std::sqrt(acc / (double)pred.size());
}

double npd(const ScalarField& pred, const ScalarField& truth, double max_i) {
  require_same_spec(pred, truth, "npd");
  if (!(max_i > 0)) fail_arg("npd: max_i must be positive");
  double acc = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    acc += std::abs(truth.data()[i] - pred.data()[i]);
  return acc / (double)pred.size() / max_i;
}

double ssim(const ScalarField& pred, const ScalarField& truth, const SsimConfig& cfg) {
  require_same_spec(pred, truth, "ssim");
  cfg.validate();
  const int W = pred.width(), H = pred.height(), w = cfg.window;
  if (W < w || H < w) fail_arg("ssim: window larger than the field");
  const double C1 = cfg.c1(), C2 = cfg.c2();
  const double n = (double)(w * w);
  double acc = 0;
  long count = 0;
  for (int y0 = 0; y0 + w <= H; ++y0) {
    for (int x0 = 0; x0 + w <= W; ++x0) {
      double sx = 0, sy = 0;
      for (int y = y0; y < y0 + w; ++y)
        for (int x = x0; x < x0 + w; ++x) {
          sx += pred.at(y, x);
          sy += truth.at(y, x);
        }
      double mx = sx / n, my = sy / n;
      double vx = 0, vy = 0, cxy = 0;
      for (int y = y0; y < y0 + w; ++y)
        for (int x = x0; x < x0 + w; ++x) {
          double dx = pred.at(y, x) - mx;
          double dy = truth.at(y, x) - my;
          vx += dx * dx;
          vy += dy * dy;
          cxy += dx * dy;
        }
      vx /= n;
      vy /= n;
      cxy /= n;
      double num = (2.0 * mx * my + C1) * (2.0 * cxy + C2);
      double den = (mx * mx + my * my + C1) * (vx + vy + C2);
      acc += num / den;
      ++count;
    }
  }
  return acc / (double)count;
}

MetricReport evaluate_pair(const ScalarField& pred, const ScalarField& truth,
                           double max_i, const SsimConfig& ssim_cfg) {
  MetricReport r;
  r.rmse = rmse(pred, truth);
  r.npd = npd(pred, truth, max_i);
  r.ssim = ssim(pred, truth, ssim_cfg);
  r.max_i = max_i;
  return r;
}

}  // namespace thermal
