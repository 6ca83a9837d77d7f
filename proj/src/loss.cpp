#include "crossdose/loss.hpp"

#include <cmath>
#include <vector>

#include "crossdose/error.hpp"

namespace crossdose::loss {
namespace {

void check(std::span<const double> pred, std::span<const double> target, BatchShape shape) {
  if (shape.size() == 0) throw ValidationError("loss: empty batch");
  if (pred.size() != shape.size() || target.size() != shape.size()) {
    throw ValidationError("loss: shape mismatch between prediction, target and batch shape");
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda >= 0)) throw ValidationError("loss lambda must be >= 0");
  ssim.validate();
}

double mae_loss(std::span<const double> pred, std::span<const double> target, BatchShape shape) {
  check(pred, target, shape);
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

double ssim_loss(std::span<const double> pred, std::span<const double> target, BatchShape shape,
                 const metrics::SsimParams& p) {
  check(pred, target, shape);
  const std::size_t n = shape.image_size();
  double acc = 0;
  for (std::size_t b = 0; b < shape.batch; ++b) {
    acc += 1.0 - metrics::ssim_value(pred.subspan(b * n, n), target.subspan(b * n, n), shape.height,
                                     shape.width, p);
  }
  return acc / static_cast<double>(shape.batch);
}

LossValue total_loss(std::span<const double> pred, std::span<const double> target, BatchShape shape,
                     const LossConfig& cfg, std::span<double> grad) {
  check(pred, target, shape);
  cfg.validate();
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != shape.size()) throw ValidationError("loss: gradient buffer has the wrong size");

  LossValue v;
  const double inv_total = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    v.mae += std::abs(d);
    if (want_grad) grad[i] = d > 0 ? inv_total : (d < 0 ? -inv_total : 0.0);
  }
  v.mae *= inv_total;

  if (cfg.lambda > 0) {
    const std::size_t n = shape.image_size();
    std::vector<double> g(want_grad ? n : 0);
    const double inv_batch = 1.0 / static_cast<double>(shape.batch);
    for (std::size_t b = 0; b < shape.batch; ++b) {
      const double s = metrics::ssim_value(pred.subspan(b * n, n), target.subspan(b * n, n), shape.height,
                                           shape.width, cfg.ssim, g);
      v.ssim_loss += 1.0 - s;
      if (want_grad) {
        for (std::size_t i = 0; i < n; ++i) grad[b * n + i] -= cfg.lambda * inv_batch * g[i];
      }
    }
    v.ssim_loss *= inv_batch;
  } else {
    v.ssim_loss = ssim_loss(pred, target, shape, cfg.ssim);
  }
  v.total = v.mae + cfg.lambda * v.ssim_loss;
  return v;
}

LossValue total_loss(const RasterF32& pred, const RasterF32& target, const LossConfig& cfg) {
  require_same_shape(pred, target, "total_loss");
  const std::vector<double> p(pred.data.begin(), pred.data.end());
  const std::vector<double> t(target.data.begin(), target.data.end());
  return total_loss(p, t, BatchShape{1, pred.height, pred.width}, cfg);
}

}  // namespace crossdose::loss
