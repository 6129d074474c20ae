#include "relcap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "relcap/errors.hpp"

namespace relcap::geometry {

Box::Box(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
  if (!(w > 0.0) || !(h > 0.0) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) ||
      !std::isfinite(h)) {
    throw ConfigError("invalid box (" + std::to_string(x) + ", " + std::to_string(y) + ", " + std::to_string(w) +
                      ", " + std::to_string(h) + "): extents must be positive and finite");
  }
}

Box Box::from_corners(double x0, double y0, double x1, double y1) {
  return Box(0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0);
}

bool Box::contains(const Box& other) const {
  return other.left() >= left() && other.right() <= right() && other.top() >= top() &&
         other.bottom() <= bottom();
}

double intersection_area(const Box& a, const Box& b) {
  double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const Box& a, const Box& b) {
  double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  // corner-based areas so that iou(a, a) is exactly 1
  auto area = [](const Box& r) { return (r.right() - r.left()) * (r.bottom() - r.top()); };
  double u = area(a) + area(b) - inter;
  return std::clamp(inter / u, 0.0, 1.0);
}

Box union_box(const Box& a, const Box& b) {
  return Box::from_corners(std::min(a.left(), b.left()), std::min(a.top(), b.top()),
                           std::max(a.right(), b.right()), std::max(a.bottom(), b.bottom()));
}

GeometricFeature geometric_feature(const Box& s, const Box& o) {
  const double scale = std::sqrt(s.w() * s.h());
  return {
      (o.x() - s.x()) / scale,
      (o.y() - s.y()) / scale,
      std::sqrt((o.w() * o.h()) / (s.w() * s.h())),
      s.w() / s.h(),
      o.w() / o.h(),
      iou(s, o),
  };
}

std::vector<std::size_t> nms(std::span<const ScoredBox> proposals, double iou_threshold) {
  for (const auto& p : proposals) {
    if (!std::isfinite(p.score)) throw ContractError("nms: proposal scores must be finite");
  }
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return proposals[a].score > proposals[b].score; });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(proposals[idx].box, proposals[k].box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

}  // namespace relcap::geometry
