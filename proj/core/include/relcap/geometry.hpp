#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace relcap::geometry {

/// Axis-aligned box stored as center (x, y), width w and height h.
/// Construction rejects non-positive extents.
class Box {
 public:
  Box(double x, double y, double w, double h);

  static Box from_corners(double x0, double y0, double x1, double y1);

  double x() const { return x_; }
  double y() const { return y_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double left() const { return x_ - 0.5 * w_; }
  double right() const { return x_ + 0.5 * w_; }
  double top() const { return y_ - 0.5 * h_; }
  double bottom() const { return y_ + 0.5 * h_; }
  double area() const { return w_ * h_; }

  /// True when `other` lies within this box's extent (boundaries inclusive).
  bool contains(const Box& other) const;

  std::array<double, 4> to_array() const { return {x_, y_, w_, h_}; }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double x_, y_, w_, h_;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
Box union_box(const Box& a, const Box& b);

/// Relative geometry of an ordered (subject, object) pair:
/// [dx/sqrt(ws*hs), dy/sqrt(ws*hs), sqrt(wo*ho/(ws*hs)), ws/hs, wo/ho, IoU].
using GeometricFeature = std::array<double, 6>;

GeometricFeature geometric_feature(const Box& subject, const Box& object);

struct ScoredBox {
  Box box;
  double score;
};

inline constexpr double kDefaultNmsIou = 0.5;

/// Greedy non-maximum suppression. Returns kept indices in descending score
/// order (equal scores: lower index first). A candidate is dropped when its
/// IoU with an already kept box exceeds `iou_threshold`.
std::vector<std::size_t> nms(std::span<const ScoredBox> proposals, double iou_threshold = kDefaultNmsIou);

}  // namespace relcap::geometry
