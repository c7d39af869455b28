#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace deepattr {

/// Axis-aligned box in pixel coordinates, half-open: [x_min, x_max) x [y_min, y_max).
struct BBox {
  std::int64_t x_min = 0;
  std::int64_t y_min = 0;
  std::int64_t x_max = 0;
  std::int64_t y_max = 0;

  std::int64_t width() const { return x_max - x_min; }
  std::int64_t height() const { return y_max - y_min; }
  double area() const { return static_cast<double>(width()) * static_cast<double>(height()); }
  bool valid() const { return x_min >= 0 && y_min >= 0 && x_min < x_max && y_min < y_max; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Throws std::invalid_argument unless the box has positive area and non-negative corners.
BBox make_bbox(std::int64_t x_min, std::int64_t y_min, std::int64_t x_max, std::int64_t y_max);

struct RegionProposal {
  BBox bbox;
  double objectness = 0.0;

  friend bool operator==(const RegionProposal&, const RegionProposal&) = default;
};

/// Ascending interior boundaries b_1 < ... < b_{G-1} in (0,1). Group g covers (b_{g-1}, b_g]
/// with b_0 = 0 and b_G = 1.
class ScaleIntervals {
 public:
  ScaleIntervals();  // {1/16, 1/8, 1/4, 1/2}
  explicit ScaleIntervals(std::vector<double> boundaries);

  const std::vector<double>& boundaries() const { return boundaries_; }
  std::size_t num_groups() const { return boundaries_.size() + 1; }

  friend bool operator==(const ScaleIntervals&, const ScaleIntervals&) = default;

 private:
  std::vector<double> boundaries_;
};

double intersection_area(const BBox& a, const BBox& b);

double iou(const BBox& a, const BBox& b);

/// Area of r clipped to frame, as a fraction of the frame area.
double region_scale(const BBox& r, const BBox& frame);

/// 1-based group index of ratio under the half-open-left interval rule.
std::size_t assign_scale_group(double ratio, const ScaleIntervals& intervals);

/// Sliding-window proposals. For every scale s and aspect ratio a the window has area
/// s^2 * area(frame) with width/height = a (clipped to the frame); windows step by
/// stride_fraction of the frame size. Objectness is the window's area ratio.
std::vector<RegionProposal> grid_proposals(const BBox& frame, std::span<const double> scales,
                                           std::span<const double> aspect_ratios,
                                           double stride_fraction);

/// Fraction of ground-truth boxes matched by the top-k proposals with IoU > iou_threshold.
/// Matching is greedy and one-to-one in rank order.
double recall_at_k(std::span<const RegionProposal> proposals, std::span<const BBox> ground_truth,
                   std::size_t k, double iou_threshold = 0.5);

/// Same matching as recall_at_k, returning the matched count instead of the fraction.
std::size_t matched_at_k(std::span<const RegionProposal> proposals,
                         std::span<const BBox> ground_truth, std::size_t k,
                         double iou_threshold = 0.5);

}  // namespace deepattr
