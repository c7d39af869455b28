#include "deepattr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace deepattr {

BBox make_bbox(std::int64_t x_min, std::int64_t y_min, std::int64_t x_max, std::int64_t y_max) {
  BBox b{x_min, y_min, x_max, y_max};
  if (!b.valid()) {
    throw std::invalid_argument("invalid box (" + std::to_string(x_min) + "," +
                                std::to_string(y_min) + "," + std::to_string(x_max) + "," +
                                std::to_string(y_max) + ")");
  }
  return b;
}

ScaleIntervals::ScaleIntervals() : boundaries_{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2} {}

ScaleIntervals::ScaleIntervals(std::vector<double> boundaries) : boundaries_(std::move(boundaries)) {
  double prev = 0.0;
  for (double b : boundaries_) {
    if (!(b > prev) || !(b < 1.0)) {
      throw std::invalid_argument("scale boundaries must be strictly ascending inside (0,1)");
    }
    prev = b;
  }
}

double intersection_area(const BBox& a, const BBox& b) {
  const std::int64_t w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const std::int64_t h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0 || h <= 0) return 0.0;
  return static_cast<double>(w) * static_cast<double>(h);
}

double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

double region_scale(const BBox& r, const BBox& frame) {
  const double inter = intersection_area(r, frame);
  if (inter == 0.0) throw std::invalid_argument("region outside frame");
  return inter / frame.area();
}

std::size_t assign_scale_group(double ratio, const ScaleIntervals& intervals) {
  if (!(ratio > 0.0) || ratio > 1.0) {
    throw std::invalid_argument("scale ratio " + std::to_string(ratio) + " outside (0,1]");
  }
  const auto& b = intervals.boundaries();
  // first boundary >= ratio closes the group on the right
  const auto it = std::lower_bound(b.begin(), b.end(), ratio);
  return static_cast<std::size_t>(it - b.begin()) + 1;
}

std::vector<RegionProposal> grid_proposals(const BBox& frame, std::span<const double> scales,
                                           std::span<const double> aspect_ratios,
                                           double stride_fraction) {
  if (!(stride_fraction > 0.0) || stride_fraction > 1.0) {
    throw std::invalid_argument("stride_fraction must lie in (0,1]");
  }
  const std::int64_t fw = frame.width();
  const std::int64_t fh = frame.height();
  std::vector<RegionProposal> out;
  for (double s : scales) {
    if (!(s > 0.0)) throw std::invalid_argument("scales must be positive");
    for (double a : aspect_ratios) {
      if (!(a > 0.0)) throw std::invalid_argument("aspect ratios must be positive");
      const double root = std::sqrt(a);
      const auto w = std::clamp<std::int64_t>(std::llround(s * static_cast<double>(fw) * root), 1, fw);
      const auto h = std::clamp<std::int64_t>(std::llround(s * static_cast<double>(fh) / root), 1, fh);
      const auto step_x = std::max<std::int64_t>(1, std::llround(stride_fraction * static_cast<double>(fw)));
      const auto step_y = std::max<std::int64_t>(1, std::llround(stride_fraction * static_cast<double>(fh)));
      const double objectness = static_cast<double>(w) * static_cast<double>(h) / frame.area();
      for (std::int64_t y = 0; y + h <= fh; y += step_y) {
        for (std::int64_t x = 0; x + w <= fw; x += step_x) {
          out.push_back({BBox{frame.x_min + x, frame.y_min + y, frame.x_min + x + w,
                              frame.y_min + y + h},
                         objectness});
        }
      }
    }
  }
  if (out.empty()) throw std::invalid_argument("degenerate frame");
  return out;
}

std::size_t matched_at_k(std::span<const RegionProposal> proposals,
                         std::span<const BBox> ground_truth, std::size_t k,
                         double iou_threshold) {
  if (ground_truth.empty()) throw std::invalid_argument("no annotations");
  if (k == 0) throw std::invalid_argument("k must be positive");
  for (std::size_t i = 1; i < proposals.size(); ++i) {
    if (proposals[i].objectness > proposals[i - 1].objectness) {
      throw std::invalid_argument("proposals must be sorted by objectness, descending");
    }
  }
  std::vector<bool> taken(ground_truth.size(), false);
  std::size_t matched = 0;
  const std::size_t top = std::min(k, proposals.size());
  for (std::size_t p = 0; p < top && matched < ground_truth.size(); ++p) {
    double best = iou_threshold;
    std::size_t best_g = ground_truth.size();
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(proposals[p].bbox, ground_truth[g]);
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < ground_truth.size()) {
      taken[best_g] = true;
      ++matched;
    }
  }
  return matched;
}

double recall_at_k(std::span<const RegionProposal> proposals, std::span<const BBox> ground_truth,
                   std::size_t k, double iou_threshold) {
  return static_cast<double>(matched_at_k(proposals, ground_truth, k, iou_threshold)) /
         static_cast<double>(ground_truth.size());
}

}  // namespace deepattr
