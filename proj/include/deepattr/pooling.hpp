#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepattr/geometry.hpp"
#include "deepattr/record.hpp"

namespace deepattr {

struct LinearModel;

enum class PoolOp { Max, Average };
enum class Layout { Single, Multiscale, SpatialPyramid };

std::string to_string(PoolOp op);
std::string to_string(Layout layout);
PoolOp parse_pool_op(const std::string& s);   // "max" | "avg" | "average"
Layout parse_layout(const std::string& s);    // "single" | "multiscale" | "spp"

struct PoolingSpec {
  PoolOp op = PoolOp::Max;
  Layout layout = Layout::Multiscale;
  ScaleIntervals intervals;
  std::vector<int> grid_sides{1, 2, 4};
  bool rootsift = true;
  /// Keep only the max_regions proposals with highest objectness; 0 keeps all.
  std::size_t max_regions = 0;

  std::size_t num_blocks() const;
  void validate() const;

  friend bool operator==(const PoolingSpec&, const PoolingSpec&) = default;
};

inline constexpr std::int64_t kNoRegion = -1;

/// Per-dimension pooled values over a region subset. provenance[d] is the region row that
/// supplied the max, or kNoRegion for average pooling.
struct CrpResult {
  std::vector<double> values;
  std::vector<std::int64_t> provenance;
};

struct PooledFeature {
  std::vector<double> values;
  std::size_t code_dim = 0;
  /// [begin, end) into values for each layout block, in concatenation order.
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  std::vector<std::int64_t> provenance;
  PoolOp op = PoolOp::Max;
};

/// Max takes the lowest region index on ties.
CrpResult crp(const CodeMatrix& codes, std::span<const std::size_t> indices, PoolOp op);

/// Layout blocks (0-based, in concatenation order) that a region feeds.
std::vector<std::size_t> region_blocks(const BBox& region, const BBox& frame,
                                       const PoolingSpec& spec);

/// Regions kept by spec.max_regions, ascending index order.
std::vector<std::size_t> candidate_regions(const ImageRecord& record, const PoolingSpec& spec);

/// Pools the given regions of one layer under spec's layout. Empty blocks pool to zeros.
PooledFeature pool_regions(const ImageRecord& record, const std::string& layer_name,
                           const PoolingSpec& spec, std::span<const std::size_t> indices);

PooledFeature pool_image(const ImageRecord& record, const std::string& layer_name,
                         const PoolingSpec& spec);

/// L1-normalise then square root. Throws on negative entries; zero input gives zeros.
std::vector<double> rootsift_normalize(std::span<const double> v);

/// rootsift_normalize after clamping negative entries to zero. Returns how many were clamped.
std::size_t rootsift_clamped(std::vector<double>& v);

struct Attribution {
  std::size_t dim = 0;          // index into the pooled vector
  std::size_t block = 0;
  std::size_t code_dim = 0;     // dim mod D
  double contribution = 0.0;    // weight * value
  std::int64_t region = kNoRegion;
};

/// Dimensions ordered by contribution descending (ties by dimension), each with the region
/// that produced it.
std::vector<Attribution> backtrack(const PooledFeature& pooled, const LinearModel& model);

}  // namespace deepattr
