#include "deepattr/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deepattr/linclass.hpp"
#include "deepattr/log.hpp"

namespace deepattr {

std::string to_string(PoolOp op) { return op == PoolOp::Max ? "max" : "avg"; }

std::string to_string(Layout layout) {
  switch (layout) {
    case Layout::Single: return "single";
    case Layout::Multiscale: return "multiscale";
    case Layout::SpatialPyramid: return "spp";
  }
  return "single";
}

PoolOp parse_pool_op(const std::string& s) {
  if (s == "max") return PoolOp::Max;
  if (s == "avg" || s == "average") return PoolOp::Average;
  throw std::invalid_argument("unknown pooling operator: " + s);
}

Layout parse_layout(const std::string& s) {
  if (s == "single") return Layout::Single;
  if (s == "multiscale") return Layout::Multiscale;
  if (s == "spp" || s == "spatial_pyramid") return Layout::SpatialPyramid;
  throw std::invalid_argument("unknown pooling layout: " + s);
}

std::size_t PoolingSpec::num_blocks() const {
  switch (layout) {
    case Layout::Single: return 1;
    case Layout::Multiscale: return intervals.num_groups();
    case Layout::SpatialPyramid: {
      std::size_t n = 0;
      for (int s : grid_sides) n += static_cast<std::size_t>(s) * static_cast<std::size_t>(s);
      return n;
    }
  }
  return 1;
}

void PoolingSpec::validate() const {
  if (layout == Layout::SpatialPyramid) {
    if (grid_sides.empty()) throw std::invalid_argument("spatial pyramid needs grid sides");
    for (int s : grid_sides) {
      if (s <= 0) throw std::invalid_argument("grid sides must be positive");
    }
  }
}

CrpResult crp(const CodeMatrix& codes, std::span<const std::size_t> indices, PoolOp op) {
  if (indices.empty()) throw std::invalid_argument("crp over an empty region set");
  const std::size_t dim = codes.cols();
  CrpResult out;
  for (std::size_t k : indices) {
    if (k >= codes.rows()) {
      throw std::out_of_range("region index " + std::to_string(k) + " out of range");
    }
  }
  if (op == PoolOp::Max) {
    out.values.assign(dim, 0.0);
    out.provenance.assign(dim, kNoRegion);
    for (std::size_t k : indices) {
      const auto row = codes.row(k);
      for (std::size_t d = 0; d < dim; ++d) {
        const double v = row[d];
        const auto cur = out.provenance[d];
        if (cur == kNoRegion || v > out.values[d] ||
            (v == out.values[d] && static_cast<std::int64_t>(k) < cur)) {
          out.values[d] = v;
          out.provenance[d] = static_cast<std::int64_t>(k);
        }
      }
    }
  } else {
    out.values.assign(dim, 0.0);
    out.provenance.assign(dim, kNoRegion);
    for (std::size_t k : indices) {
      const auto row = codes.row(k);
      for (std::size_t d = 0; d < dim; ++d) out.values[d] += row[d];
    }
    const double n = static_cast<double>(indices.size());
    for (double& v : out.values) v /= n;
  }
  return out;
}

std::vector<std::size_t> region_blocks(const BBox& region, const BBox& frame,
                                       const PoolingSpec& spec) {
  switch (spec.layout) {
    case Layout::Single: return {0};
    case Layout::Multiscale:
      return {assign_scale_group(region_scale(region, frame), spec.intervals) - 1};
    case Layout::SpatialPyramid: {
      std::vector<std::size_t> out;
      // doubled coordinates keep the centre integral
      const std::int64_t cx2 = region.x_min + region.x_max - 2 * frame.x_min;
      const std::int64_t cy2 = region.y_min + region.y_max - 2 * frame.y_min;
      const std::int64_t w2 = 2 * frame.width();
      const std::int64_t h2 = 2 * frame.height();
      std::size_t offset = 0;
      for (int side : spec.grid_sides) {
        const auto s = static_cast<std::int64_t>(side);
        const std::int64_t col = std::clamp<std::int64_t>(cx2 * s / w2, 0, s - 1);
        const std::int64_t row = std::clamp<std::int64_t>(cy2 * s / h2, 0, s - 1);
        out.push_back(offset + static_cast<std::size_t>(row * s + col));
        offset += static_cast<std::size_t>(s * s);
      }
      return out;
    }
  }
  return {0};
}

std::vector<std::size_t> candidate_regions(const ImageRecord& record, const PoolingSpec& spec) {
  std::vector<std::size_t> idx(record.num_regions());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (spec.max_regions == 0 || spec.max_regions >= idx.size()) return idx;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return record.proposals[a].objectness > record.proposals[b].objectness;
  });
  idx.resize(spec.max_regions);
  std::sort(idx.begin(), idx.end());
  return idx;
}

PooledFeature pool_regions(const ImageRecord& record, const std::string& layer_name,
                           const PoolingSpec& spec, std::span<const std::size_t> indices) {
  spec.validate();
  const CodeMatrix& codes = record.layer(layer_name);
  if (record.num_regions() == 0 || indices.empty()) {
    throw std::invalid_argument("no regions (image " + record.id + ")");
  }
  if (codes.rows() != record.num_regions()) {
    throw std::invalid_argument("image " + record.id + ": layer " + layer_name + " has " +
                                std::to_string(codes.rows()) + " rows for " +
                                std::to_string(record.num_regions()) + " proposals");
  }
  const std::size_t dim = codes.cols();
  const std::size_t nblocks = spec.num_blocks();
  std::vector<std::vector<std::size_t>> members(nblocks);
  const BBox frame = record.frame();
  for (std::size_t k : indices) {
    for (std::size_t b : region_blocks(record.proposals.at(k).bbox, frame, spec)) {
      members[b].push_back(k);
    }
  }

  PooledFeature out;
  out.code_dim = dim;
  out.op = spec.op;
  out.values.assign(nblocks * dim, 0.0);
  out.provenance.assign(nblocks * dim, kNoRegion);
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t begin = b * dim;
    out.blocks.emplace_back(begin, begin + dim);
    if (members[b].empty()) continue;
    const CrpResult r = crp(codes, members[b], spec.op);
    std::copy(r.values.begin(), r.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(begin));
    std::copy(r.provenance.begin(), r.provenance.end(),
              out.provenance.begin() + static_cast<std::ptrdiff_t>(begin));
  }
  if (spec.rootsift) {
    const std::size_t clamped = rootsift_clamped(out.values);
    if (clamped > 0) {
      log().debug("rootsift clamped {} negative entries of layer {} (image {})", clamped,
                  layer_name, record.id);
    }
  }
  return out;
}

PooledFeature pool_image(const ImageRecord& record, const std::string& layer_name,
                         const PoolingSpec& spec) {
  const auto idx = candidate_regions(record, spec);
  return pool_regions(record, layer_name, spec, idx);
}

std::vector<double> rootsift_normalize(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) {
    if (x < 0.0) throw std::invalid_argument("rootsift requires non-negative input");
    sum += x;
  }
  std::vector<double> out(v.size(), 0.0);
  if (sum > 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::sqrt(v[i] / sum);
  }
  return out;
}

std::size_t rootsift_clamped(std::vector<double>& v) {
  std::size_t clamped = 0;
  for (double& x : v) {
    if (x < 0.0) {
      x = 0.0;
      ++clamped;
    }
  }
  v = rootsift_normalize(v);
  return clamped;
}

std::vector<Attribution> backtrack(const PooledFeature& pooled, const LinearModel& model) {
  if (pooled.op != PoolOp::Max) {
    throw std::invalid_argument("provenance undefined for average pooling");
  }
  if (model.weights.size() != pooled.values.size()) {
    throw std::invalid_argument("model dimension " + std::to_string(model.weights.size()) +
                                " does not match pooled feature of " +
                                std::to_string(pooled.values.size()));
  }
  std::vector<Attribution> out(pooled.values.size());
  for (std::size_t d = 0; d < out.size(); ++d) {
    out[d].dim = d;
    out[d].block = pooled.code_dim ? d / pooled.code_dim : 0;
    out[d].code_dim = pooled.code_dim ? d % pooled.code_dim : d;
    out[d].contribution = model.weights[d] * pooled.values[d];
    out[d].region = pooled.provenance[d];
  }
  std::stable_sort(out.begin(), out.end(), [](const Attribution& a, const Attribution& b) {
    return a.contribution > b.contribution;
  });
  return out;
}

}  // namespace deepattr
