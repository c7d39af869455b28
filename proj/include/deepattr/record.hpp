#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "deepattr/geometry.hpp"

namespace deepattr {

/// N regions x D dims of one layer's codes for one image, row-major single precision.
class CodeMatrix {
 public:
  CodeMatrix() = default;
  CodeMatrix(std::string layer_name, std::size_t rows, std::size_t cols);
  CodeMatrix(std::string layer_name, std::size_t rows, std::size_t cols, std::vector<float> values);

  const std::string& layer_name() const { return layer_name_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::span<const float> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
  std::span<float> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  float at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  float& at(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  const std::vector<float>& values() const { return values_; }

  /// Throws on non-finite entries, and for layer "softmax" on negative entries or rows not
  /// summing to 1 within 1e-4.
  void validate() const;

  friend bool operator==(const CodeMatrix&, const CodeMatrix&) = default;

 private:
  std::string layer_name_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> values_;
};

struct ImageRecord {
  std::string id;
  std::int64_t width = 0;
  std::int64_t height = 0;
  /// One 0/1 entry per dataset category.
  std::vector<std::uint8_t> labels;
  std::vector<RegionProposal> proposals;
  std::map<std::string, CodeMatrix> codes;

  BBox frame() const { return BBox{0, 0, width, height}; }
  std::size_t num_regions() const { return proposals.size(); }

  /// Throws "layer absent: <name>" when the layer is missing.
  const CodeMatrix& layer(const std::string& name) const;

  /// Index of the single positive label; throws when the record is not single-label.
  std::size_t single_label() const;
};

}  // namespace deepattr
