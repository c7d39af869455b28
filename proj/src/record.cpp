#include "deepattr/record.hpp"

#include <cmath>
#include <stdexcept>

namespace deepattr {

CodeMatrix::CodeMatrix(std::string layer_name, std::size_t rows, std::size_t cols)
    : layer_name_(std::move(layer_name)), rows_(rows), cols_(cols), values_(rows * cols, 0.0f) {}

CodeMatrix::CodeMatrix(std::string layer_name, std::size_t rows, std::size_t cols,
                       std::vector<float> values)
    : layer_name_(std::move(layer_name)), rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw std::invalid_argument("code matrix payload has " + std::to_string(values_.size()) +
                                " values, expected " + std::to_string(rows_ * cols_));
  }
}

void CodeMatrix::validate() const {
  if (rows_ == 0 || cols_ == 0) throw std::invalid_argument("empty code matrix");
  for (std::size_t r = 0; r < rows_; ++r) {
    double sum = 0.0;
    for (float v : row(r)) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("non-finite code value in layer " + layer_name_ + " row " +
                                    std::to_string(r));
      }
      if (layer_name_ == "softmax" && v < 0.0f) {
        throw std::invalid_argument("negative softmax code in row " + std::to_string(r));
      }
      sum += v;
    }
    if (layer_name_ == "softmax" && std::abs(sum - 1.0) > 1e-4) {
      throw std::invalid_argument("softmax row " + std::to_string(r) + " sums to " +
                                  std::to_string(sum));
    }
  }
}

const CodeMatrix& ImageRecord::layer(const std::string& name) const {
  const auto it = codes.find(name);
  if (it == codes.end()) throw std::invalid_argument("layer absent: " + name + " (image " + id + ")");
  return it->second;
}

std::size_t ImageRecord::single_label() const {
  std::size_t found = labels.size();
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (labels[c] == 0) continue;
    if (found != labels.size()) throw std::invalid_argument("image " + id + " has several labels");
    found = c;
  }
  if (found == labels.size()) throw std::invalid_argument("image " + id + " has no label");
  return found;
}

}  // namespace deepattr
