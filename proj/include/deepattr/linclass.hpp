#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepattr/pooling.hpp"

namespace deepattr {

/// Feature space a model was trained in: code layer, pooling spec and CARR stage.
struct FeatureTag {
  std::string layer = "softmax";
  PoolingSpec spec;
  int stage = 0;

  friend bool operator==(const FeatureTag&, const FeatureTag&) = default;
};

struct LinearModel {
  std::string category;
  std::vector<double> weights;
  double bias = 0.0;
  FeatureTag tag;

  std::size_t dim() const { return weights.size(); }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct TrainConfig {
  std::vector<double> cost_grid{0.01, 0.1, 1.0, 10.0, 100.0};
  /// Stop once (primal - dual) / max(1, primal) falls to this value.
  double tolerance = 1e-4;
  int max_passes = 10000;
  std::uint64_t seed = 0;
  /// Multiplies C for positive examples.
  double positive_weight = 1.0;

  void validate() const;
};

/// Dense row-major feature matrix.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  /// Appends a row; the first row fixes the column count.
  void push_row(std::span<const double> values);
  /// Rows selected by index, in the given order.
  FeatureMatrix subset(std::span<const std::size_t> rows) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct TrainResult {
  LinearModel model;
  bool converged = false;
  int passes = 0;
  double primal = 0.0;
  double dual = 0.0;
  /// Dual objective in minimisation form, (1/2) a'Qa - sum(a), after each pass.
  std::vector<double> dual_history;
};

/// Hinge-loss objective with the bias folded into the regulariser:
/// (1/2)(|w|^2 + b^2) + sum_i C_i max(0, 1 - y_i (w.x_i + b)).
double svm_primal_objective(std::span<const double> weights, double bias, const FeatureMatrix& x,
                            std::span<const int> labels, double cost, double positive_weight = 1.0);

/// Dual coordinate descent for the L1-loss L2-regularised SVM. Labels are +1/-1.
TrainResult train_binary(const FeatureMatrix& x, std::span<const int> labels, double cost,
                         const TrainConfig& config);

double score(const LinearModel& model, std::span<const double> x);

double accuracy(const LinearModel& model, const FeatureMatrix& x, std::span<const int> labels);

struct CostSelection {
  double cost = 0.0;
  std::vector<double> validation_accuracy;  // one per grid entry
};

/// Picks C by validation accuracy (ties to the earlier grid entry). Without a validation
/// set a stratified 80/20 split of the training rows is drawn with config.seed.
CostSelection select_cost(const FeatureMatrix& x, std::span<const int> labels,
                          const FeatureMatrix* val_x, std::span<const int> val_labels,
                          const TrainConfig& config);

/// Selects C then retrains on the training rows plus any validation rows.
LinearModel train_with_selection(const FeatureMatrix& x, std::span<const int> labels,
                                 const FeatureMatrix* val_x, std::span<const int> val_labels,
                                 const TrainConfig& config, const std::string& category,
                                 CostSelection* selection = nullptr);

/// Per-image 0/1 labels over categories.
using LabelMatrix = std::vector<std::vector<std::uint8_t>>;

std::vector<int> binary_labels(const LabelMatrix& labels, std::size_t category);

struct OvrResult {
  /// Empty where the category lacked positives or negatives.
  std::vector<std::optional<LinearModel>> models;
  std::vector<CostSelection> selections;
};

OvrResult train_ovr(const FeatureMatrix& x, const LabelMatrix& labels,
                    const std::vector<std::string>& categories, const TrainConfig& config,
                    const FeatureMatrix* val_x = nullptr, const LabelMatrix* val_labels = nullptr,
                    std::size_t jobs = 1);

}  // namespace deepattr
