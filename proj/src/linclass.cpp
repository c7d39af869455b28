#include "deepattr/linclass.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "deepattr/log.hpp"
#include "deepattr/parallel.hpp"

namespace deepattr {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_inputs(const FeatureMatrix& x, std::span<const int> labels) {
  if (x.rows() != labels.size()) {
    throw std::invalid_argument("feature rows (" + std::to_string(x.rows()) +
                                ") and labels (" + std::to_string(labels.size()) + ") differ");
  }
  bool pos = false;
  bool neg = false;
  for (int y : labels) {
    if (y == 1) pos = true;
    else if (y == -1) neg = true;
    else throw std::invalid_argument("labels must be +1 or -1");
  }
  if (!pos || !neg) throw std::invalid_argument("degenerate labels");
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (double v : x.row(r)) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (cost_grid.empty()) throw std::invalid_argument("cost grid is empty");
  for (double c : cost_grid) {
    if (!(c > 0.0)) throw std::invalid_argument("cost values must be positive");
  }
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (max_passes <= 0) throw std::invalid_argument("max_passes must be positive");
  if (!(positive_weight > 0.0)) throw std::invalid_argument("positive_weight must be positive");
}

void FeatureMatrix::push_row(std::span<const double> values) {
  if (rows_ == 0 && data_.empty()) cols_ = values.size();
  if (values.size() != cols_) {
    throw std::invalid_argument("row of length " + std::to_string(values.size()) +
                                " pushed into matrix with " + std::to_string(cols_) + " columns");
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::size_t> rows) const {
  FeatureMatrix out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

double svm_primal_objective(std::span<const double> weights, double bias, const FeatureMatrix& x,
                            std::span<const int> labels, double cost, double positive_weight) {
  double obj = 0.5 * (dot(weights, weights) + bias * bias);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double margin = labels[i] * (dot(weights, x.row(i)) + bias);
    const double c = labels[i] > 0 ? cost * positive_weight : cost;
    obj += c * std::max(0.0, 1.0 - margin);
  }
  return obj;
}

TrainResult train_binary(const FeatureMatrix& x, std::span<const int> labels, double cost,
                         const TrainConfig& config) {
  config.validate();
  check_inputs(x, labels);
  if (!(cost > 0.0)) throw std::invalid_argument("cost must be positive");

  const std::size_t m = x.rows();
  const std::size_t p = x.cols();
  std::vector<double> w(p, 0.0);
  double b = 0.0;
  std::vector<double> alpha(m, 0.0);
  std::vector<double> upper(m);
  std::vector<double> qdiag(m);
  for (std::size_t i = 0; i < m; ++i) {
    upper[i] = labels[i] > 0 ? cost * config.positive_weight : cost;
    qdiag[i] = dot(x.row(i), x.row(i)) + 1.0;  // augmented bias feature
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);

  TrainResult result;
  for (int pass = 1; pass <= config.max_passes; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      const auto xi = x.row(i);
      const double yi = labels[i];
      const double g = yi * (dot(w, xi) + b) - 1.0;
      double pg = g;
      if (alpha[i] == 0.0) pg = std::min(g, 0.0);
      else if (alpha[i] == upper[i]) pg = std::max(g, 0.0);
      if (std::abs(pg) <= 1e-12) continue;
      const double old = alpha[i];
      alpha[i] = std::clamp(old - g / qdiag[i], 0.0, upper[i]);
      const double delta = (alpha[i] - old) * yi;
      if (delta == 0.0) continue;
      for (std::size_t j = 0; j < p; ++j) w[j] += delta * xi[j];
      b += delta;
    }
    const double wnorm = dot(w, w) + b * b;
    const double alpha_sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    result.dual = alpha_sum - 0.5 * wnorm;
    result.dual_history.push_back(-result.dual);
    result.primal = svm_primal_objective(w, b, x, labels, cost, config.positive_weight);
    result.passes = pass;
    const double gap = (result.primal - result.dual) / std::max(1.0, std::abs(result.primal));
    if (gap <= config.tolerance) {
      result.converged = true;
      break;
    }
  }
  if (!result.converged) {
    log().warn("svm did not converge in {} passes (C={}, primal={}, dual={})", config.max_passes,
               cost, result.primal, result.dual);
  }
  result.model.weights = std::move(w);
  result.model.bias = b;
  return result;
}

double score(const LinearModel& model, std::span<const double> x) {
  if (x.size() != model.weights.size()) {
    throw std::invalid_argument("feature of dimension " + std::to_string(x.size()) +
                                " scored by model of dimension " +
                                std::to_string(model.weights.size()));
  }
  return dot(model.weights, x) + model.bias;
}

double accuracy(const LinearModel& model, const FeatureMatrix& x, std::span<const int> labels) {
  if (x.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const int pred = score(model, x.row(i)) > 0.0 ? 1 : -1;
    if (pred == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x.rows());
}

namespace {

// Stratified 80/20 split; each class keeps at least one training row.
void stratified_split(std::span<const int> labels, std::uint64_t seed,
                      std::vector<std::size_t>& train, std::vector<std::size_t>& val) {
  std::mt19937_64 rng(seed);
  for (int cls : {1, -1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    auto nval = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(members.size())));
    if (members.size() >= 2) nval = std::clamp<std::size_t>(nval, 1, members.size() - 1);
    else nval = 0;
    val.insert(val.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(nval));
    train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(nval), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
}

std::vector<int> pick(std::span<const int> labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels[i]);
  return out;
}

}  // namespace

CostSelection select_cost(const FeatureMatrix& x, std::span<const int> labels,
                          const FeatureMatrix* val_x, std::span<const int> val_labels,
                          const TrainConfig& config) {
  config.validate();
  CostSelection sel;
  if (config.cost_grid.size() == 1) {
    sel.cost = config.cost_grid.front();
    return sel;
  }
  FeatureMatrix fit_x;
  std::vector<int> fit_y;
  FeatureMatrix hold_x;
  std::vector<int> hold_y;
  if (val_x != nullptr && val_x->rows() > 0) {
    fit_x = x;
    fit_y.assign(labels.begin(), labels.end());
    hold_x = *val_x;
    hold_y.assign(val_labels.begin(), val_labels.end());
  } else {
    std::vector<std::size_t> tr;
    std::vector<std::size_t> va;
    stratified_split(labels, config.seed, tr, va);
    fit_x = x.subset(tr);
    fit_y = pick(labels, tr);
    hold_x = x.subset(va);
    hold_y = pick(labels, va);
  }
  double best = -1.0;
  for (double c : config.cost_grid) {
    const TrainResult r = train_binary(fit_x, fit_y, c, config);
    const double acc = accuracy(r.model, hold_x, hold_y);
    sel.validation_accuracy.push_back(acc);
    if (acc > best) {
      best = acc;
      sel.cost = c;
    }
  }
  return sel;
}

LinearModel train_with_selection(const FeatureMatrix& x, std::span<const int> labels,
                                 const FeatureMatrix* val_x, std::span<const int> val_labels,
                                 const TrainConfig& config, const std::string& category,
                                 CostSelection* selection) {
  CostSelection sel = select_cost(x, labels, val_x, val_labels, config);
  LinearModel model;
  if (val_x != nullptr && val_x->rows() > 0) {
    FeatureMatrix all = x;
    std::vector<int> all_y(labels.begin(), labels.end());
    for (std::size_t r = 0; r < val_x->rows(); ++r) all.push_row(val_x->row(r));
    all_y.insert(all_y.end(), val_labels.begin(), val_labels.end());
    model = train_binary(all, all_y, sel.cost, config).model;
  } else {
    model = train_binary(x, labels, sel.cost, config).model;
  }
  model.category = category;
  if (selection != nullptr) *selection = std::move(sel);
  return model;
}

std::vector<int> binary_labels(const LabelMatrix& labels, std::size_t category) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& row : labels) out.push_back(row.at(category) ? 1 : -1);
  return out;
}

OvrResult train_ovr(const FeatureMatrix& x, const LabelMatrix& labels,
                    const std::vector<std::string>& categories, const TrainConfig& config,
                    const FeatureMatrix* val_x, const LabelMatrix* val_labels, std::size_t jobs) {
  config.validate();
  OvrResult out;
  out.models.resize(categories.size());
  out.selections.resize(categories.size());
  parallel_for(categories.size(), jobs, [&](std::size_t c) {
    const auto y = binary_labels(labels, c);
    const bool has_pos = std::find(y.begin(), y.end(), 1) != y.end();
    const bool has_neg = std::find(y.begin(), y.end(), -1) != y.end();
    if (!has_pos || !has_neg) {
      log().warn("category {} has no {} training examples; model omitted", categories[c],
                 has_pos ? "negative" : "positive");
      return;
    }
    std::vector<int> vy;
    if (val_labels != nullptr) vy = binary_labels(*val_labels, c);
    out.models[c] = train_with_selection(x, y, val_x, vy, config, categories[c], &out.selections[c]);
  });
  return out;
}

}  // namespace deepattr
