#pragma once

// Random fixtures and slow reference implementations shared by unit and acceptance tests.
// Oracles here deliberately avoid the library's own helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "deepattr/geometry.hpp"
#include "deepattr/linclass.hpp"
#include "deepattr/pooling.hpp"
#include "deepattr/record.hpp"

namespace fixtures {

using namespace deepattr;

inline BBox random_box(std::int64_t w, std::int64_t h, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> xs(0, w - 1);
  std::uniform_int_distribution<std::int64_t> ys(0, h - 1);
  std::int64_t x0 = xs(rng), x1 = xs(rng), y0 = ys(rng), y1 = ys(rng);
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  return BBox{x0, y0, x1 + 1, y1 + 1};
}

/// Softmax-like rows when softmax is true, signed rows otherwise.
inline CodeMatrix random_codes(const std::string& layer, std::size_t n, std::size_t d,
                               std::mt19937_64& rng, bool softmax) {
  CodeMatrix m(layer, n, d);
  std::uniform_real_distribution<float> u(softmax ? 0.0f : -1.0f, 1.0f);
  for (std::size_t r = 0; r < n; ++r) {
    float sum = 0.0f;
    for (auto& v : m.row(r)) {
      v = u(rng);
      sum += v;
    }
    if (softmax) {
      for (auto& v : m.row(r)) v /= sum;
    }
  }
  return m;
}

/// Record with objectness-sorted random proposals, a softmax layer and an fc1 layer.
inline ImageRecord random_record(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                 std::size_t fc1_dim = 0, std::size_t categories = 2) {
  ImageRecord r;
  r.id = "img" + std::to_string(rng() % 100000);
  std::uniform_int_distribution<std::int64_t> side(16, 200);
  r.width = side(rng);
  r.height = side(rng);
  std::uniform_real_distribution<double> obj(0.0, 1.0);
  for (std::size_t k = 0; k < n; ++k) r.proposals.push_back({random_box(r.width, r.height, rng), obj(rng)});
  std::stable_sort(r.proposals.begin(), r.proposals.end(),
                   [](const RegionProposal& a, const RegionProposal& b) { return a.objectness > b.objectness; });
  r.labels.assign(categories, 0);
  r.labels[rng() % categories] = 1;
  r.codes.emplace("softmax", random_codes("softmax", n, d, rng, true));
  if (fc1_dim > 0) r.codes.emplace("fc1", random_codes("fc1", n, fc1_dim, rng, false));
  return r;
}

/// Per-region scale group by direct comparison against interval endpoints.
inline std::size_t oracle_group(const BBox& box, const BBox& frame, const std::vector<double>& bounds) {
  const double ratio = box.area() / frame.area();
  std::size_t g = 0;
  while (g < bounds.size() && ratio > bounds[g]) ++g;
  return g;
}

/// Brute-force multiscale max pooling without normalisation.
inline std::vector<double> oracle_multiscale_max(const ImageRecord& r, const std::string& layer,
                                                 const std::vector<double>& bounds) {
  const CodeMatrix& c = r.layer(layer);
  const std::size_t groups = bounds.size() + 1;
  std::vector<double> out(groups * c.cols(), 0.0);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t d = 0; d < c.cols(); ++d) {
      bool seen = false;
      double best = 0.0;
      for (std::size_t k = 0; k < c.rows(); ++k) {
        if (oracle_group(r.proposals[k].bbox, r.frame(), bounds) != g) continue;
        const double v = c.at(k, d);
        if (!seen || v > best) best = v;
        seen = true;
      }
      out[g * c.cols() + d] = best;
    }
  }
  return out;
}

/// AP from its definition: for each relevant item count the relevant items ranked at or
/// above it (pairwise comparisons), divide by its rank.
struct ApItem {
  std::string id;
  double score;
  bool relevant;
};

inline double oracle_ap(const std::vector<ApItem>& items) {
  auto before = [](const ApItem& a, const ApItem& b) {
    return a.score > b.score || (a.score == b.score && a.id < b.id);
  };
  std::vector<std::pair<std::size_t, long double>> precisions;  // rank, precision
  for (const auto& i : items) {
    if (!i.relevant) continue;
    std::size_t rank = 1;
    std::size_t hits = 1;
    for (const auto& j : items) {
      if (&j == &i || !before(j, i)) continue;
      ++rank;
      if (j.relevant) ++hits;
    }
    precisions.emplace_back(rank, static_cast<long double>(hits) / static_cast<long double>(rank));
  }
  std::sort(precisions.begin(), precisions.end());
  long double sum = 0.0L;
  for (const auto& p : precisions) sum += p.second;
  return static_cast<double>(sum / static_cast<long double>(precisions.size()));
}

/// Slow SVM reference: accelerated projected gradient (FISTA) on the box-constrained dual of
/// the bias-augmented problem, run until its own relative duality gap is below gap_target.
/// Reports the primal objective of the recovered (w, b).
struct OracleSvm {
  std::vector<double> weights;
  double bias = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  int iterations = 0;
};

inline OracleSvm oracle_svm(const FeatureMatrix& x, const std::vector<int>& y, double cost,
                            double gap_target = 1e-9, int max_iterations = 2000000) {
  const std::size_t m = x.rows();
  const std::size_t p = x.cols();
  std::vector<double> q(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      long double dot = 1.0L;
      for (std::size_t k = 0; k < p; ++k) dot += static_cast<long double>(x.at(i, k)) * x.at(j, k);
      q[i * m + j] = static_cast<double>(y[i] * y[j] * dot);
    }
  }
  double lip = 0.0;  // Frobenius bound on the largest eigenvalue
  for (double v : q) lip += v * v;
  lip = std::sqrt(lip);
  std::vector<double> a(m, 0.0), prev(m, 0.0), z(m, 0.0);
  auto evaluate = [&](OracleSvm& out) {
    out.weights.assign(p, 0.0);
    long double b = 0.0L;
    long double asum = 0.0L;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < p; ++k) out.weights[k] += a[i] * y[i] * x.at(i, k);
      b += a[i] * y[i];
      asum += a[i];
    }
    out.bias = static_cast<double>(b);
    long double norm = b * b;
    for (double w : out.weights) norm += static_cast<long double>(w) * w;
    long double obj = 0.5L * norm;
    for (std::size_t i = 0; i < m; ++i) {
      long double s = b;
      for (std::size_t k = 0; k < p; ++k) s += static_cast<long double>(out.weights[k]) * x.at(i, k);
      obj += cost * std::max(0.0L, 1.0L - y[i] * s);
    }
    out.primal = static_cast<double>(obj);
    out.dual = static_cast<double>(asum - 0.5L * norm);
  };
  OracleSvm out;
  double t = 1.0;
  for (int it = 1; it <= max_iterations; ++it) {
    prev = a;
    for (std::size_t i = 0; i < m; ++i) {
      double g = -1.0;
      for (std::size_t j = 0; j < m; ++j) g += q[i * m + j] * z[j];
      a[i] = std::clamp(z[i] - g / lip, 0.0, cost);
    }
    const double tn = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
    for (std::size_t i = 0; i < m; ++i) z[i] = a[i] + (t - 1.0) / tn * (a[i] - prev[i]);
    t = tn;
    if (it % 200 == 0 || it == max_iterations) {
      evaluate(out);
      out.iterations = it;
      if ((out.primal - out.dual) / std::max(1.0, std::abs(out.primal)) <= gap_target) break;
    }
  }
  return out;
}

/// Random binary problem; separable instances come from a planted hyperplane with margin.
/// Draws are repeated until both classes are present, so separability is never broken.
inline void random_svm_instance(std::mt19937_64& rng, std::size_t m, std::size_t p, bool separable,
                                FeatureMatrix& x, std::vector<int>& y) {
  std::normal_distribution<double> g(0.0, 1.0);
  do {
    std::vector<double> w(p);
    for (double& v : w) v = g(rng);
    x = FeatureMatrix();
    y.clear();
    while (x.rows() < m) {
      std::vector<double> row(p);
      for (double& v : row) v = g(rng);
      double s = 0.3;
      for (std::size_t k = 0; k < p; ++k) s += w[k] * row[k];
      if (separable && std::abs(s) < 0.5) continue;
      int label = s > 0 ? 1 : -1;
      if (!separable && std::uniform_real_distribution<double>(0, 1)(rng) < 0.15) label = -label;
      x.push_row(row);
      y.push_back(label);
    }
  } while (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), -1) == 0);
}

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("deepattr_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
