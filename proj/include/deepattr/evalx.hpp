#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace deepattr {

struct RankedItem {
  std::string id;
  double score = 0.0;
  bool relevant = false;
  bool is_query = false;
};

/// Items ordered by score descending, ties by id ascending.
class RankedList {
 public:
  RankedList() = default;
  explicit RankedList(std::vector<RankedItem> items);

  const std::vector<RankedItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t num_relevant() const;

 private:
  std::vector<RankedItem> items_;
};

enum class ApVariant { AllPoint, ElevenPoint };

/// Mean of precision at each relevant rank (all-point), or the VOC 2007 11-point
/// interpolated value. Throws "undefined AP" without relevant items.
double average_precision(const RankedList& ranked, ApVariant variant = ApVariant::AllPoint);

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::map<std::string, double> per_category;
};

MetricReport mean_ap(const std::vector<std::pair<std::string, RankedList>>& per_category,
                     ApVariant variant = ApVariant::AllPoint);

/// Balanced accuracy: mean over true categories of the per-category hit rate.
MetricReport multiclass_accuracy(std::span<const std::string> predictions,
                                 std::span<const std::string> truths);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

class RetrievalIndex {
 public:
  void add(std::string id, std::vector<double> vector, std::string group);

  std::size_t size() const { return ids_.size(); }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const std::string& group(std::size_t i) const { return groups_[i]; }
  std::span<const double> vector(std::size_t i) const { return vectors_[i]; }
  /// Throws when the id is unknown.
  std::size_t position(const std::string& id) const;

 private:
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> vectors_;
  std::vector<std::string> groups_;
  std::map<std::string, std::size_t> by_id_;
};

/// Every item (query included and flagged) by cosine similarity to the query. Zero vectors
/// get -infinity. Relevance marks items sharing the query's group.
RankedList cosine_rank(const RetrievalIndex& index, const std::string& query_id);

/// Mean AP over queries with the query removed from its own list.
MetricReport holidays_map(const RetrievalIndex& index, const std::vector<std::string>& query_ids);

/// First member (by insertion order) of every group.
std::vector<std::string> first_of_each_group(const RetrievalIndex& index);

struct UkbScore {
  double mean_count = 0.0;
  double percentage = 0.0;
};

UkbScore ukb_score(const RetrievalIndex& index);

}  // namespace deepattr
