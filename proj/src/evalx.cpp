#include "deepattr/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "deepattr/log.hpp"

namespace deepattr {

RankedList::RankedList(std::vector<RankedItem> items) : items_(std::move(items)) {
  for (const auto& it : items_) {
    if (std::isnan(it.score)) throw std::invalid_argument("NaN score for item " + it.id);
  }
  std::stable_sort(items_.begin(), items_.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

std::size_t RankedList::num_relevant() const {
  return static_cast<std::size_t>(
      std::count_if(items_.begin(), items_.end(), [](const RankedItem& i) { return i.relevant; }));
}

double average_precision(const RankedList& ranked, ApVariant variant) {
  const std::size_t total = ranked.num_relevant();
  if (total == 0) throw std::invalid_argument("undefined AP: no relevant items");
  const auto& items = ranked.items();
  if (variant == ApVariant::AllPoint) {
    // extended precision so that rational cases such as 5/12 round to the nearest double
    long double sum = 0.0L;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < items.size(); ++r) {
      if (!items[r].relevant) continue;
      ++hits;
      sum += static_cast<long double>(hits) / static_cast<long double>(r + 1);
    }
    return static_cast<double>(sum / static_cast<long double>(total));
  }
  std::vector<double> recall;
  std::vector<double> precision;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < items.size(); ++r) {
    if (items[r].relevant) ++hits;
    recall.push_back(static_cast<double>(hits) / static_cast<double>(total));
    precision.push_back(static_cast<double>(hits) / static_cast<double>(r + 1));
  }
  double ap = 0.0;
  for (int t = 0; t <= 10; ++t) {
    const double thr = t / 10.0;
    double best = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
      if (recall[i] >= thr - 1e-12) best = std::max(best, precision[i]);
    }
    ap += best / 11.0;
  }
  return ap;
}

MetricReport mean_ap(const std::vector<std::pair<std::string, RankedList>>& per_category,
                     ApVariant variant) {
  if (per_category.empty()) throw std::invalid_argument("mean AP over zero categories");
  MetricReport out;
  out.metric = variant == ApVariant::AllPoint ? "map" : "map_11point";
  double sum = 0.0;
  for (const auto& [name, list] : per_category) {
    double ap = 0.0;
    try {
      ap = average_precision(list, variant);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("category " + name + ": " + e.what());
    }
    out.per_category[name] = ap;
    sum += ap;
  }
  out.value = sum / static_cast<double>(per_category.size());
  return out;
}

MetricReport multiclass_accuracy(std::span<const std::string> predictions,
                                 std::span<const std::string> truths) {
  if (predictions.size() != truths.size() || truths.empty()) {
    throw std::invalid_argument("accuracy needs equal-length, non-empty inputs");
  }
  const std::set<std::string> known(truths.begin(), truths.end());
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // hits, total
  std::size_t unseen = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    auto& [hits, total] = tally[truths[i]];
    ++total;
    if (!known.contains(predictions[i])) ++unseen;
    if (predictions[i] == truths[i]) ++hits;
  }
  if (unseen > 0) log().warn("{} predictions name categories absent from the truth set", unseen);
  MetricReport out;
  out.metric = "accuracy";
  double sum = 0.0;
  for (const auto& [name, ht] : tally) {
    const double acc = static_cast<double>(ht.first) / static_cast<double>(ht.second);
    out.per_category[name] = acc;
    sum += acc;
  }
  out.value = sum / static_cast<double>(tally.size());
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine of vectors of different length");
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return -std::numeric_limits<double>::infinity();
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

void RetrievalIndex::add(std::string id, std::vector<double> vector, std::string group) {
  if (by_id_.contains(id)) throw std::invalid_argument("duplicate retrieval id " + id);
  if (!vectors_.empty() && vector.size() != vectors_.front().size()) {
    throw std::invalid_argument("retrieval vector for " + id + " has a different length");
  }
  for (double v : vector) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite retrieval vector for " + id);
  }
  by_id_[id] = ids_.size();
  ids_.push_back(std::move(id));
  vectors_.push_back(std::move(vector));
  groups_.push_back(std::move(group));
}

std::size_t RetrievalIndex::position(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw std::invalid_argument("unknown retrieval id " + id);
  return it->second;
}

RankedList cosine_rank(const RetrievalIndex& index, const std::string& query_id) {
  const std::size_t q = index.position(query_id);
  const auto qv = index.vector(q);
  if (std::all_of(qv.begin(), qv.end(), [](double v) { return v == 0.0; })) {
    throw std::invalid_argument("query " + query_id + " has a zero vector");
  }
  std::vector<RankedItem> items;
  items.reserve(index.size());
  std::size_t zero = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double s = cosine_similarity(qv, index.vector(i));
    if (std::isinf(s)) ++zero;
    items.push_back({index.id(i), s, index.group(i) == index.group(q), i == q});
  }
  if (zero > 0) log().warn("{} zero-norm vectors ranked last for query {}", zero, query_id);
  return RankedList(std::move(items));
}

MetricReport holidays_map(const RetrievalIndex& index, const std::vector<std::string>& query_ids) {
  MetricReport out;
  out.metric = "holidays_map";
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& qid : query_ids) {
    const RankedList full = cosine_rank(index, qid);
    std::vector<RankedItem> rest;
    for (const auto& it : full.items()) {
      if (!it.is_query) rest.push_back(it);
    }
    const RankedList list(std::move(rest));
    if (list.num_relevant() == 0) {
      log().warn("query {} has no group-mates; skipped", qid);
      continue;
    }
    const double ap = average_precision(list);
    out.per_category[qid] = ap;
    sum += ap;
    ++used;
  }
  if (used == 0) throw std::invalid_argument("no usable retrieval queries");
  out.value = sum / static_cast<double>(used);
  return out;
}

std::vector<std::string> first_of_each_group(const RetrievalIndex& index) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (seen.insert(index.group(i)).second) out.push_back(index.id(i));
  }
  return out;
}

UkbScore ukb_score(const RetrievalIndex& index) {
  if (index.size() == 0) throw std::invalid_argument("empty retrieval index");
  std::map<std::string, std::size_t> group_sizes;
  for (std::size_t i = 0; i < index.size(); ++i) ++group_sizes[index.group(i)];
  for (const auto& [g, n] : group_sizes) {
    if (n != 4) log().warn("group {} has {} members, expected 4", g, n);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const RankedList list = cosine_rank(index, index.id(i));
    const std::size_t top = std::min<std::size_t>(4, list.size());
    for (std::size_t r = 0; r < top; ++r) {
      if (list.items()[r].relevant) total += 1.0;
    }
  }
  UkbScore s;
  s.mean_count = total / static_cast<double>(index.size());
  s.percentage = 25.0 * s.mean_count;
  return s;
}

}  // namespace deepattr
