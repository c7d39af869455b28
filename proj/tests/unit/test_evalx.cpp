#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "deepattr/evalx.hpp"
#include "support/fixtures.hpp"

using namespace deepattr;

namespace {

RankedList ranked(const std::vector<bool>& relevance) {
  std::vector<RankedItem> items;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    items.push_back({"i" + std::to_string(10 + i), static_cast<double>(relevance.size() - i),
                     relevance[i], false});
  }
  return RankedList(std::move(items));
}

}  // namespace

TEST_CASE("ap of relevance order 0011 is five twelfths") {
  CHECK(average_precision(ranked({false, false, true, true})) == 5.0 / 12.0);
  CHECK(average_precision(ranked({true, true, false})) == 1.0);
  CHECK_THROWS_AS(average_precision(ranked({false, false})), std::invalid_argument);
}

TEST_CASE("eleven-point ap by hand") {
  // precisions at recall 0.5 and 1.0 are 1/3 and 1/2; interpolated max is 1/2 everywhere
  CHECK(average_precision(ranked({false, false, true, true}), ApVariant::ElevenPoint) ==
        doctest::Approx(0.5));
  CHECK(average_precision(ranked({true, false, false, true}), ApVariant::ElevenPoint) ==
        doctest::Approx((6 * 1.0 + 5 * 0.5) / 11.0));
}

TEST_CASE("ap equals the pairwise oracle on random instances") {
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng() % 50;
    std::vector<fixtures::ApItem> oi;
    std::vector<RankedItem> items;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = coarse(rng);  // coarse scores force ties
      const bool rel = rng() % 3 == 0;
      oi.push_back({"id" + std::to_string(rng() % 1000) + "_" + std::to_string(i), s, rel});
      items.push_back({oi.back().id, s, rel, false});
    }
    oi.front().relevant = true;
    items.front().relevant = true;
    CHECK(average_precision(RankedList(items)) == fixtures::oracle_ap(oi));
  }
}

TEST_CASE("ap is invariant under increasing score transforms") {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    std::vector<RankedItem> a, b;
    for (int i = 0; i < 30; ++i) {
      const double s = g(rng);
      const bool rel = i % 4 == 0;
      a.push_back({"x" + std::to_string(i), s, rel, false});
      b.push_back({"x" + std::to_string(i), std::exp(3 * s) + 1, rel, false});
    }
    CHECK(average_precision(RankedList(a)) == average_precision(RankedList(b)));
  }
}

TEST_CASE("random rankings average at least the positive rate") {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u;
  double sum = 0.0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    std::vector<RankedItem> items;
    for (int i = 0; i < 20; ++i) items.push_back({"r" + std::to_string(i), u(rng), i < 5, false});
    sum += average_precision(RankedList(items));
  }
  CHECK(sum / trials >= 5.0 / 20.0);
}

TEST_CASE("ranked lists order ties by id and reject NaN") {
  const RankedList r({{"b", 1.0, false, false}, {"a", 1.0, true, false}, {"c", 2.0, false, false}});
  CHECK(r.items()[0].id == "c");
  CHECK(r.items()[1].id == "a");
  CHECK_THROWS_AS(RankedList({{"n", NAN, false, false}}), std::invalid_argument);
}

TEST_CASE("mean ap averages per-category oracle values") {
  std::mt19937_64 rng(54);
  std::vector<std::pair<std::string, RankedList>> lists;
  double want = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<fixtures::ApItem> oi;
    std::vector<RankedItem> items;
    for (int i = 0; i < 15; ++i) {
      const double s = std::uniform_real_distribution<double>(0, 1)(rng);
      const bool rel = i % 3 == c;
      oi.push_back({"m" + std::to_string(i), s, rel});
      items.push_back({oi.back().id, s, rel, false});
    }
    want += fixtures::oracle_ap(oi);
    lists.emplace_back("c" + std::to_string(c), RankedList(items));
  }
  const MetricReport r = mean_ap(lists);
  CHECK(r.value == doctest::Approx(want / 3.0).epsilon(1e-15));
  CHECK(r.per_category.size() == 3);
  CHECK(r.metric == "map");
}

TEST_CASE("balanced accuracy with one perfect and one half-correct category") {
  const std::vector<std::string> truth{"a", "a", "b", "b"};
  const std::vector<std::string> pred{"a", "a", "b", "a"};
  const MetricReport r = multiclass_accuracy(pred, truth);
  CHECK(r.value == 0.75);
  CHECK(r.per_category.at("a") == 1.0);
  CHECK(r.per_category.at("b") == 0.5);
}

TEST_CASE("cosine similarity") {
  CHECK(cosine_similarity(std::vector<double>{1, 1}, std::vector<double>{1, 0}) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}) ==
        -std::numeric_limits<double>::infinity());
  std::mt19937_64 rng(55);
  std::normal_distribution<double> g;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(5), b(5);
    for (int i = 0; i < 5; ++i) {
      a[i] = g(rng);
      b[i] = g(rng);
    }
    const double s = cosine_similarity(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(s == cosine_similarity(b, a));
  }
}

namespace {

// Holidays mAP from the full pairwise similarity table.
double oracle_holidays(const std::vector<std::vector<double>>& v, const std::vector<int>& group,
                       const std::vector<std::size_t>& queries) {
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t q : queries) {
    std::vector<fixtures::ApItem> items;
    bool any = false;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (j == q) continue;
      double dot = 0, nq = 0, nj = 0;
      for (std::size_t d = 0; d < v[q].size(); ++d) {
        dot += v[q][d] * v[j][d];
        nq += v[q][d] * v[q][d];
        nj += v[j][d] * v[j][d];
      }
      const bool rel = group[j] == group[q];
      any = any || rel;
      items.push_back({"h" + std::to_string(j), dot / (std::sqrt(nq) * std::sqrt(nj)), rel});
    }
    if (!any) continue;
    sum += fixtures::oracle_ap(items);
    ++counted;
  }
  return sum / static_cast<double>(counted);
}

}  // namespace

TEST_CASE("holidays map on a hand-set two-group index") {
  RetrievalIndex idx;
  // group A members point right, group B up; one A member sits closer to B
  idx.add("h0", {1, 0}, "A");
  idx.add("h1", {0.9, 0.1}, "A");
  idx.add("h2", {0.2, 1}, "A");
  idx.add("h3", {0, 1}, "B");
  idx.add("h4", {0.1, 0.9}, "B");
  // query h0: ranking h1 (A), h2 (A) vs h4, h3 -> cos(h0,h2)=0.196 > cos(h0,h4)=0.110: AP 1
  // query h3: ranking h4 (B), h2 (A), h1, h0 -> AP 1
  const MetricReport r = holidays_map(idx, first_of_each_group(idx));
  CHECK(r.value == 1.0);
  // with h2 as the A query, h3 and h4 outrank h0/h1: relevant at ranks 3,4 -> (1/3 + 2/4)/2
  const MetricReport r2 = holidays_map(idx, {"h2"});
  CHECK(r2.value == doctest::Approx(5.0 / 12.0).epsilon(1e-15));
}

TEST_CASE("holidays map matches exhaustive enumeration on a three-group index") {
  std::mt19937_64 rng(56);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> v;
  std::vector<int> group;
  RetrievalIndex idx;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> x{g(rng), g(rng), g(rng)};
    v.push_back(x);
    group.push_back(i % 3);
    idx.add("h" + std::to_string(i), x, "g" + std::to_string(i % 3));
  }
  std::vector<std::string> qids;
  std::vector<std::size_t> qpos;
  for (std::size_t i = 0; i < 12; ++i) {
    qids.push_back("h" + std::to_string(i));
    qpos.push_back(i);
  }
  CHECK(holidays_map(idx, qids).value == doctest::Approx(oracle_holidays(v, group, qpos)).epsilon(1e-15));
}

TEST_CASE("holidays skips queries without group-mates") {
  RetrievalIndex idx;
  idx.add("a", {1, 0}, "A");
  idx.add("b", {0, 1}, "B");
  idx.add("c", {0.1, 1}, "B");
  const MetricReport r = holidays_map(idx, {"a", "b"});
  CHECK(r.value == 1.0);
  CHECK(r.per_category.size() == 1);
}

TEST_CASE("cosine rank keeps the query and rejects a zero query") {
  RetrievalIndex idx;
  idx.add("q", {1, 0}, "A");
  idx.add("z", {0, 0}, "B");
  idx.add("n", {0.5, 0.5}, "A");
  const RankedList r = cosine_rank(idx, "q");
  REQUIRE(r.size() == 3);
  CHECK(r.items()[0].id == "q");
  CHECK(r.items()[0].is_query);
  CHECK(r.items()[2].id == "z");
  CHECK_THROWS(cosine_rank(idx, "z"));
  CHECK_THROWS(cosine_rank(idx, "missing"));
}

TEST_CASE("ukb score is four with identical group vectors") {
  RetrievalIndex idx;
  for (int gi = 0; gi < 5; ++gi) {
    std::vector<double> v(5, 0.0);
    v[gi] = 1.0;
    for (int m = 0; m < 4; ++m) idx.add("u" + std::to_string(gi * 4 + m), v, "g" + std::to_string(gi));
  }
  const UkbScore s = ukb_score(idx);
  CHECK(s.mean_count == 4.0);
  CHECK(s.percentage == 100.0);
}

TEST_CASE("ukb score stays within one and four") {
  std::mt19937_64 rng(57);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  RetrievalIndex idx;
  for (int i = 0; i < 40; ++i) idx.add("r" + std::to_string(i), {u(rng), u(rng), u(rng), u(rng)}, "g" + std::to_string(i / 4));
  const UkbScore s = ukb_score(idx);
  CHECK(s.mean_count >= 1.0);
  CHECK(s.mean_count <= 4.0);
}
