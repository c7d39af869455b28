#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "deepattr/linclass.hpp"
#include "deepattr/pooling.hpp"
#include "support/fixtures.hpp"

using namespace deepattr;

namespace {

PoolingSpec raw_spec(Layout layout, PoolOp op = PoolOp::Max) {
  PoolingSpec s;
  s.layout = layout;
  s.op = op;
  s.rootsift = false;
  return s;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("crp max and average on a small matrix") {
  const CodeMatrix m("softmax", 3, 2, {0.2f, 0.8f, 0.6f, 0.4f, 0.6f, 0.4f});
  const std::vector<std::size_t> idx{0, 1, 2};
  const CrpResult mx = crp(m, idx, PoolOp::Max);
  CHECK(mx.values[0] == doctest::Approx(0.6));
  CHECK(mx.values[1] == doctest::Approx(0.8));
  CHECK(mx.provenance == std::vector<std::int64_t>{1, 0});  // tie on dim 0 goes to row 1
  const CrpResult av = crp(m, idx, PoolOp::Average);
  CHECK(av.values[0] == doctest::Approx((0.2 + 0.6 + 0.6) / 3.0));
  CHECK(av.provenance == std::vector<std::int64_t>{kNoRegion, kNoRegion});
  CHECK_THROWS_AS(crp(m, std::vector<std::size_t>{}, PoolOp::Max), std::invalid_argument);
  CHECK_THROWS_AS(crp(m, std::vector<std::size_t>{3}, PoolOp::Max), std::out_of_range);
}

TEST_CASE("crafted three-region multiscale max equals per-group maxima") {
  ImageRecord r;
  r.id = "crafted";
  r.width = 100;
  r.height = 100;
  r.proposals = {{BBox{0, 0, 20, 20}, 1.0},     // 0.04 -> group 1
                 {BBox{0, 0, 100, 100}, 0.9},   // 1.0  -> group 5
                 {BBox{10, 10, 30, 30}, 0.8}};  // 0.04 -> group 1
  r.codes.emplace("softmax", CodeMatrix("softmax", 3, 2, {0.1f, 0.9f, 0.5f, 0.5f, 0.7f, 0.3f}));
  const PooledFeature f = pool_image(r, "softmax", raw_spec(Layout::Multiscale));
  REQUIRE(f.values.size() == 10);
  const std::vector<double> want{0.7, 0.9, 0, 0, 0, 0, 0, 0, 0.5, 0.5};
  for (std::size_t d = 0; d < 10; ++d) CHECK(f.values[d] == doctest::Approx(want[d]));
  CHECK(f.provenance[0] == 2);
  CHECK(f.provenance[1] == 0);
  CHECK(f.provenance[2] == kNoRegion);
  CHECK(f.values == fixtures::oracle_multiscale_max(r, "softmax", ScaleIntervals().boundaries()));
}

TEST_CASE("multiscale max matches the brute-force oracle") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    const ImageRecord r = fixtures::random_record(rng, 1 + rng() % 20, 1 + rng() % 16);
    const auto f = pool_image(r, "softmax", raw_spec(Layout::Multiscale));
    CHECK(f.values == fixtures::oracle_multiscale_max(r, "softmax", ScaleIntervals().boundaries()));
  }
}

TEST_CASE("max pooling is invariant to region permutation") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 1 + rng() % 12;
    const CodeMatrix m = fixtures::random_codes("softmax", n, 6, rng, true);
    std::vector<std::size_t> perm = all_rows(n);
    std::shuffle(perm.begin(), perm.end(), rng);
    CodeMatrix shuffled("softmax", n, 6);
    for (std::size_t k = 0; k < n; ++k) {
      std::copy(m.row(perm[k]).begin(), m.row(perm[k]).end(), shuffled.row(k).begin());
    }
    const auto a = crp(m, all_rows(n), PoolOp::Max);
    const auto b = crp(shuffled, all_rows(n), PoolOp::Max);
    CHECK(a.values == b.values);
    for (std::size_t d = 0; d < 6; ++d) {
      // provenance maps through the permutation (continuous rows make ties vanishingly rare)
      CHECK(perm[static_cast<std::size_t>(b.provenance[d])] == static_cast<std::size_t>(a.provenance[d]));
    }
  }
}

TEST_CASE("max dominates average and values stay in the unit interval") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 1 + rng() % 15;
    const CodeMatrix m = fixtures::random_codes("softmax", n, 5, rng, true);
    const auto mx = crp(m, all_rows(n), PoolOp::Max);
    const auto av = crp(m, all_rows(n), PoolOp::Average);
    for (std::size_t d = 0; d < 5; ++d) {
      CHECK(mx.values[d] >= av.values[d] - 1e-12);
      CHECK(mx.values[d] >= 0.0);
      CHECK(mx.values[d] <= 1.0);
      CHECK(mx.values[d] == static_cast<double>(m.at(static_cast<std::size_t>(mx.provenance[d]), d)));
    }
  }
}

TEST_CASE("average of identical rows is the row") {
  CodeMatrix m("fc1", 4, 3);
  for (std::size_t k = 0; k < 4; ++k) {
    m.at(k, 0) = 0.25f;
    m.at(k, 1) = -1.5f;
    m.at(k, 2) = 3.0f;
  }
  const auto av = crp(m, all_rows(4), PoolOp::Average);
  CHECK(av.values == std::vector<double>{0.25, -1.5, 3.0});
}

TEST_CASE("single layout over all regions equals crp over all rows") {
  std::mt19937_64 rng(9);
  const ImageRecord r = fixtures::random_record(rng, 12, 7);
  for (PoolOp op : {PoolOp::Max, PoolOp::Average}) {
    const auto f = pool_image(r, "softmax", raw_spec(Layout::Single, op));
    const auto c = crp(r.layer("softmax"), all_rows(12), op);
    CHECK(f.values == c.values);
    CHECK(f.provenance == c.provenance);
  }
}

TEST_CASE("multiscale blocks partition the regions") {
  std::mt19937_64 rng(10);
  const PoolingSpec spec = raw_spec(Layout::Multiscale);
  for (int i = 0; i < 30; ++i) {
    const ImageRecord r = fixtures::random_record(rng, 10, 3);
    for (const auto& p : r.proposals) CHECK(region_blocks(p.bbox, r.frame(), spec).size() == 1);
  }
}

TEST_CASE("spatial pyramid assigns by region centre") {
  PoolingSpec spec = raw_spec(Layout::SpatialPyramid);
  CHECK(spec.num_blocks() == 21);
  const BBox frame{0, 0, 100, 100};
  // centre (25,25): 1x1 cell 0, 2x2 cell 0, 4x4 cell (1,1)
  CHECK(region_blocks(BBox{0, 0, 50, 50}, frame, spec) == std::vector<std::size_t>{0, 1, 5 + 5});
  // centre (75,25): 2x2 cell (row 0, col 1); 4x4 cell (row 1, col 3)
  CHECK(region_blocks(BBox{50, 0, 100, 50}, frame, spec) == std::vector<std::size_t>{0, 2, 5 + 7});
  // centre exactly on the 2x2 boundary belongs to the upper cell
  CHECK(region_blocks(BBox{40, 40, 60, 60}, frame, spec) == std::vector<std::size_t>{0, 4, 5 + 10});
  spec.grid_sides = {};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("empty blocks pool to zeros and dimension is blocks times D") {
  ImageRecord r;
  r.id = "one";
  r.width = 64;
  r.height = 64;
  r.proposals = {{BBox{0, 0, 64, 64}, 1.0}};
  r.codes.emplace("softmax", CodeMatrix("softmax", 1, 4, {0.1f, 0.2f, 0.3f, 0.4f}));
  const auto f = pool_image(r, "softmax", raw_spec(Layout::Multiscale));
  REQUIRE(f.values.size() == 20);
  for (std::size_t d = 0; d < 16; ++d) CHECK(f.values[d] == 0.0);
  CHECK(f.values[16] == doctest::Approx(0.1));
  PoolingSpec spp = raw_spec(Layout::SpatialPyramid);
  CHECK(pool_image(r, "softmax", spp).values.size() == 21 * 4);
}

TEST_CASE("rootsift of a two-hot vector") {
  const std::vector<double> v{1, 1, 0, 0};
  const auto out = rootsift_normalize(v);
  CHECK(out[0] == doctest::Approx(0.707107).epsilon(1e-6));
  CHECK(out[1] == doctest::Approx(std::sqrt(0.5)));
  CHECK(out[2] == 0.0);
  CHECK(rootsift_normalize(std::vector<double>{0, 0, 1}) == std::vector<double>{0, 0, 1});
  CHECK(rootsift_normalize(std::vector<double>{0, 0}) == std::vector<double>{0, 0});
  CHECK_THROWS_AS(rootsift_normalize(std::vector<double>{1, -1}), std::invalid_argument);
}

TEST_CASE("rootsift output has unit norm") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> v(1 + rng() % 50);
    for (double& x : v) x = u(rng);
    CHECK(std::abs(l2(rootsift_normalize(v)) - 1.0) <= 1e-9);
  }
}

TEST_CASE("rootsift clamps negative entries") {
  std::vector<double> v{-1.0, 3.0, 1.0};
  CHECK(rootsift_clamped(v) == 1);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == doctest::Approx(std::sqrt(0.75)));
}

TEST_CASE("top-k truncation keeps the highest-objectness regions") {
  ImageRecord r;
  r.width = 10;
  r.height = 10;
  r.proposals = {{BBox{0, 0, 1, 1}, 0.2}, {BBox{0, 0, 2, 2}, 0.9}, {BBox{0, 0, 3, 3}, 0.5},
                 {BBox{0, 0, 4, 4}, 0.9}};
  PoolingSpec s;
  s.max_regions = 2;
  CHECK(candidate_regions(r, s) == std::vector<std::size_t>{1, 3});
  s.max_regions = 0;
  CHECK(candidate_regions(r, s).size() == 4);
}

TEST_CASE("backtrack matches exhaustive contribution enumeration") {
  std::mt19937_64 rng(13);
  const ImageRecord r = fixtures::random_record(rng, 5, 4);
  const PoolingSpec spec = raw_spec(Layout::Multiscale);
  const auto f = pool_image(r, "softmax", spec);
  LinearModel m;
  std::normal_distribution<double> g;
  for (std::size_t d = 0; d < f.values.size(); ++d) m.weights.push_back(g(rng));
  const auto att = backtrack(f, m);
  REQUIRE(att.size() == f.values.size());
  for (std::size_t i = 0; i + 1 < att.size(); ++i) CHECK(att[i].contribution >= att[i + 1].contribution);
  for (const auto& a : att) {
    CHECK(a.contribution == m.weights[a.dim] * f.values[a.dim]);
    CHECK(a.block == a.dim / 4);
    CHECK(a.code_dim == a.dim % 4);
    if (a.region != kNoRegion) {
      CHECK(f.values[a.dim] == static_cast<double>(r.layer("softmax").at(static_cast<std::size_t>(a.region), a.code_dim)));
    }
  }
  const auto avg = pool_image(r, "softmax", raw_spec(Layout::Multiscale, PoolOp::Average));
  CHECK_THROWS_AS(backtrack(avg, m), std::invalid_argument);
}

TEST_CASE("pooling reports a missing layer") {
  std::mt19937_64 rng(14);
  const ImageRecord r = fixtures::random_record(rng, 3, 3);
  CHECK_THROWS_WITH(pool_image(r, "conv5", raw_spec(Layout::Single)), doctest::Contains("layer absent: conv5"));
}
