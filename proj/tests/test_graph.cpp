#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <ldgcn/graph.hpp>
#include <ldgcn/rng.hpp>

#include "oracles.hpp"

using namespace ldgcn;

namespace {

AdjGraph random_graph(size_t n, size_t K, uint64_t seed) {
  Rng rng(seed);
  FreqSignal freq;
  BdstVector bdst;
  freq.values.resize(n);
  bdst.values.resize(n);
  for (double& v : freq.values) v = rng.next_normal();
  for (double& v : bdst.values) v = rng.next_normal();
  return build_bdsag(freq, bdst, K);
}

size_t live_count(const AdjGraph& g) {
  size_t c = 0;
  for (uint8_t a : g.alive) c += a != 0;
  return c;
}

}  // namespace

TEST_CASE("worked 4-node example") {
  FreqSignal freq{{1.0, 2.0, 3.0, 4.0}};
  BdstVector bdst{{1.0, 1.0, 1.0, 1.0}};
  AdjGraph g = build_bdsag(freq, bdst, 1);
  CHECK(g.weight(0, 1) == 0.0);
  CHECK(g.weight(1, 2) == 1.0);
  CHECK(g.weight(2, 3) == 2.0);
  CHECK(g.weight(0, 2) == 0.0);
  CHECK(g.weight(0, 3) == 0.0);
  CHECK(g.weight(1, 3) == 0.0);
  for (size_t i = 0; i < 4; ++i) CHECK(g.weight(i, i) == 1.0);
  CHECK(g.node_features == freq.values);
}

TEST_CASE("a signal sitting exactly on the threshold gives the identity matrix") {
  FreqSignal freq{std::vector<double>(5, 2.5)};
  BdstVector bdst{std::vector<double>(5, 2.5)};
  AdjGraph g = build_bdsag(freq, bdst, 4);
  for (size_t r = 0; r < 5; ++r)
    for (size_t c = 0; c < 5; ++c) CHECK(g.weight(r, c) == (r == c ? 1.0 : 0.0));
}

TEST_CASE("construction preconditions") {
  FreqSignal freq{{1.0, 2.0, 3.0, 4.0}};
  BdstVector bdst{{1.0, 1.0, 1.0, 1.0}};
  CHECK_THROWS_AS(build_bdsag(freq, bdst, 4), std::invalid_argument);  // K == n
  CHECK_THROWS_AS(build_bdsag(freq, bdst, 0), std::invalid_argument);
  BdstVector shorter{{1.0, 1.0}};
  CHECK_THROWS_AS(build_bdsag(freq, shorter, 1), std::invalid_argument);
  FreqSignal one{{1.0}};
  BdstVector one_b{{1.0}};
  CHECK_THROWS_AS(build_bdsag(one, one_b, 1), std::invalid_argument);
}

TEST_CASE("banded construction matches the dense double-loop evaluation") {
  Rng rng(1234);
  for (int rep = 0; rep < 40; ++rep) {
    size_t n = 2 + rng.next_below(63);
    size_t K = 1 + rng.next_below(n - 1);
    FreqSignal freq;
    BdstVector bdst;
    freq.values.resize(n);
    bdst.values.resize(n);
    for (double& v : freq.values) v = rng.next_uniform(-5.0, 5.0);
    for (double& v : bdst.values) v = rng.next_uniform(-5.0, 5.0);
    AdjGraph g = build_bdsag(freq, bdst, K);
    auto dense = oracle::dense_bdsag(freq.values, bdst.values, K);
    for (size_t r = 0; r < n; ++r)
      for (size_t c = 0; c < n; ++c) {
        REQUIRE(g.weight(r, c) == dense[r][c]);
        REQUIRE(g.weight(r, c) == g.weight(c, r));  // symmetry
      }
  }
}

TEST_CASE("sample_view at ratio 1 returns the input untouched") {
  AdjGraph g = random_graph(12, 3, 9);
  AdjGraph v = sample_view(g, 1.0, 42);
  CHECK(v.band == g.band);
  CHECK(v.node_features == g.node_features);
  CHECK(v.alive == g.alive);
}

TEST_CASE("sample_view keeps exactly ceil(ratio*n) nodes and zeroes the rest") {
  AdjGraph g = random_graph(4, 2, 5);
  AdjGraph v = sample_view(g, 0.5, 7);
  CHECK(live_count(v) == 2);
  for (size_t i = 0; i < 4; ++i) {
    if (v.alive[i]) continue;
    CHECK(v.node_features[i] == 0.0);
    CHECK(v.weight(i, i) == 0.0);
    for (size_t j = 0; j < 4; ++j) CHECK(v.weight(i, j) == 0.0);
  }
  // live entries keep their original values
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 4; ++j)
      if (v.alive[i] && v.alive[j]) CHECK(v.weight(i, j) == g.weight(i, j));
}

TEST_CASE("sample_view is deterministic and monotone in the kept count") {
  AdjGraph g = random_graph(20, 4, 77);
  AdjGraph a = sample_view(g, 0.4, 3);
  AdjGraph b = sample_view(g, 0.4, 3);
  CHECK(a.alive == b.alive);
  CHECK(a.band == b.band);
  size_t prev = 0;
  for (double ratio : {0.1, 0.3, 0.5, 0.8, 1.0}) {
    size_t kept = live_count(sample_view(g, ratio, 3));
    CHECK(kept >= prev);
    prev = kept;
  }
  CHECK_THROWS_AS(sample_view(g, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_view(g, 1.5, 1), std::invalid_argument);
}

TEST_CASE("augment leaves channel 0 bit-exact and maps features through tanh") {
  AdjGraph g = random_graph(10, 3, 15);
  g.node_features[2] = 1.0;
  AugmentedGraph aug = augment(g, 1.0, 0.5, 99);
  CHECK(aug.channels[0].band == g.band);
  CHECK(aug.channels[0].node_features == g.node_features);
  CHECK(aug.channels[0].alive == g.alive);
  // R = 1 keeps every node, so channel 1 is exactly tanh on features
  CHECK(aug.channels[1].band == g.band);
  for (size_t i = 0; i < g.n; ++i)
    CHECK(aug.channels[1].node_features[i] == std::tanh(g.node_features[i]));
  CHECK_THAT(aug.channels[1].node_features[2], Catch::Matchers::WithinAbs(0.761594, 1e-6));
}

TEST_CASE("augment validates the view ratios") {
  AdjGraph g = random_graph(6, 2, 1);
  CHECK_THROWS_AS(augment(g, 0.4, 0.3, 0), std::invalid_argument);
  CHECK_THROWS_AS(augment(g, 0.8, 0.6, 0), std::invalid_argument);
  CHECK_NOTHROW(augment(g, 0.5, 0.5, 0));  // boundary legal
}

TEST_CASE("augment with all-zero features keeps channels' features zero") {
  FreqSignal freq{std::vector<double>(8, 0.0)};
  BdstVector bdst{std::vector<double>(8, 1.0)};
  AdjGraph g = build_bdsag(freq, bdst, 2);
  AugmentedGraph aug = augment(g, 1.0, 0.5, 3);
  for (double v : aug.channels[1].node_features) CHECK(v == 0.0);
}

TEST_CASE("aggregation of the worked example") {
  FreqSignal freq{{1.0, 2.0, 3.0, 4.0}};
  BdstVector bdst{{1.0, 1.0, 1.0, 1.0}};
  AdjGraph g = build_bdsag(freq, bdst, 1);
  AugmentedGraph aug;
  aug.channels = {g, g, g};
  auto out = aggregate_nodes(aug);
  std::vector<double> want = {(1.0 * 1 + 0.0 * 2) / 2.0, (0.0 * 1 + 1.0 * 2 + 1.0 * 3) / 3.0,
                              (1.0 * 2 + 1.0 * 3 + 2.0 * 4) / 3.0, (2.0 * 3 + 1.0 * 4) / 2.0};
  REQUIRE(out[0].size() == 4);
  for (size_t i = 0; i < 4; ++i) CHECK_THAT(out[0][i], Catch::Matchers::WithinAbs(want[i], 1e-15));
}

TEST_CASE("uniform unit-weight graph is a fixed point of aggregation") {
  // all-ones features with a zero baseline make every adjacent weight 1, so
  // each neighborhood mean is (degree * 1) / degree = 1
  FreqSignal freq{std::vector<double>(6, 1.0)};
  BdstVector bdst{std::vector<double>(6, 0.0)};
  AdjGraph g = build_bdsag(freq, bdst, 1);
  AugmentedGraph aug;
  aug.channels = {g, g, g};
  auto out = aggregate_nodes(aug);
  for (size_t i = 0; i < g.n; ++i) CHECK_THAT(out[0][i], Catch::Matchers::WithinAbs(1.0, 1e-15));
}

TEST_CASE("dropped nodes aggregate to zero") {
  AdjGraph g = random_graph(10, 3, 21);
  AugmentedGraph aug = augment(g, 0.5, 0.3, 5);
  auto out = aggregate_nodes(aug);
  for (size_t k = 1; k < 3; ++k)
    for (size_t i = 0; i < g.n; ++i)
      if (!aug.channels[k].alive[i]) CHECK(out[k][i] == 0.0);
}

TEST_CASE("graph bytes survive a second round trip unchanged") {
  AdjGraph g = random_graph(17, 5, 31);
  std::vector<uint8_t> bytes = graph_to_bytes(g);
  AdjGraph loaded = graph_from_bytes(bytes);
  CHECK(loaded.n == g.n);
  CHECK(loaded.band_k == g.band_k);
  std::vector<uint8_t> again = graph_to_bytes(loaded);
  CHECK(bytes == again);
}

TEST_CASE("graph loader rejects malformed bytes") {
  AdjGraph g = random_graph(6, 2, 8);
  std::vector<uint8_t> bytes = graph_to_bytes(g);

  std::vector<uint8_t> magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(graph_from_bytes(magic), std::runtime_error);

  std::vector<uint8_t> truncated(bytes.begin(), bytes.end() - 3);
  CHECK_THROWS_AS(graph_from_bytes(truncated), std::runtime_error);

  // break symmetry: weights start after magic+n+K, entry (0,1) vs (1,0)
  std::vector<uint8_t> askew = bytes;
  size_t base = 12;  // header bytes before the dense matrix
  size_t pos01 = base + (0 * 6 + 1) * 4;
  askew[pos01] ^= 0x40;
  CHECK_THROWS_AS(graph_from_bytes(askew), std::runtime_error);
}

TEST_CASE("sampled views of sampled views only shrink") {
  AdjGraph g = random_graph(30, 6, 55);
  AdjGraph once = sample_view(g, 0.6, 1);
  AdjGraph twice = sample_view(once, 0.6, 2);
  CHECK(live_count(twice) <= live_count(once));
  for (size_t i = 0; i < g.n; ++i)
    if (twice.alive[i]) CHECK(once.alive[i]);  // can never resurrect a node
}
