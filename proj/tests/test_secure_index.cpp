#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracle_vectors.hpp"
#include "peepll/secure_index.hpp"
#include "test_util.hpp"

using namespace peepll;

namespace {

Key32 oracle_token() { return testutil::key32(oracle::kEpochToken5); }

std::vector<std::uint32_t> sorted(std::vector<std::uint32_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("derive_params matches the sizing formulas") {
  auto p = derive_params(0.01, 1000);
  CHECK(p.k_star == oracle::kKStar_0_01_1000);
  CHECK(p.m == oracle::kM_0_01_1000);
  CHECK(derive_params(0.001, 200).k_star == oracle::kKStar_0_001_200);
  CHECK(derive_params(0.001, 200).m == oracle::kM_0_001_200);
  CHECK(derive_params(0.2, 200).k_star == oracle::kKStar_0_2_200);
  CHECK(derive_params(0.2, 200).m == oracle::kM_0_2_200);
  // -2 log2(0.25) is exactly 4; no rounding up to 6.
  CHECK(derive_params(0.25, 100).k_star == oracle::kKStar_0_25_100);
  CHECK(derive_params(0.25, 100).m == oracle::kM_0_25_100);
}

TEST_CASE("derive_params from event rate, retention and identifiers per event") {
  auto p = derive_params(0.01, 50.0, 10.0, 2.0);
  CHECK(p.n == 1000);
  CHECK(p == [] {
    auto q = derive_params(0.01, 1000);
    q.r_events = 50;
    q.p_retention = 10;
    q.c = 2;
    return q;
  }());
  CHECK(p.effective_rate() == doctest::Approx(1.0 / 128));
  CHECK_THROWS_AS(derive_params(0.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(derive_params(1.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(derive_params(0.1, 0.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("full trapdoor positions match the reference script") {
  IndexKeySet keys(testutil::oracle_master(), 14);
  auto token = oracle_token();
  auto t = full_trapdoor(keys, token, 1000);
  CHECK(t.positions == std::vector<std::uint32_t>(std::begin(oracle::kTrapdoorM1000), std::end(oracle::kTrapdoorM1000)));
  auto t2 = full_trapdoor(keys, token, 20198);
  CHECK(t2.positions ==
        std::vector<std::uint32_t>(std::begin(oracle::kTrapdoorM20198), std::end(oracle::kTrapdoorM20198)));
}

TEST_CASE("index key sets") {
  auto master = testutil::oracle_master();
  IndexKeySet keys(master, 4);
  CHECK(keys.size() == 4);
  CHECK(to_hex(keys[3]) == oracle::kKdfIndexKey3);
  CHECK(to_hex(IndexKeySet::public_keys(2)[0]) == oracle::kKdfPublicKey0);
  CHECK_THROWS_AS(IndexKeySet(master, 3), std::invalid_argument);
  CHECK_THROWS_AS(IndexKeySet(master, 0), std::invalid_argument);
}

TEST_CASE("bloom filter wire layout") {
  BloomFilter f(13);
  f.set(0);
  f.set(5);
  f.set(12);
  CHECK(to_hex(f.serialize()) == oracle::kBloom13);
  CHECK(BloomFilter::deserialize(f.serialize()) == f);
  CHECK(f.positions() == std::vector<std::uint32_t>{0, 5, 12});
  CHECK(f.popcount() == 3);

  auto wire = f.serialize();
  wire.back() |= 0x01;  // padding bit
  CHECK_THROWS_AS(BloomFilter::deserialize(wire), std::invalid_argument);
  CHECK_THROWS_AS(BloomFilter::deserialize(from_hex("0000000d84")), std::invalid_argument);
  CHECK_THROWS_AS(BloomFilter::deserialize(from_hex("0000000d840800")), std::invalid_argument);
  CHECK_THROWS_AS(BloomFilter::deserialize(from_hex("0000000400")), std::invalid_argument);
  CHECK_THROWS_AS(BloomFilter::deserialize(from_hex("00")), std::invalid_argument);
  CHECK_THROWS_AS(BloomFilter(7), std::invalid_argument);
  CHECK_THROWS_AS(f.set(13), std::out_of_range);
}

TEST_CASE("subset relation") {
  BloomFilter a(64), b(64);
  a.set(3);
  b.set(3);
  b.set(40);
  CHECK(a.is_subset_of(b));
  CHECK_FALSE(b.is_subset_of(a));
  CHECK_FALSE(a.is_subset_of(BloomFilter(72)));
}

TEST_CASE("partial trapdoor samples half the keys without repetition") {
  IndexKeySet keys(testutil::oracle_master(), 14);
  auto token = oracle_token();
  auto full = full_trapdoor(keys, token, 20198);
  SeededRandom rng(4);
  std::set<std::vector<std::uint32_t>> subsets;
  for (int i = 0; i < 200; ++i) {
    auto t = partial_trapdoor(keys, token, 20198, rng);
    REQUIRE(t.keys_used.size() == 7);
    CHECK(std::set<std::uint32_t>(t.keys_used.begin(), t.keys_used.end()).size() == 7);
    for (std::size_t j = 0; j < t.positions.size(); ++j) {
      CHECK(t.positions[j] == full.positions[t.keys_used[j]]);
    }
    subsets.insert(sorted(t.keys_used));
  }
  // C(14,7) = 3432 subsets; 200 draws should hit many distinct ones.
  CHECK(subsets.size() > 150);
}

TEST_CASE("key subsets are chosen uniformly") {
  IndexKeySet keys(testutil::oracle_master(), 8);
  SeededRandom rng(6);
  std::vector<double> counts(8, 0);
  for (int i = 0; i < 8000; ++i) {
    for (auto k : partial_trapdoor(keys, as_bytes("q"), 512, rng).keys_used) counts[k] += 1;
  }
  CHECK(testutil::chi_square(counts) < 24.3);  // df 7, 0.999
}

TEST_CASE("no false negatives for stored filters") {
  auto params = derive_params(0.01, 1000);
  params.b = calibrate_blinding(params, params.effective_rate());
  IndexKeySet keys(testutil::oracle_master(), params.k_star);
  SeededRandom rng(8);
  for (int i = 0; i < 1000; ++i) {
    Bytes item(16);
    rng.fill(item);
    auto stored = build_stored_filter(keys, item, params.m, params.b, rng);
    REQUIRE(contains(stored, partial_trapdoor(keys, item, params.m, rng)));
    REQUIRE(contains(stored, full_trapdoor(keys, item, params.m)));
  }
}

TEST_CASE("blinding sets b distinct bits") {
  SeededRandom rng(12);
  BloomFilter f(1024);
  auto blinded = blind(f, 100, rng);
  CHECK(blinded.popcount() == 100);
  CHECK(blind(f, 1023, rng).popcount() == 1023);
  BloomFilter g(64);
  g.set(1);
  auto more = blind(g, 10, rng);
  CHECK(g.is_subset_of(more));
  CHECK(more.popcount() <= 11);
  CHECK(more.popcount() >= 10);
  CHECK(blind(f, 0, rng) == f);
  CHECK_THROWS_AS(blind(f, 1024, rng), std::invalid_argument);
}

TEST_CASE("spurious match rate grows with b") {
  // k* = 4 keeps the rates at b <= m/8 measurable with 10^4 samples.
  auto params = derive_params(0.25, 200);
  IndexKeySet keys(testutil::oracle_master(), params.k_star);
  SeededRandom rng(13);
  Bytes victim = to_bytes("10.1.2.3");
  std::vector<int> hits;
  for (std::uint32_t b : {0u, params.m / 32, params.m / 16, params.m / 8}) {
    int h = 0;
    for (int i = 0; i < 10000; ++i) {
      Bytes foreign(12);
      rng.fill(foreign);
      auto stored = build_stored_filter(keys, victim, params.m, b, rng);
      h += contains(stored, partial_trapdoor(keys, foreign, params.m, rng));
    }
    hits.push_back(h);
  }
  CAPTURE(hits[0]);
  CAPTURE(hits[1]);
  CAPTURE(hits[2]);
  CAPTURE(hits[3]);
  CHECK(hits[0] <= hits[1]);
  CHECK(hits[1] < hits[2]);
  CHECK(hits[2] < hits[3]);
}

TEST_CASE("blinding positions are uniform") {
  SeededRandom rng(15);
  std::vector<double> counts(32, 0);
  for (int i = 0; i < 4000; ++i) {
    for (auto pos : blind(BloomFilter(32), 5, rng).positions()) counts[pos] += 1;
  }
  CHECK(testutil::chi_square(counts) < 61.1);  // df 31, 0.999
}

TEST_CASE("calibrated blinding hits the target rate") {
  SeededRandom rng(14);
  for (double target : {0.05, 0.1, 0.3}) {
    CAPTURE(target);
    auto params = derive_params(target * target, 200);
    auto b = calibrate_blinding(params, target);
    IndexKeySet keys(testutil::oracle_master(), params.k_star);
    int hits = 0;
    const int trials = 4000;
    for (int i = 0; i < trials; ++i) {
      Bytes victim(8), foreign(8);
      rng.fill(victim);
      rng.fill(foreign);
      auto stored = build_stored_filter(keys, victim, params.m, b, rng);
      hits += contains(stored, partial_trapdoor(keys, foreign, params.m, rng));
    }
    double rate = hits / static_cast<double>(trials);
    double sd = std::sqrt(target * (1 - target) / trials);
    CHECK(std::abs(rate - target) < 5 * sd);
  }
  CHECK_THROWS_AS(calibrate_blinding(derive_params(0.01, 10), 0.0), std::invalid_argument);
  // Below the unblinded rate no blinding is needed; above the reachable rate b saturates.
  CHECK(calibrate_blinding(derive_params(0.01, 1000), 1e-30) == 0);
  auto p = derive_params(0.01, 1000);
  CHECK(calibrate_blinding(p, 0.999999) == p.m - 1);
}

TEST_CASE("trapdoor filter round trip") {
  Trapdoor t{{3, 17, 40}, {0, 1, 2}};
  auto f = t.to_filter(64);
  CHECK(Trapdoor::from_filter(f).positions == std::vector<std::uint32_t>{3, 17, 40});
}
