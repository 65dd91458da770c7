#pragma once

#include <cstdint>
#include <vector>

#include "peepll/bytes.hpp"
#include "peepll/crypto.hpp"
#include "peepll/random.hpp"

namespace peepll {

/// Fixed-size bit array. Bit i lives at (bytes[i/8] >> (7 - i%8)) & 1, which
/// is also the wire layout after the 4-byte big-endian size prefix.
class BloomFilter {
 public:
  static constexpr std::uint32_t kMinBits = 8;

  explicit BloomFilter(std::uint32_t m);

  std::uint32_t size() const noexcept { return m_; }
  bool test(std::uint32_t pos) const;
  void set(std::uint32_t pos);
  std::size_t popcount() const;
  /// Positions of all set bits, ascending.
  std::vector<std::uint32_t> positions() const;
  /// True iff every bit set here is also set in `other` (same size required).
  bool is_subset_of(const BloomFilter& other) const;

  Bytes serialize() const;
  static BloomFilter deserialize(ByteView wire);  // throws std::invalid_argument

  bool operator==(const BloomFilter&) const = default;

 private:
  std::uint32_t m_;
  Bytes bits_;
};

/// Sizing for per-entry secure-index filters.
///
///   n      = r_events * p_retention * c
///   k_star = -2 log2(fp), rounded up to the next even integer
///   m      = ceil(n * k_star / ln 2)
///
/// Lookups use k_star/2 positions, so the effective lookup rate against a
/// filter at fill 1/2 is 2^(-k_star/2).
struct BloomParams {
  double fp = 0.01;
  double r_events = 0;
  double p_retention = 0;
  double c = 2;
  std::uint64_t n = 0;
  std::uint32_t k_star = 0;
  std::uint32_t m = 0;
  std::uint32_t b = 0;

  double effective_rate() const;
  bool operator==(const BloomParams&) const = default;
};

BloomParams derive_params(double fp, double r_events, double p_retention, double c);
/// Shorthand with the capacity n given directly.
BloomParams derive_params(double fp, std::uint64_t n);

/// Blinding bit count b such that a foreign partial trapdoor (k_star/2
/// positions) matches a stored filter with probability closest to
/// `target_rate`. The stored filter holds about F = k_star + b(1 - k_star/m)
/// set bits and the match probability is prod_{i < k_star/2} (F - i)/(m - i).
/// Saturates at b = m - 1.
std::uint32_t calibrate_blinding(const BloomParams& params, double target_rate);

class IndexKeySet {
 public:
  /// keys[i] = kdf(master, "index-key", i), i < r. r must be even.
  IndexKeySet(const MasterSecret& master, std::uint32_t r);
  /// Key set everyone can derive, for the plaintext-item mode.
  static IndexKeySet public_keys(std::uint32_t r);

  std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(keys_.size()); }
  const Key32& operator[](std::size_t i) const { return keys_[i]; }

 private:
  IndexKeySet() = default;
  std::vector<Key32> keys_;
};

struct Trapdoor {
  std::vector<std::uint32_t> positions;
  std::vector<std::uint32_t> keys_used;

  /// Filter of size m with exactly these positions set (the lookup-token form).
  BloomFilter to_filter(std::uint32_t m) const;
  static Trapdoor from_filter(const BloomFilter& filter);
};

Trapdoor full_trapdoor(const IndexKeySet& keys, ByteView item, std::uint32_t m);
/// Uniformly random (r/2)-subset of the keys.
Trapdoor partial_trapdoor(const IndexKeySet& keys, ByteView item, std::uint32_t m, RandomSource& rng);

/// Sets b distinct, uniformly chosen positions (some may already be set).
BloomFilter blind(BloomFilter filter, std::uint32_t b, RandomSource& rng);

/// Full trapdoor of `item` plus b blinding bits.
BloomFilter build_stored_filter(const IndexKeySet& keys, ByteView item, std::uint32_t m,
                                std::uint32_t b, RandomSource& rng);

/// Sets every position of the trapdoor (plain Bloom-filter insert).
void insert(BloomFilter& filter, const Trapdoor& t);

bool contains(const BloomFilter& filter, const Trapdoor& t);

}  // namespace peepll
