#include "peepll/secure_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>
#include <numeric>
#include <stdexcept>

namespace peepll {

BloomFilter::BloomFilter(std::uint32_t m) : m_(m), bits_((m + 7) / 8, 0) {
  if (m < kMinBits) throw std::invalid_argument("bloom filter needs at least 8 bits");
}

bool BloomFilter::test(std::uint32_t pos) const {
  if (pos >= m_) throw std::out_of_range("bloom position out of range");
  return (bits_[pos / 8] >> (7 - pos % 8)) & 1;
}

void BloomFilter::set(std::uint32_t pos) {
  if (pos >= m_) throw std::out_of_range("bloom position out of range");
  bits_[pos / 8] |= static_cast<std::uint8_t>(1u << (7 - pos % 8));
}

std::size_t BloomFilter::popcount() const {
  std::size_t n = 0;
  for (auto b : bits_) n += static_cast<std::size_t>(std::popcount(b));
  return n;
}

std::vector<std::uint32_t> BloomFilter::positions() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t byte = 0; byte < bits_.size(); ++byte) {
    auto v = bits_[byte];
    while (v != 0) {
      int lead = std::countl_zero(v);  // bit 7-lead of the byte is the highest set
      out.push_back(byte * 8 + static_cast<std::uint32_t>(lead));
      v = static_cast<std::uint8_t>(v & ~(0x80u >> lead));
    }
  }
  return out;
}

bool BloomFilter::is_subset_of(const BloomFilter& other) const {
  if (other.m_ != m_) return false;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if ((bits_[i] & ~other.bits_[i]) != 0) return false;
  }
  return true;
}

Bytes BloomFilter::serialize() const {
  Bytes out;
  out.reserve(4 + bits_.size());
  append_u32be(out, m_);
  out.insert(out.end(), bits_.begin(), bits_.end());
  return out;
}

BloomFilter BloomFilter::deserialize(ByteView wire) {
  if (wire.size() < 4) throw std::invalid_argument("bloom filter: missing size prefix");
  std::uint32_t m = read_u32be(wire);
  if (m < kMinBits) throw std::invalid_argument("bloom filter: size below minimum");
  if (wire.size() - 4 != (static_cast<std::size_t>(m) + 7) / 8) {
    throw std::invalid_argument("bloom filter: length does not match size prefix");
  }
  BloomFilter f(m);
  std::copy(wire.begin() + 4, wire.end(), f.bits_.begin());
  // Padding bits past m must be zero so the encoding stays canonical.
  if (m % 8 != 0 && (f.bits_.back() & (0xffu >> (m % 8))) != 0) {
    throw std::invalid_argument("bloom filter: nonzero padding bits");
  }
  return f;
}

double BloomParams::effective_rate() const { return std::pow(2.0, -static_cast<double>(k_star) / 2.0); }

BloomParams derive_params(double fp, double r_events, double p_retention, double c) {
  if (!(fp > 0.0 && fp < 1.0)) throw std::invalid_argument("fp must lie in (0, 1)");
  if (!(r_events > 0.0 && p_retention > 0.0 && c > 0.0)) {
    throw std::invalid_argument("event rate, retention and identifiers-per-event must be positive");
  }
  BloomParams p;
  p.fp = fp;
  p.r_events = r_events;
  p.p_retention = p_retention;
  p.c = c;
  p.n = static_cast<std::uint64_t>(std::ceil(r_events * p_retention * c));
  // Guard against -2*log2(0.25) = 4.0000000001 style noise before ceiling.
  double raw = -2.0 * std::log2(fp);
  auto k = static_cast<std::uint32_t>(std::ceil(raw - 1e-9));
  if (k % 2 != 0) ++k;
  p.k_star = std::max<std::uint32_t>(k, 2);
  double m = std::ceil(static_cast<double>(p.n) * p.k_star / std::log(2.0));
  if (m > static_cast<double>(UINT32_MAX)) throw std::invalid_argument("bloom filter too large");
  p.m = std::max<std::uint32_t>(static_cast<std::uint32_t>(m), BloomFilter::kMinBits);
  return p;
}

BloomParams derive_params(double fp, std::uint64_t n) {
  return derive_params(fp, static_cast<double>(n), 1.0, 1.0);
}

namespace {

/// Probability that h distinct foreign positions all land on set bits of a
/// stored filter holding k_star trapdoor bits plus b distinct blinding bits.
double blinded_match_probability(std::uint32_t m, std::uint32_t k_star, std::uint32_t b) {
  double md = m;
  double filled = k_star + b - static_cast<double>(b) * k_star / md;
  double p = 1.0;
  for (std::uint32_t i = 0; i < k_star / 2; ++i) p *= std::max(0.0, filled - i) / (md - i);
  return p;
}

}  // namespace

std::uint32_t calibrate_blinding(const BloomParams& params, double target_rate) {
  if (!(target_rate > 0.0 && target_rate < 1.0)) {
    throw std::invalid_argument("target rate must lie in (0, 1)");
  }
  auto rate = [&](std::uint32_t b) { return blinded_match_probability(params.m, params.k_star, b); };
  std::uint32_t lo = 0, hi = params.m - 1;
  if (rate(lo) >= target_rate) return 0;
  if (rate(hi) <= target_rate) return hi;
  // Smallest b whose rate reaches the target, then the closer neighbour.
  while (lo + 1 < hi) {
    auto mid = lo + (hi - lo) / 2;
    (rate(mid) < target_rate ? lo : hi) = mid;
  }
  return std::abs(rate(lo) - target_rate) < std::abs(rate(hi) - target_rate) ? lo : hi;
}

IndexKeySet::IndexKeySet(const MasterSecret& master, std::uint32_t r) {
  if (r == 0 || r % 2 != 0) throw std::invalid_argument("index key count must be even and positive");
  keys_.reserve(r);
  for (std::uint32_t i = 0; i < r; ++i) keys_.push_back(kdf(master, "index-key", i));
}

IndexKeySet IndexKeySet::public_keys(std::uint32_t r) {
  if (r == 0 || r % 2 != 0) throw std::invalid_argument("index key count must be even and positive");
  MasterSecret zero(Key32{});
  IndexKeySet s;
  for (std::uint32_t i = 0; i < r; ++i) s.keys_.push_back(kdf(zero, "public-index-key", i));
  return s;
}

BloomFilter Trapdoor::to_filter(std::uint32_t m) const {
  BloomFilter f(m);
  for (auto p : positions) f.set(p);
  return f;
}

Trapdoor Trapdoor::from_filter(const BloomFilter& filter) { return {filter.positions(), {}}; }

namespace {

Trapdoor trapdoor_for(const IndexKeySet& keys, ByteView item, std::uint32_t m,
                      std::vector<std::uint32_t> key_indices) {
  Trapdoor t;
  t.positions.reserve(key_indices.size());
  for (auto i : key_indices) t.positions.push_back(prf_position(keys[i], item, m));
  t.keys_used = std::move(key_indices);
  return t;
}

}  // namespace

Trapdoor full_trapdoor(const IndexKeySet& keys, ByteView item, std::uint32_t m) {
  std::vector<std::uint32_t> all(keys.size());
  std::iota(all.begin(), all.end(), 0u);
  return trapdoor_for(keys, item, m, std::move(all));
}

Trapdoor partial_trapdoor(const IndexKeySet& keys, ByteView item, std::uint32_t m, RandomSource& rng) {
  std::vector<std::uint32_t> all(keys.size());
  std::iota(all.begin(), all.end(), 0u);
  std::vector<std::uint32_t> subset;
  subset.reserve(keys.size() / 2);
  std::sample(all.begin(), all.end(), std::back_inserter(subset), keys.size() / 2, rng);
  return trapdoor_for(keys, item, m, std::move(subset));
}

namespace {

// Draws 64-bit words from a RandomSource a block at a time; blinding asks
// for hundreds of thousands of them.
class BufferedWords {
 public:
  using result_type = std::uint64_t;
  /// `expected` sizes the block so small draws do not waste the source.
  BufferedWords(RandomSource& src, std::size_t expected)
      : src_(src), words_(std::clamp<std::size_t>(expected, 1, 512)), pos_(words_.size()) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() {
    if (pos_ == words_.size()) {
      src_.fill(std::span(reinterpret_cast<std::uint8_t*>(words_.data()), words_.size() * sizeof(result_type)));
      pos_ = 0;
    }
    return words_[pos_++];
  }

 private:
  RandomSource& src_;
  std::vector<std::uint64_t> words_;
  std::size_t pos_;
};

}  // namespace

BloomFilter blind(BloomFilter filter, std::uint32_t b, RandomSource& rng) {
  const auto m = filter.size();
  if (b >= m) throw std::invalid_argument("blinding bits must be below m");
  // Floyd's sampling: b distinct positions with O(b) draws.
  BufferedWords words(rng, b + 4);
  std::vector<bool> chosen(m, false);
  for (std::uint32_t j = m - b; j < m; ++j) {
    auto t = std::uniform_int_distribution<std::uint32_t>(0, j)(words);
    chosen[chosen[t] ? j : t] = true;
  }
  for (std::uint32_t i = 0; i < m; ++i) {
    if (chosen[i]) filter.set(i);
  }
  return filter;
}

BloomFilter build_stored_filter(const IndexKeySet& keys, ByteView item, std::uint32_t m,
                                std::uint32_t b, RandomSource& rng) {
  return blind(full_trapdoor(keys, item, m).to_filter(m), b, rng);
}

void insert(BloomFilter& filter, const Trapdoor& t) {
  for (auto p : t.positions) filter.set(p);
}

bool contains(const BloomFilter& filter, const Trapdoor& t) {
  return std::all_of(t.positions.begin(), t.positions.end(),
                     [&](std::uint32_t p) { return p < filter.size() && filter.test(p); });
}

}  // namespace peepll
