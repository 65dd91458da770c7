#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <span>

#include "peepll/bytes.hpp"

namespace peepll {

/// Source of random bytes. Also a UniformRandomBitGenerator so it plugs into
/// <random> distributions and std::sample/std::shuffle.
class RandomSource {
 public:
  using result_type = std::uint64_t;

  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  result_type operator()();
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform integer in [0, bound).
  std::uint64_t uniform(std::uint64_t bound);
};

/// OpenSSL DRBG. RNG failure throws CryptoError.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

/// Deterministic ChaCha20 keystream keyed by SHA-256(seed, stream). Used for
/// reproducible simulations and tests; thread-safe.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed, std::uint64_t stream = 0);
  ~SeededRandom() override;
  SeededRandom(const SeededRandom&) = delete;
  SeededRandom& operator=(const SeededRandom&) = delete;

  void fill(std::span<std::uint8_t> out) override;

 private:
  void refill();

  std::mutex mu_;
  void* ctx_;  // EVP_CIPHER_CTX
  std::array<std::uint8_t, 4096> buf_{};
  std::size_t pos_;
};

std::shared_ptr<RandomSource> system_random();

}  // namespace peepll
