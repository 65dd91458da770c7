#include "peepll/random.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <cstring>
#include <random>

#include "peepll/crypto.hpp"
#include "peepll/errors.hpp"

namespace peepll {

RandomSource::result_type RandomSource::operator()() {
  std::array<std::uint8_t, 8> b{};
  fill(b);
  result_type v = 0;
  for (auto x : b) v = v << 8 | x;
  return v;
}

std::uint64_t RandomSource::uniform(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform: bound must be positive");
  return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(*this);
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw CryptoError("RAND_bytes failed");
  }
}

SeededRandom::SeededRandom(std::uint64_t seed, std::uint64_t stream) : pos_(buf_.size()) {
  Bytes material = to_bytes("peepll-seeded-random");
  append_u64be(material, seed);
  append_u64be(material, stream);
  Key32 key = sha256(material);
  std::array<std::uint8_t, 16> iv{};  // 32-bit counter || 96-bit nonce
  auto* ctx = EVP_CIPHER_CTX_new();
  if (ctx == nullptr || EVP_EncryptInit_ex(ctx, EVP_chacha20(), nullptr, key.data(), iv.data()) != 1) {
    EVP_CIPHER_CTX_free(ctx);
    throw CryptoError("chacha20 init failed");
  }
  ctx_ = ctx;
}

SeededRandom::~SeededRandom() { EVP_CIPHER_CTX_free(static_cast<EVP_CIPHER_CTX*>(ctx_)); }

void SeededRandom::refill() {
  std::array<std::uint8_t, 4096> zeros{};
  int len = 0;
  if (EVP_EncryptUpdate(static_cast<EVP_CIPHER_CTX*>(ctx_), buf_.data(), &len, zeros.data(),
                        static_cast<int>(zeros.size())) != 1) {
    throw CryptoError("chacha20 keystream failed");
  }
  pos_ = 0;
}

void SeededRandom::fill(std::span<std::uint8_t> out) {
  std::lock_guard lock(mu_);
  std::size_t done = 0;
  while (done < out.size()) {
    if (pos_ == buf_.size()) refill();
    std::size_t n = std::min(out.size() - done, buf_.size() - pos_);
    std::memcpy(out.data() + done, buf_.data() + pos_, n);
    pos_ += n;
    done += n;
  }
}

std::shared_ptr<RandomSource> system_random() {
  static auto rng = std::make_shared<SystemRandom>();
  return rng;
}

}  // namespace peepll
