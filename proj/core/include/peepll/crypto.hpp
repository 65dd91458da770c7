#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "peepll/bytes.hpp"
#include "peepll/random.hpp"

namespace peepll {

/// Shared Depositor secret. Never serialized onto the wire.
class MasterSecret {
 public:
  static constexpr std::size_t kSize = 32;

  explicit MasterSecret(const Key32& key) : key_(key) {}
  static MasterSecret generate(RandomSource& rng);
  /// 32 raw bytes or 64 hex characters (surrounding whitespace ignored).
  static MasterSecret load(const std::filesystem::path& path);
  void save_hex(const std::filesystem::path& path) const;

  const Key32& bytes() const noexcept { return key_; }

 private:
  Key32 key_;
};

/// HMAC-SHA256.
Key32 tag(ByteView key, ByteView message);
inline Key32 tag(const Key32& key, ByteView message) { return tag(ByteView{key}, message); }

Key32 sha256(ByteView data);

/// tag(master, label || 0x00 || be64(index)).
Key32 kdf(const MasterSecret& master, std::string_view label, std::uint64_t index);

/// Big-endian value of tag(key, input) reduced mod m. Requires m >= 2.
std::uint32_t prf_position(const Key32& key, ByteView input, std::uint32_t m);

struct EpochTag {
  std::uint64_t epoch_index;
  Key32 tag_bytes;
};

EpochTag epoch_tag(const MasterSecret& master, std::uint64_t epoch);

/// 16 random bytes. Rendered as "pn:<32 hex>" in records.
class Pseudonym {
 public:
  static constexpr std::size_t kSize = 16;
  using Value = std::array<std::uint8_t, kSize>;

  Pseudonym() = default;
  explicit Pseudonym(const Value& v) : value_(v) {}
  static Pseudonym from_bytes(ByteView b);  // throws std::invalid_argument
  static Pseudonym parse(std::string_view text);  // "pn:<hex>" or bare hex

  const Value& value() const noexcept { return value_; }
  std::string hex() const;
  std::string str() const { return "pn:" + hex(); }

  auto operator<=>(const Pseudonym&) const = default;

 private:
  Value value_{};
};

Pseudonym fresh_pseudonym(RandomSource& rng);
Pseudonym fresh_pseudonym();

/// ChaCha20-Poly1305 under a single-use key with an all-zero nonce.
/// Output is ciphertext || 16-byte tag.
Bytes aead_seal(const Key32& key, ByteView plaintext);
/// std::nullopt on authentication failure.
std::optional<Bytes> aead_open(const Key32& key, ByteView sealed);

}  // namespace peepll

template <>
struct std::hash<peepll::Pseudonym> {
  std::size_t operator()(const peepll::Pseudonym& p) const noexcept {
    std::size_t h = 0;
    for (auto b : p.value()) h = h * 131 + b;
    return h;
  }
};
