#include "peepll/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/sha.h>

#include <cctype>
#include <fstream>
#include <iterator>
#include <memory>
#include <stdexcept>

#include "peepll/errors.hpp"

namespace peepll {

MasterSecret MasterSecret::generate(RandomSource& rng) {
  Key32 k{};
  rng.fill(k);
  return MasterSecret(k);
}

MasterSecret MasterSecret::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open key file " + path.string());
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Key32 key{};
  if (raw.size() == kSize) {
    std::copy(raw.begin(), raw.end(), key.begin());
    return MasterSecret(key);
  }
  auto first = raw.find_first_not_of(" \t\r\n");
  auto last = raw.find_last_not_of(" \t\r\n");
  std::string_view hex = first == std::string::npos
                             ? std::string_view{}
                             : std::string_view(raw).substr(first, last - first + 1);
  if (hex.size() != 2 * kSize) {
    throw ConfigError("key file must hold 32 raw bytes or 64 hex characters");
  }
  Bytes b;
  try {
    b = from_hex(hex);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("key file: ") + e.what());
  }
  std::copy(b.begin(), b.end(), key.begin());
  return MasterSecret(key);
}

void MasterSecret::save_hex(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write key file " + path.string());
  out << to_hex(key_) << '\n';
}

Key32 tag(ByteView key, ByteView message) {
  Key32 out{};
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), message.data(), message.size(),
           out.data(), &len) == nullptr ||
      len != out.size()) {
    throw CryptoError("HMAC-SHA256 failed");
  }
  return out;
}

Key32 sha256(ByteView data) {
  Key32 out{};
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Key32 kdf(const MasterSecret& master, std::string_view label, std::uint64_t index) {
  if (label.empty()) throw std::invalid_argument("kdf: label must be non-empty");
  Bytes msg = to_bytes(label);
  msg.push_back(0x00);
  append_u64be(msg, index);
  return tag(master.bytes(), msg);
}

std::uint32_t prf_position(const Key32& key, ByteView input, std::uint32_t m) {
  if (m < 2) throw std::invalid_argument("prf_position: m must be >= 2");
  Key32 t = tag(key, input);
  std::uint64_t rem = 0;
  for (auto b : t) rem = (rem << 8 | b) % m;
  return static_cast<std::uint32_t>(rem);
}

EpochTag epoch_tag(const MasterSecret& master, std::uint64_t epoch) {
  return {epoch, kdf(master, "epoch", epoch)};
}

Pseudonym Pseudonym::from_bytes(ByteView b) {
  if (b.size() != kSize) throw std::invalid_argument("pseudonym must be 16 bytes");
  Value v{};
  std::copy(b.begin(), b.end(), v.begin());
  return Pseudonym(v);
}

Pseudonym Pseudonym::parse(std::string_view text) {
  if (text.starts_with("pn:")) text.remove_prefix(3);
  return from_bytes(from_hex(text));
}

std::string Pseudonym::hex() const { return to_hex(value_); }

Pseudonym fresh_pseudonym(RandomSource& rng) {
  Pseudonym::Value v{};
  rng.fill(v);
  return Pseudonym(v);
}

Pseudonym fresh_pseudonym() { return fresh_pseudonym(*system_random()); }

namespace {

constexpr std::size_t kAeadTag = 16;

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

}  // namespace

Bytes aead_seal(const Key32& key, ByteView plaintext) {
  static constexpr std::array<std::uint8_t, 12> kNonce{};
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  Bytes out(plaintext.size() + kAeadTag);
  int len = 0;
  int total = 0;
  if (!ctx ||
      EVP_EncryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, key.data(), kNonce.data()) != 1 ||
      EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                        static_cast<int>(plaintext.size())) != 1) {
    throw CryptoError("aead seal failed");
  }
  total = len;
  if (EVP_EncryptFinal_ex(ctx.get(), out.data() + total, &len) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, kAeadTag, out.data() + plaintext.size()) != 1) {
    throw CryptoError("aead seal failed");
  }
  return out;
}

std::optional<Bytes> aead_open(const Key32& key, ByteView sealed) {
  static constexpr std::array<std::uint8_t, 12> kNonce{};
  if (sealed.size() < kAeadTag) return std::nullopt;
  std::size_t n = sealed.size() - kAeadTag;
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  Bytes out(n);
  std::array<std::uint8_t, kAeadTag> tag_bytes{};
  std::copy(sealed.begin() + static_cast<std::ptrdiff_t>(n), sealed.end(), tag_bytes.begin());
  int len = 0;
  if (!ctx ||
      EVP_DecryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, key.data(), kNonce.data()) != 1 ||
      EVP_DecryptUpdate(ctx.get(), out.data(), &len, sealed.data(), static_cast<int>(n)) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, kAeadTag, tag_bytes.data()) != 1) {
    throw CryptoError("aead open failed");
  }
  int fin = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len, &fin) != 1) return std::nullopt;
  return out;
}

}  // namespace peepll
