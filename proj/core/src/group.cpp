#include "peepll/group.hpp"

#include <openssl/bn.h>
#include <openssl/ec.h>
#include <openssl/obj_mac.h>

#include <algorithm>
#include <stdexcept>

#include "peepll/errors.hpp"

namespace peepll {

std::string_view to_string(GroupProfile p) {
  return p == GroupProfile::production ? "production" : "test";
}

GroupProfile parse_group_profile(std::string_view s) {
  if (s == "production") return GroupProfile::production;
  if (s == "test") return GroupProfile::test;
  throw std::invalid_argument("unknown group profile: " + std::string(s));
}

namespace {

// ---------------------------------------------------------------- test group

std::uint64_t powmod(std::uint64_t base, std::uint64_t e, std::uint64_t mod) {
  std::uint64_t result = 1 % mod;
  base %= mod;
  while (e > 0) {
    if (e & 1) result = result * base % mod;
    base = base * base % mod;
    e >>= 1;
  }
  return result;
}

class SmallSchnorrGroup final : public Group {
 public:
  GroupProfile profile() const override { return GroupProfile::test; }
  std::size_t element_size() const override { return 4; }
  Element generator() const override { return encode(test_group::kGenerator); }
  Element identity() const override { return encode(1); }

  Element exp(const Element& base, const Scalar& e) const override {
    return encode(powmod(decode(base), reduce(e), test_group::kModulus));
  }
  Element mul(const Element& a, const Element& b) const override {
    return encode(decode(a) * decode(b) % test_group::kModulus);
  }
  Element div(const Element& a, const Element& b) const override {
    // b^(p-2) is the inverse mod the prime p.
    auto inv = powmod(decode(b), test_group::kModulus - 2, test_group::kModulus);
    return encode(decode(a) * inv % test_group::kModulus);
  }
  void validate(const Element& e) const override { (void)decode(e); }

  Scalar random_scalar(RandomSource& rng) const override {
    return scalar(1 + rng.uniform(test_group::kOrder - 1));
  }
  Scalar scalar(std::uint64_t v) const override {
    Bytes b;
    append_u64be(b, v % test_group::kOrder);
    return {b};
  }
  std::uint64_t index_domain() const override { return test_group::kOrder; }

 private:
  static Element encode(std::uint64_t v) {
    Bytes b;
    append_u32be(b, static_cast<std::uint32_t>(v));
    return {b};
  }

  static std::uint64_t decode(const Element& e) {
    if (e.bytes.size() != 4) throw ProtocolError("protocol", "test-group element must be 4 bytes");
    std::uint64_t v = read_u32be(e.bytes);
    // Members of the order-q subgroup are exactly the nonzero residues with v^q = 1.
    if (v == 0 || v >= test_group::kModulus || powmod(v, test_group::kOrder, test_group::kModulus) != 1) {
      throw ProtocolError("protocol", "not a test-group element");
    }
    return v;
  }

  static std::uint64_t reduce(const Scalar& s) {
    std::uint64_t v = 0;
    for (auto b : s.bytes) v = (v << 8 | b) % test_group::kOrder;
    return v;
  }
};

// ---------------------------------------------------------------- P-256

struct BnCtxDeleter {
  void operator()(BN_CTX* c) const { BN_CTX_free(c); }
};
struct BnDeleter {
  void operator()(BIGNUM* b) const { BN_clear_free(b); }
};
struct PointDeleter {
  void operator()(EC_POINT* p) const { EC_POINT_free(p); }
};
using BnCtxPtr = std::unique_ptr<BN_CTX, BnCtxDeleter>;
using BnPtr = std::unique_ptr<BIGNUM, BnDeleter>;
using PointPtr = std::unique_ptr<EC_POINT, PointDeleter>;

class P256Group final : public Group {
 public:
  static constexpr std::size_t kElementSize = 33;
  static constexpr std::size_t kScalarSize = 32;

  P256Group() : group_(EC_GROUP_new_by_curve_name(NID_X9_62_prime256v1)) {
    if (group_ == nullptr) throw CryptoError("P-256 unavailable");
    order_.reset(BN_new());
    BnCtxPtr ctx(BN_CTX_new());
    if (!order_ || EC_GROUP_get_order(group_, order_.get(), ctx.get()) != 1) {
      throw CryptoError("P-256 order unavailable");
    }
  }
  ~P256Group() override { EC_GROUP_free(group_); }
  P256Group(const P256Group&) = delete;
  P256Group& operator=(const P256Group&) = delete;

  GroupProfile profile() const override { return GroupProfile::production; }
  std::size_t element_size() const override { return kElementSize; }

  Element generator() const override {
    BnCtxPtr ctx(BN_CTX_new());
    return encode(EC_GROUP_get0_generator(group_), ctx.get());
  }
  Element identity() const override { return {Bytes(kElementSize, 0)}; }

  Element exp(const Element& base, const Scalar& e) const override {
    BnCtxPtr ctx(BN_CTX_new());
    auto p = decode(base, ctx.get());
    BnPtr k(BN_bin2bn(e.bytes.data(), static_cast<int>(e.bytes.size()), nullptr));
    PointPtr out(EC_POINT_new(group_));
    if (!k || !out || EC_POINT_mul(group_, out.get(), nullptr, p.get(), k.get(), ctx.get()) != 1) {
      throw CryptoError("EC_POINT_mul failed");
    }
    return encode(out.get(), ctx.get());
  }

  Element mul(const Element& a, const Element& b) const override {
    BnCtxPtr ctx(BN_CTX_new());
    auto pa = decode(a, ctx.get());
    auto pb = decode(b, ctx.get());
    PointPtr out(EC_POINT_new(group_));
    if (!out || EC_POINT_add(group_, out.get(), pa.get(), pb.get(), ctx.get()) != 1) {
      throw CryptoError("EC_POINT_add failed");
    }
    return encode(out.get(), ctx.get());
  }

  Element div(const Element& a, const Element& b) const override {
    BnCtxPtr ctx(BN_CTX_new());
    auto pa = decode(a, ctx.get());
    auto pb = decode(b, ctx.get());
    PointPtr out(EC_POINT_new(group_));
    if (!out || EC_POINT_invert(group_, pb.get(), ctx.get()) != 1 ||
        EC_POINT_add(group_, out.get(), pa.get(), pb.get(), ctx.get()) != 1) {
      throw CryptoError("EC point division failed");
    }
    return encode(out.get(), ctx.get());
  }

  void validate(const Element& e) const override {
    BnCtxPtr ctx(BN_CTX_new());
    (void)decode(e, ctx.get());
  }

  Scalar random_scalar(RandomSource& rng) const override {
    Bytes order(kScalarSize);
    BN_bn2binpad(order_.get(), order.data(), static_cast<int>(kScalarSize));
    Bytes candidate(kScalarSize);
    // Rejection sampling; the P-256 order is just below 2^256 so this rarely loops.
    for (;;) {
      rng.fill(candidate);
      bool zero = std::all_of(candidate.begin(), candidate.end(), [](auto b) { return b == 0; });
      if (!zero && candidate < order) return {candidate};
    }
  }

  Scalar scalar(std::uint64_t v) const override {
    Bytes b(kScalarSize - 8, 0);
    append_u64be(b, v);
    return {b};
  }

  std::uint64_t index_domain() const override { return UINT64_MAX; }

 private:
  PointPtr decode(const Element& e, BN_CTX* ctx) const {
    if (e.bytes.size() != kElementSize) {
      throw ProtocolError("protocol", "P-256 element must be 33 bytes");
    }
    PointPtr p(EC_POINT_new(group_));
    if (!p) throw CryptoError("EC_POINT_new failed");
    if (std::all_of(e.bytes.begin(), e.bytes.end(), [](auto b) { return b == 0; })) {
      EC_POINT_set_to_infinity(group_, p.get());
      return p;
    }
    if ((e.bytes[0] != 0x02 && e.bytes[0] != 0x03) ||
        EC_POINT_oct2point(group_, p.get(), e.bytes.data(), e.bytes.size(), ctx) != 1) {
      throw ProtocolError("protocol", "invalid P-256 point encoding");
    }
    return p;
  }

  Element encode(const EC_POINT* p, BN_CTX* ctx) const {
    if (EC_POINT_is_at_infinity(group_, p) == 1) return identity();
    Bytes out(kElementSize);
    if (EC_POINT_point2oct(group_, p, POINT_CONVERSION_COMPRESSED, out.data(), out.size(), ctx) !=
        kElementSize) {
      throw CryptoError("EC_POINT_point2oct failed");
    }
    return {out};
  }

  EC_GROUP* group_;
  BnPtr order_;
};

}  // namespace

std::shared_ptr<const Group> make_group(GroupProfile profile) {
  static const auto production = std::make_shared<const P256Group>();
  static const auto test = std::make_shared<const SmallSchnorrGroup>();
  return profile == GroupProfile::production ? std::shared_ptr<const Group>(production)
                                             : std::shared_ptr<const Group>(test);
}

}  // namespace peepll
