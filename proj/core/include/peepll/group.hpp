#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "peepll/bytes.hpp"
#include "peepll/random.hpp"

namespace peepll {

enum class GroupProfile { production, test };

std::string_view to_string(GroupProfile p);
GroupProfile parse_group_profile(std::string_view s);  // throws std::invalid_argument

/// Fixed-length big-endian encoding of a group element.
struct Element {
  Bytes bytes;
  bool operator==(const Element&) const = default;
};

/// Big-endian exponent, reduced mod the group order.
struct Scalar {
  Bytes bytes;
  bool operator==(const Scalar&) const = default;
};

/// Prime-order cyclic group written multiplicatively.
///
/// production: NIST P-256 (128-bit security). Elements are 33-byte SEC1
///   compressed points; the identity is 33 zero bytes.
/// test: quadratic residues mod the safe prime 130787, order q = 65393,
///   generator 4. Elements are 4-byte big-endian residues. Small enough for
///   exhaustive discrete-log oracles.
class Group {
 public:
  virtual ~Group() = default;

  virtual GroupProfile profile() const = 0;
  virtual std::size_t element_size() const = 0;
  virtual Element generator() const = 0;
  virtual Element identity() const = 0;

  virtual Element exp(const Element& base, const Scalar& e) const = 0;
  virtual Element mul(const Element& a, const Element& b) const = 0;
  virtual Element div(const Element& a, const Element& b) const = 0;

  /// Throws ProtocolError("protocol") for bytes that are not a group member.
  virtual void validate(const Element& e) const = 0;

  /// Uniform in [1, order).
  virtual Scalar random_scalar(RandomSource& rng) const = 0;
  virtual Scalar scalar(std::uint64_t v) const = 0;

  /// Number of distinct exponents that index maps onto: indices i and
  /// i + index_domain() select the same key. UINT64_MAX for production.
  virtual std::uint64_t index_domain() const = 0;

  Element exp_g(const Scalar& e) const { return exp(generator(), e); }
};

std::shared_ptr<const Group> make_group(GroupProfile profile);

namespace test_group {
inline constexpr std::uint64_t kModulus = 130787;
inline constexpr std::uint64_t kOrder = 65393;
inline constexpr std::uint64_t kGenerator = 4;
}  // namespace test_group

}  // namespace peepll
