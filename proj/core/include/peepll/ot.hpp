#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "peepll/bytes.hpp"
#include "peepll/group.hpp"
#include "peepll/random.hpp"

namespace peepll::ot {

/// Sender side of the 1-out-of-N transfer. Created once, reused for every
/// transfer: s = g^y is published, t = s^y stays private.
struct SenderState {
  Scalar y;
  Element s;
  Element t;
};

struct ReceiverState {
  std::uint64_t choice = 0;
  Scalar x;
  Element r;  // s^choice * g^x, the only value sent to the sender
  Key32 key{};
};

/// H(s || r || e) with every element prefixed by its 4-byte big-endian length.
Bytes key_hash_input(const Element& s, const Element& r, const Element& e);
Key32 derive_key(const Element& s, const Element& r, const Element& e);

SenderState sender_init(const Group& group, RandomSource& rng);

/// Throws std::invalid_argument when choice >= n.
ReceiverState receiver_derive(const Group& group, const Element& s, std::uint64_t choice,
                              std::uint64_t n, RandomSource& rng);

/// k_j = H(s || r || r^y / t^j) for j = 0..n-1.
std::vector<Key32> sender_derive_keys(const Group& group, const SenderState& sender, const Element& r,
                                      std::uint64_t n);
/// Same derivation restricted to a sparse set of indices.
std::vector<Key32> sender_derive_keys_at(const Group& group, const SenderState& sender,
                                         const Element& r, std::span<const std::uint64_t> indices);

struct Payload {
  Bytes discriminator;
  Bytes plaintext;
};

struct SealedEntry {
  Key32 ot_index{};  // tag(k_j, discriminator_j)
  Bytes ciphertext;  // AEAD under k_j
  bool operator==(const SealedEntry&) const = default;
};

using CiphertextSet = std::vector<SealedEntry>;

/// Throws std::invalid_argument when the lengths differ.
CiphertextSet seal_entries(std::span<const Key32> keys, std::span<const Payload> payloads);

/// Finds the entry whose OT-INDEX is tag(key, own_discriminator) and opens it.
/// std::nullopt when no entry carries that index. A located entry that fails
/// authentication throws ProtocolError("protocol").
std::optional<Bytes> receiver_open(const CiphertextSet& set, const Key32& key, ByteView own_discriminator);

}  // namespace peepll::ot
