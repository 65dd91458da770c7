#include "peepll/ot.hpp"

#include <stdexcept>

#include "peepll/crypto.hpp"
#include "peepll/errors.hpp"

namespace peepll::ot {

Bytes key_hash_input(const Element& s, const Element& r, const Element& e) {
  Bytes in;
  in.reserve(12 + s.bytes.size() + r.bytes.size() + e.bytes.size());
  for (const auto* el : {&s, &r, &e}) {
    append_u32be(in, static_cast<std::uint32_t>(el->bytes.size()));
    in.insert(in.end(), el->bytes.begin(), el->bytes.end());
  }
  return in;
}

Key32 derive_key(const Element& s, const Element& r, const Element& e) {
  return sha256(key_hash_input(s, r, e));
}

SenderState sender_init(const Group& group, RandomSource& rng) {
  SenderState st;
  st.y = group.random_scalar(rng);
  st.s = group.exp_g(st.y);
  st.t = group.exp(st.s, st.y);
  return st;
}

ReceiverState receiver_derive(const Group& group, const Element& s, std::uint64_t choice,
                              std::uint64_t n, RandomSource& rng) {
  if (choice >= n) throw std::invalid_argument("OT choice index out of range");
  group.validate(s);
  ReceiverState st;
  st.choice = choice;
  st.x = group.random_scalar(rng);
  st.r = group.mul(group.exp(s, group.scalar(choice)), group.exp_g(st.x));
  st.key = derive_key(s, st.r, group.exp(s, st.x));
  return st;
}

std::vector<Key32> sender_derive_keys(const Group& group, const SenderState& sender, const Element& r,
                                      std::uint64_t n) {
  group.validate(r);
  std::vector<Key32> keys;
  keys.reserve(n);
  // r^y / t^j, stepping j by repeated division by t.
  Element e = group.exp(r, sender.y);
  for (std::uint64_t j = 0; j < n; ++j) {
    keys.push_back(derive_key(sender.s, r, e));
    e = group.div(e, sender.t);
  }
  return keys;
}

std::vector<Key32> sender_derive_keys_at(const Group& group, const SenderState& sender,
                                         const Element& r, std::span<const std::uint64_t> indices) {
  group.validate(r);
  Element ry = group.exp(r, sender.y);
  std::vector<Key32> keys;
  keys.reserve(indices.size());
  for (auto j : indices) {
    keys.push_back(derive_key(sender.s, r, group.div(ry, group.exp(sender.t, group.scalar(j)))));
  }
  return keys;
}

CiphertextSet seal_entries(std::span<const Key32> keys, std::span<const Payload> payloads) {
  if (keys.size() != payloads.size()) throw std::invalid_argument("one key per payload required");
  CiphertextSet set;
  set.reserve(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    set.push_back({tag(keys[j], payloads[j].discriminator), aead_seal(keys[j], payloads[j].plaintext)});
  }
  return set;
}

std::optional<Bytes> receiver_open(const CiphertextSet& set, const Key32& key, ByteView own_discriminator) {
  Key32 want = tag(key, own_discriminator);
  for (const auto& entry : set) {
    if (!equal_ct(entry.ot_index, want)) continue;
    auto plain = aead_open(key, entry.ciphertext);
    if (!plain) throw ProtocolError("protocol", "located OT entry failed authentication");
    return plain;
  }
  return std::nullopt;
}

}  // namespace peepll::ot
