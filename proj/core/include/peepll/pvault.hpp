#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

#include "peepll/crypto.hpp"
#include "peepll/group.hpp"
#include "peepll/ot.hpp"
#include "peepll/protocol.hpp"
#include "peepll/random.hpp"
#include "peepll/secure_index.hpp"

namespace peepll {

/// One row of the pseudonym mapping.
struct MappingEntry {
  Bytes key;  // HMAC token in modes A, C, D; the plaintext item in mode B
  std::optional<BloomFilter> bloom;
  Pseudonym pseudonym;
  double budget_used = 0;
  std::uint64_t created_epoch = 0;

  bool operator==(const MappingEntry&) const = default;
};

struct VaultConfig {
  Mode mode = Mode::A;
  double fp = 0.01;
  std::uint64_t capacity = 100000;
  /// Unset: calibrated so a foreign lookup matches with probability fp.
  std::optional<std::uint32_t> blind_bits;
  /// Budget limit B; 0 disables budget accounting.
  std::uint64_t budget = 0;
  double cost = 1.0;
  /// Optional weighting hook; overrides `cost` per matched entry.
  std::function<double(const MappingEntry&)> cost_fn;
  GroupProfile group = GroupProfile::production;
  std::optional<std::filesystem::path> snapshot_path;
  std::uint64_t initial_epoch = 0;
};

/// Bloom sizing shared by the vault and its Depositors.
BloomParams index_params(double fp, std::uint64_t capacity, std::optional<std::uint32_t> blind_bits);

struct VaultStats {
  std::uint64_t lookups = 0;
  std::uint64_t creations = 0;
  std::uint64_t evictions = 0;
  std::uint64_t rollovers = 0;
  /// Smallest budget_used observed on an evicted entry (infinity if none).
  double min_budget_at_eviction = std::numeric_limits<double>::infinity();
};

struct OtReply {
  ot::CiphertextSet entries;
  bool retry = false;  // two matched entries fell onto the same OT index
};

/// Index an entry occupies in one mode-D transfer: first 8 bytes of
/// tag(nonce, hmac), big-endian, reduced into the group's index domain.
std::uint64_t ot_slot(const Group& group, const Key32& nonce, ByteView hmac);

/// The Pseudonym Vault. All public members are thread-safe: lookups that
/// may mutate take the exclusive lock, pure searches the shared lock, and
/// epoch rollover is exclusive.
class Vault {
 public:
  explicit Vault(VaultConfig cfg, std::shared_ptr<RandomSource> rng = system_random());

  Mode mode() const noexcept { return cfg_.mode; }
  const BloomParams& params() const noexcept { return params_; }
  const VaultConfig& config() const noexcept { return cfg_; }
  std::uint64_t epoch() const;
  std::size_t size() const;
  VaultStats stats() const;

  /// Mode A: existing pseudonym for the token, or a fresh one stored with it.
  Pseudonym lookup_or_create(const Key32& token);

  /// Modes C, D: entries whose stored filter contains every trapdoor
  /// position, ordered by HMAC token. Does not charge budgets.
  std::vector<MappingEntry> search_mapping(const Trapdoor& trapdoor) const;
  /// Mode B: entries whose own (unblinded) filter lies inside `lookup`.
  std::vector<MappingEntry> search_items(const BloomFilter& lookup) const;

  /// Modes C, D. First writer wins: a duplicate token returns the stored pseudonym.
  Pseudonym update_mapping(const Key32& hmac, const BloomFilter& bloom);
  /// Mode B creation keyed by the plaintext item.
  Pseudonym create_item(ByteView item);

  /// Adds the cost to every listed entry and evicts those at or above the
  /// limit. Returns the evicted entries. No-op when budgets are disabled.
  std::vector<MappingEntry> charge_budget(std::span<const Bytes> matched_keys, std::optional<double> cost = {});

  /// Mode D: seals (hmac || pseudonym) of each matched entry for the receiver point r.
  OtReply ot_respond(std::span<const MappingEntry> matched, const Element& r, const Key32& nonce) const;
  const Element& ot_public_key() const;
  const Group& group() const { return *group_; }

  /// Requires new_epoch > epoch(). Clears the mapping and removes the snapshot.
  void epoch_rollover(std::uint64_t new_epoch);

  /// Atomic write-temp-rename of {epoch, entries}. Requires snapshot_path.
  void persist() const;
  /// Missing file leaves the mapping empty; a corrupt one throws SnapshotError.
  void restore();

  /// Dispatches one request according to the vault mode and returns the reply.
  Message handle(const Message& request);

  /// Full mapping in canonical order. Test and inspection use only.
  std::vector<MappingEntry> dump() const;

 private:
  Pseudonym lookup_or_create_locked(const Bytes& token);
  Pseudonym insert_locked(Bytes key, std::optional<BloomFilter> bloom, bool& created);
  std::vector<MappingEntry> charge_locked(std::span<const Bytes> keys, std::optional<double> cost);
  std::vector<MappingEntry> search_locked(const Trapdoor& t) const;
  std::vector<MappingEntry> search_items_locked(const BloomFilter& lookup) const;
  Message reply(MessageType type, nlohmann::json body) const;
  Message handle_locked(const Message& request);

  VaultConfig cfg_;
  BloomParams params_;
  std::shared_ptr<RandomSource> rng_;
  std::shared_ptr<const Group> group_;
  std::optional<ot::SenderState> ot_sender_;
  std::optional<IndexKeySet> public_keys_;

  mutable std::shared_mutex mu_;
  std::map<Bytes, MappingEntry> pm_;
  std::uint64_t epoch_;
  VaultStats stats_;
};

}  // namespace peepll
