#include "peepll/pvault.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <stdexcept>

#include "peepll/errors.hpp"

namespace peepll {

BloomParams index_params(double fp, std::uint64_t capacity, std::optional<std::uint32_t> blind_bits) {
  auto p = derive_params(fp, capacity);
  p.b = blind_bits ? *blind_bits : calibrate_blinding(p, fp);
  if (p.b >= p.m) throw std::invalid_argument("blinding bits must be below m");
  return p;
}

std::uint64_t ot_slot(const Group& group, const Key32& nonce, ByteView hmac) {
  auto t = tag(nonce, hmac);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = v << 8 | t[static_cast<std::size_t>(i)];
  return v % group.index_domain();
}

Vault::Vault(VaultConfig cfg, std::shared_ptr<RandomSource> rng)
    : cfg_(std::move(cfg)),
      params_(index_params(cfg_.fp, cfg_.capacity, cfg_.blind_bits)),
      rng_(std::move(rng)),
      group_(make_group(cfg_.group)),
      epoch_(cfg_.initial_epoch) {
  if (cfg_.capacity == 0) throw std::invalid_argument("vault capacity must be positive");
  if (cfg_.mode == Mode::D) ot_sender_ = ot::sender_init(*group_, *rng_);
  if (cfg_.mode == Mode::B) public_keys_ = IndexKeySet::public_keys(params_.k_star);
}

std::uint64_t Vault::epoch() const {
  std::shared_lock lock(mu_);
  return epoch_;
}

std::size_t Vault::size() const {
  std::shared_lock lock(mu_);
  return pm_.size();
}

VaultStats Vault::stats() const {
  std::shared_lock lock(mu_);
  return stats_;
}

Pseudonym Vault::insert_locked(Bytes key, std::optional<BloomFilter> bloom, bool& created) {
  ++stats_.creations;
  if (auto it = pm_.find(key); it != pm_.end()) {
    created = false;
    return it->second.pseudonym;
  }
  if (pm_.size() >= cfg_.capacity) throw CapacityError("pseudonym mapping is full");
  MappingEntry e;
  e.key = key;
  e.bloom = std::move(bloom);
  e.pseudonym = fresh_pseudonym(*rng_);
  e.created_epoch = epoch_;
  auto p = e.pseudonym;
  pm_.emplace(std::move(key), std::move(e));
  created = true;
  return p;
}

std::vector<MappingEntry> Vault::charge_locked(std::span<const Bytes> keys, std::optional<double> cost) {
  std::vector<MappingEntry> evicted;
  if (cost && *cost < 0) throw std::invalid_argument("budget cost must be non-negative");
  if (cfg_.budget == 0) return evicted;
  for (const auto& k : keys) {
    auto it = pm_.find(k);
    if (it == pm_.end()) continue;
    double c = cost ? *cost : (cfg_.cost_fn ? cfg_.cost_fn(it->second) : cfg_.cost);
    if (c < 0) throw std::invalid_argument("budget cost must be non-negative");
    it->second.budget_used += c;
    if (it->second.budget_used >= static_cast<double>(cfg_.budget)) {
      ++stats_.evictions;
      stats_.min_budget_at_eviction = std::min(stats_.min_budget_at_eviction, it->second.budget_used);
      evicted.push_back(std::move(it->second));
      pm_.erase(it);
    }
  }
  return evicted;
}

Pseudonym Vault::lookup_or_create_locked(const Bytes& token) {
  ++stats_.lookups;
  Pseudonym p;
  if (auto it = pm_.find(token); it != pm_.end()) {
    p = it->second.pseudonym;
  } else {
    bool created = false;
    p = insert_locked(token, std::nullopt, created);
  }
  charge_locked(std::span(&token, 1), std::nullopt);
  return p;
}

Pseudonym Vault::lookup_or_create(const Key32& token) {
  if (cfg_.mode != Mode::A) throw ProtocolError("mode", "token lookups are only available in mode A");
  std::unique_lock lock(mu_);
  return lookup_or_create_locked(Bytes(token.begin(), token.end()));
}

std::vector<MappingEntry> Vault::search_locked(const Trapdoor& t) const {
  std::vector<MappingEntry> out;
  for (const auto& [key, e] : pm_) {
    if (e.bloom && contains(*e.bloom, t)) out.push_back(e);
  }
  return out;
}

std::vector<MappingEntry> Vault::search_items_locked(const BloomFilter& lookup) const {
  std::vector<MappingEntry> out;
  for (const auto& [key, e] : pm_) {
    if (e.bloom && e.bloom->is_subset_of(lookup)) out.push_back(e);
  }
  return out;
}

std::vector<MappingEntry> Vault::search_mapping(const Trapdoor& trapdoor) const {
  std::shared_lock lock(mu_);
  return search_locked(trapdoor);
}

std::vector<MappingEntry> Vault::search_items(const BloomFilter& lookup) const {
  std::shared_lock lock(mu_);
  return search_items_locked(lookup);
}

Pseudonym Vault::update_mapping(const Key32& hmac, const BloomFilter& bloom) {
  if (bloom.size() != params_.m) throw ProtocolError("protocol", "stored filter has wrong size");
  std::unique_lock lock(mu_);
  bool created = false;
  Bytes key(hmac.begin(), hmac.end());
  auto p = insert_locked(key, bloom, created);
  charge_locked(std::span(&key, 1), std::nullopt);
  return p;
}

Pseudonym Vault::create_item(ByteView item) {
  if (!public_keys_) throw ProtocolError("mode", "plaintext items are only accepted in mode B");
  auto filter = full_trapdoor(*public_keys_, item, params_.m).to_filter(params_.m);
  std::unique_lock lock(mu_);
  bool created = false;
  Bytes key(item.begin(), item.end());
  auto p = insert_locked(key, std::move(filter), created);
  charge_locked(std::span(&key, 1), std::nullopt);
  return p;
}

std::vector<MappingEntry> Vault::charge_budget(std::span<const Bytes> matched_keys, std::optional<double> cost) {
  std::unique_lock lock(mu_);
  return charge_locked(matched_keys, cost);
}

OtReply Vault::ot_respond(std::span<const MappingEntry> matched, const Element& r, const Key32& nonce) const {
  if (!ot_sender_) throw ProtocolError("mode", "oblivious transfer is only available in mode D");
  std::vector<std::uint64_t> slots;
  slots.reserve(matched.size());
  for (const auto& e : matched) slots.push_back(ot_slot(*group_, nonce, e.key));
  std::set<std::uint64_t> distinct(slots.begin(), slots.end());
  if (distinct.size() != slots.size()) return {{}, true};

  auto keys = ot::sender_derive_keys_at(*group_, *ot_sender_, r, slots);
  std::vector<ot::Payload> payloads;
  payloads.reserve(matched.size());
  for (const auto& e : matched) {
    Bytes plain = e.key;
    plain.insert(plain.end(), e.pseudonym.value().begin(), e.pseudonym.value().end());
    payloads.push_back({e.key, std::move(plain)});
  }
  return {ot::seal_entries(keys, payloads), false};
}

const Element& Vault::ot_public_key() const {
  if (!ot_sender_) throw std::logic_error("vault is not in mode D");
  return ot_sender_->s;
}

void Vault::epoch_rollover(std::uint64_t new_epoch) {
  std::unique_lock lock(mu_);
  if (new_epoch <= epoch_) throw std::invalid_argument("epoch rollover must move forward");
  pm_.clear();
  epoch_ = new_epoch;
  ++stats_.rollovers;
  if (cfg_.snapshot_path) {
    std::error_code ec;
    std::filesystem::remove(*cfg_.snapshot_path, ec);
  }
}

void Vault::persist() const {
  if (!cfg_.snapshot_path) throw std::logic_error("no snapshot path configured");
  nlohmann::json j;
  {
    std::shared_lock lock(mu_);
    j["epoch"] = epoch_;
    auto& entries = j["entries"] = nlohmann::json::array();
    for (const auto& [key, e] : pm_) {
      entries.push_back({{"hmac", base64_encode(e.key)},
                         {"bloom", e.bloom ? base64_encode(e.bloom->serialize()) : std::string()},
                         {"pseudonym", e.pseudonym.hex()},
                         {"budget", e.budget_used}});
    }
  }
  auto path = *cfg_.snapshot_path;
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw SnapshotError("cannot write snapshot " + tmp.string());
    out << j.dump() << '\n';
    out.flush();
    if (!out) throw SnapshotError("short write on snapshot " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void Vault::restore() {
  if (!cfg_.snapshot_path) throw std::logic_error("no snapshot path configured");
  const auto& path = *cfg_.snapshot_path;
  std::unique_lock lock(mu_);
  if (!std::filesystem::exists(path)) {
    pm_.clear();
    return;
  }

  std::ifstream in(path);
  auto j = nlohmann::json::parse(in, nullptr, false);
  auto corrupt = [&](const std::string& why) { return SnapshotError("corrupt snapshot " + path.string() + ": " + why); };
  if (j.is_discarded() || !j.is_object()) throw corrupt("not a JSON object");
  if (!j.contains("epoch") || !j["epoch"].is_number_unsigned()) throw corrupt("missing epoch");
  if (!j.contains("entries") || !j["entries"].is_array()) throw corrupt("missing entries");
  auto snap_epoch = j["epoch"].get<std::uint64_t>();
  // A snapshot from an older epoch describes a mapping that rollover has already deleted.
  if (snap_epoch < epoch_) {
    pm_.clear();
    return;
  }

  std::map<Bytes, MappingEntry> restored;
  for (const auto& row : j["entries"]) {
    try {
      MappingEntry e;
      e.key = base64_decode(row.at("hmac").get<std::string>());
      auto bloom = row.at("bloom").get<std::string>();
      if (!bloom.empty()) {
        e.bloom = BloomFilter::deserialize(base64_decode(bloom));
        if (e.bloom->size() != params_.m) throw corrupt("filter size does not match configuration");
      } else if (cfg_.mode != Mode::A) {
        throw corrupt("entry without filter in an index mode");
      }
      e.pseudonym = Pseudonym::parse(row.at("pseudonym").get<std::string>());
      e.budget_used = row.at("budget").get<double>();
      e.created_epoch = snap_epoch;
      if (restored.contains(e.key)) throw corrupt("duplicate entry");
      auto key = e.key;
      restored.emplace(std::move(key), std::move(e));
    } catch (const SnapshotError&) {
      throw;
    } catch (const std::exception& ex) {
      throw corrupt(ex.what());
    }
  }
  if (restored.size() > cfg_.capacity) throw corrupt("more entries than capacity");
  epoch_ = snap_epoch;
  pm_ = std::move(restored);
}

std::vector<MappingEntry> Vault::dump() const {
  std::shared_lock lock(mu_);
  std::vector<MappingEntry> out;
  out.reserve(pm_.size());
  for (const auto& [k, e] : pm_) out.push_back(e);
  return out;
}

Message Vault::reply(MessageType type, nlohmann::json body) const {
  Message m;
  m.type = type;
  m.mode = cfg_.mode;
  m.epoch = epoch_;
  m.body = std::move(body);
  return m;
}

namespace {

Key32 to_key32(const Bytes& b) {
  if (b.size() != 32) throw ProtocolError("malformed", "expected 32 bytes");
  Key32 k{};
  std::copy(b.begin(), b.end(), k.begin());
  return k;
}

BloomFilter filter_field(const Message& msg, std::string_view field, std::uint32_t m) {
  try {
    auto f = BloomFilter::deserialize(msg.bin(field));
    if (f.size() != m) throw ProtocolError("protocol", "filter size does not match vault parameters");
    return f;
  } catch (const std::invalid_argument& e) {
    throw ProtocolError("malformed", e.what());
  }
}

std::vector<Bytes> keys_of(const std::vector<MappingEntry>& entries) {
  std::vector<Bytes> keys;
  keys.reserve(entries.size());
  for (const auto& e : entries) keys.push_back(e.key);
  return keys;
}

}  // namespace

Message Vault::handle(const Message& request) {
  try {
    if (request.mode != cfg_.mode) {
      throw ProtocolError("mode", "vault runs mode " + std::string(to_string(cfg_.mode)));
    }
    if (request.type == MessageType::OtTransferRequest) {
      // Search and accounting under the lock; the group arithmetic runs outside it.
      auto trapdoor = Trapdoor::from_filter(filter_field(request, "trapdoor", params_.m));
      if (trapdoor.positions.empty() || trapdoor.positions.size() > params_.k_star / 2) {
        throw ProtocolError("protocol", "trapdoor must set between 1 and k*/2 positions");
      }
      Element r{request.bin("r")};
      auto nonce = to_key32(request.bin("nonce"));
      std::vector<MappingEntry> matched;
      std::uint64_t epoch = 0;
      {
        std::unique_lock lock(mu_);
        ++stats_.lookups;
        matched = search_locked(trapdoor);
        epoch = epoch_;
      }
      auto ot_reply = ot_respond(matched, r, nonce);
      if (!ot_reply.retry) charge_budget(keys_of(matched));
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& e : ot_reply.entries) {
        entries.push_back({{"ct", base64_encode(e.ciphertext)}, {"idx", base64_encode(e.ot_index)}});
      }
      auto m = reply(MessageType::OtTransferResponse, {{"entries", entries}, {"retry", ot_reply.retry}});
      m.epoch = epoch;
      return m;
    }
    std::unique_lock lock(mu_);
    return handle_locked(request);
  } catch (const ProtocolError& e) {
    return make_error(cfg_.mode, epoch(), e.code(), e.what());
  } catch (const std::invalid_argument& e) {
    return make_error(cfg_.mode, epoch(), "protocol", e.what());
  }
}

Message Vault::handle_locked(const Message& request) {
  using T = MessageType;
  switch (request.type) {
    case T::LookupRequest: {
      if (cfg_.mode == Mode::A) {
        auto token = request.bin("token");
        auto p = lookup_or_create_locked(token);
        Message m = reply(T::LookupResponse, nlohmann::json::object());
        m.set_bin("token", token);
        m.set_bin("pseudonym", p.value());
        return m;
      }
      ++stats_.lookups;
      std::vector<MappingEntry> matched;
      const char* key_field = "hmac";
      if (cfg_.mode == Mode::B) {
        matched = search_items_locked(filter_field(request, "filter", params_.m));
        key_field = "item";
      } else {
        auto trapdoor = Trapdoor::from_filter(filter_field(request, "trapdoor", params_.m));
        if (trapdoor.positions.empty() || trapdoor.positions.size() > params_.k_star / 2) {
          throw ProtocolError("protocol", "trapdoor must set between 1 and k*/2 positions");
        }
        matched = search_locked(trapdoor);
      }
      charge_locked(keys_of(matched), std::nullopt);
      nlohmann::json list = nlohmann::json::array();
      for (const auto& e : matched) {
        list.push_back({{key_field, base64_encode(e.key)}, {"pseudonym", base64_encode(e.pseudonym.value())}});
      }
      return reply(T::LookupResponse, {{"matches", list}});
    }
    case T::CreateRequest: {
      bool created = false;
      Bytes key;
      std::optional<BloomFilter> bloom;
      if (cfg_.mode == Mode::B) {
        key = request.bin("item");
        bloom = full_trapdoor(*public_keys_, key, params_.m).to_filter(params_.m);
      } else {
        key = request.bin("hmac");
        bloom = filter_field(request, "filter", params_.m);
      }
      auto p = insert_locked(key, std::move(bloom), created);
      charge_locked(std::span(&key, 1), std::nullopt);
      Message m = reply(T::CreateResponse, nlohmann::json::object());
      m.set_bin("pseudonym", p.value());
      return m;
    }
    default:
      throw ProtocolError("protocol", "unexpected request type " + std::string(to_string(request.type)));
  }
}

}  // namespace peepll
