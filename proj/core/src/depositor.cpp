#include "peepll/depositor.hpp"

#include <condition_variable>
#include <deque>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>

#include "peepll/errors.hpp"
#include "peepll/ot.hpp"
#include "peepll/pvault.hpp"

namespace peepll {

EpochClock wall_clock_epochs(std::uint64_t epoch_seconds) {
  if (epoch_seconds == 0) return [] { return std::uint64_t{0}; };
  return [epoch_seconds] {
    auto now = std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
    return static_cast<std::uint64_t>(now) / epoch_seconds;
  };
}

DepositorConfig DepositorConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  DepositorConfig c;
  try {
    std::filesystem::path key = j.at("master_secret").get<std::string>();
    c.master_secret = key.is_relative() && !base_dir.empty() ? base_dir / key : key;
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.pvault = j.value("pvault", c.pvault);
    c.qid_paths = j.value("qid_paths", std::vector<std::string>{});
    c.fp = j.value("fp", c.fp);
    c.capacity = j.value("capacity", c.capacity);
    if (j.contains("blind_bits")) c.blind_bits = j.at("blind_bits").get<std::uint32_t>();
    c.epoch_seconds = j.value("epoch_seconds", c.epoch_seconds);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.group = parse_group_profile(j.value("group", std::string("production")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("depositor config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("depositor config: ") + e.what());
  }
  return c;
}

DepositorConfig DepositorConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
  return from_json(j, path.parent_path());
}

Depositor::Depositor(MasterSecret secret, Options options, std::unique_ptr<Channel> channel)
    : secret_(secret),
      opts_(std::move(options)),
      channel_(std::move(channel)),
      index_keys_(secret_, opts_.params.k_star),
      group_(make_group(opts_.group)) {
  if (!opts_.clock) opts_.clock = wall_clock_epochs(0);
  if (!opts_.rng) opts_.rng = system_random();
  if (opts_.mode == Mode::B) public_keys_ = IndexKeySet::public_keys(opts_.params.k_star);
}

Message Depositor::request(MessageType type, std::uint64_t epoch, nlohmann::json body) const {
  Message m;
  m.type = type;
  m.mode = opts_.mode;
  m.epoch = epoch;
  m.body = std::move(body);
  return m;
}

Message Depositor::exchange(const Message& req) {
  send_message(*channel_, req);
  ++round_trips_;
  for (;;) {
    auto reply = receive_message(*channel_);
    if (reply.type == MessageType::EpochNotice) {
      vault_epoch_ = reply.epoch;
      continue;
    }
    if (reply.type == MessageType::Error) {
      auto code = reply.body.at("code").get<std::string>();
      auto detail = reply.body.at("detail").get<std::string>();
      if (code == "capacity") throw CapacityError(detail);
      throw ProtocolError(code, detail);
    }
    return reply;
  }
}

void Depositor::handshake() {
  auto notice = receive_message(*channel_);
  if (notice.type != MessageType::EpochNotice) throw ProtocolError("protocol", "expected EpochNotice greeting");
  if (notice.mode != opts_.mode) {
    throw ConfigError("mode mismatch: vault runs " + std::string(to_string(notice.mode)) + ", depositor " +
                      std::string(to_string(opts_.mode)));
  }
  const auto& p = opts_.params;
  if (notice.body.at("k_star").get<std::uint64_t>() != p.k_star || notice.body.at("m").get<std::uint64_t>() != p.m ||
      notice.body.at("blind_bits").get<std::uint64_t>() != p.b) {
    throw ConfigError("index parameter mismatch with vault (k*, m, blinding bits)");
  }
  vault_epoch_ = notice.epoch;
  if (opts_.mode == Mode::D) {
    auto pk = receive_message(*channel_);
    if (pk.type != MessageType::OtPublicKey) throw ProtocolError("protocol", "expected OtPublicKey");
    if (pk.body.at("group").get<std::string>() != to_string(opts_.group)) {
      throw ConfigError("OT group profile mismatch with vault");
    }
    Element s{pk.bin("s")};
    group_->validate(s);
    ot_public_key_ = std::move(s);
  }
}

Key32 Depositor::epoch_token(ByteView qid, std::uint64_t epoch) const {
  return tag(epoch_tag(secret_, epoch).tag_bytes, qid);
}

LookupOutcome Depositor::lookup(ByteView qid) {
  auto epoch = current_epoch();
  switch (opts_.mode) {
    case Mode::A:
      return run_lookup_A(qid, epoch);
    case Mode::B:
      return run_lookup_B(qid, epoch);
    case Mode::C:
      return run_lookup_C(qid, epoch);
    case Mode::D:
      return run_lookup_D(qid, epoch);
  }
  throw std::logic_error("unreachable");
}

void Depositor::notify(const Key32& token, const Message& response, std::optional<Key32> ot_key) {
  if (observer_) observer_({opts_.mode, token, response, ot_key});
}

LookupOutcome Depositor::run_lookup_A(ByteView qid, std::uint64_t epoch) {
  auto token = epoch_token(qid, epoch);
  auto req = request(MessageType::LookupRequest, epoch, nlohmann::json::object());
  req.set_bin("token", token);
  auto reply = exchange(req);
  if (reply.type != MessageType::LookupResponse) throw ProtocolError("protocol", "expected LookupResponse");
  if (!equal_ct(reply.bin("token"), token)) throw ProtocolError("protocol", "vault answered a different token");
  notify(token, reply);
  return {Pseudonym::from_bytes(reply.bin("pseudonym")), false, 1, epoch};
}

Pseudonym Depositor::create(std::uint64_t epoch, const Key32& token, const BloomFilter& filter) {
  auto req = request(MessageType::CreateRequest, epoch, nlohmann::json::object());
  req.set_bin("hmac", token);
  req.set_bin("filter", filter.serialize());
  auto reply = exchange(req);
  if (reply.type != MessageType::CreateResponse) throw ProtocolError("protocol", "expected CreateResponse");
  return Pseudonym::from_bytes(reply.bin("pseudonym"));
}

std::pair<Key32, BloomFilter> Depositor::make_dummy(std::uint64_t epoch) {
  Bytes material(16);
  opts_.rng->fill(material);
  auto suffix = as_bytes("dummy-nonce");
  material.insert(material.end(), suffix.begin(), suffix.end());
  auto token = epoch_token(material, epoch);
  const auto& p = opts_.params;
  return {token, build_stored_filter(index_keys_, token, p.m, p.b, *opts_.rng)};
}

LookupOutcome Depositor::run_lookup_B(ByteView qid, std::uint64_t epoch) {
  const auto& p = opts_.params;
  auto lookup_filter = blind(full_trapdoor(*public_keys_, qid, p.m).to_filter(p.m), p.b, *opts_.rng);
  auto req = request(MessageType::LookupRequest, epoch, nlohmann::json::object());
  req.set_bin("filter", lookup_filter.serialize());
  auto reply = exchange(req);
  if (reply.type != MessageType::LookupResponse) throw ProtocolError("protocol", "expected LookupResponse");
  notify(Key32{}, reply);

  LookupOutcome out;
  out.epoch = epoch;
  const auto& matches = reply.body.at("matches");
  out.matches = matches.size();
  std::size_t found = 0;
  for (const auto& m : matches) {
    if (base64_decode(m.at("item").get<std::string>()) == Bytes(qid.begin(), qid.end())) {
      out.pseudonym = Pseudonym::from_bytes(base64_decode(m.at("pseudonym").get<std::string>()));
      ++found;
    }
  }
  if (found > 1) throw ProtocolError("protocol", "vault returned the same item twice");
  out.hit = found == 1;

  Bytes item(qid.begin(), qid.end());
  if (out.hit) {
    item.resize(16);
    opts_.rng->fill(item);
    auto suffix = as_bytes("dummy-nonce");
    item.insert(item.end(), suffix.begin(), suffix.end());
  }
  auto create_req = request(MessageType::CreateRequest, epoch, nlohmann::json::object());
  create_req.set_bin("item", item);
  auto created = exchange(create_req);
  if (created.type != MessageType::CreateResponse) throw ProtocolError("protocol", "expected CreateResponse");
  if (!out.hit) out.pseudonym = Pseudonym::from_bytes(created.bin("pseudonym"));
  return out;
}

LookupOutcome Depositor::run_lookup_C(ByteView qid, std::uint64_t epoch) {
  const auto& p = opts_.params;
  auto token = epoch_token(qid, epoch);
  auto trapdoor = partial_trapdoor(index_keys_, token, p.m, *opts_.rng);
  auto req = request(MessageType::LookupRequest, epoch, nlohmann::json::object());
  req.set_bin("trapdoor", trapdoor.to_filter(p.m).serialize());
  auto reply = exchange(req);
  if (reply.type != MessageType::LookupResponse) throw ProtocolError("protocol", "expected LookupResponse");
  notify(token, reply);

  LookupOutcome out;
  out.epoch = epoch;
  const auto& matches = reply.body.at("matches");
  out.matches = matches.size();
  std::size_t found = 0;
  for (const auto& m : matches) {
    if (equal_ct(base64_decode(m.at("hmac").get<std::string>()), token)) {
      out.pseudonym = Pseudonym::from_bytes(base64_decode(m.at("pseudonym").get<std::string>()));
      ++found;
    }
  }
  if (found > 1) throw ProtocolError("protocol", "duplicate HMAC in search result");
  out.hit = found == 1;
  if (out.hit) {
    auto [dummy_token, dummy_filter] = make_dummy(epoch);
    create(epoch, dummy_token, dummy_filter);
  } else {
    out.pseudonym = create(epoch, token, build_stored_filter(index_keys_, token, p.m, p.b, *opts_.rng));
  }
  return out;
}

LookupOutcome Depositor::run_lookup_D(ByteView qid, std::uint64_t epoch) {
  if (!ot_public_key_) throw ProtocolError("protocol", "no OT public key; handshake first");
  const auto& p = opts_.params;
  auto token = epoch_token(qid, epoch);
  auto trapdoor_wire = partial_trapdoor(index_keys_, token, p.m, *opts_.rng).to_filter(p.m).serialize();

  constexpr int kMaxAttempts = 16;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Key32 nonce{};
    opts_.rng->fill(nonce);
    auto slot = ot_slot(*group_, nonce, token);
    auto st = ot::receiver_derive(*group_, *ot_public_key_, slot, group_->index_domain(), *opts_.rng);

    auto req = request(MessageType::OtTransferRequest, epoch, nlohmann::json::object());
    req.set_bin("trapdoor", trapdoor_wire);
    req.set_bin("r", st.r.bytes);
    req.set_bin("nonce", nonce);
    auto reply = exchange(req);
    if (reply.type != MessageType::OtTransferResponse) throw ProtocolError("protocol", "expected OtTransferResponse");
    if (reply.body.at("retry").get<bool>()) continue;
    notify(token, reply, st.key);

    ot::CiphertextSet set;
    for (const auto& e : reply.body.at("entries")) {
      ot::SealedEntry se;
      auto idx = base64_decode(e.at("idx").get<std::string>());
      std::copy(idx.begin(), idx.end(), se.ot_index.begin());
      se.ciphertext = base64_decode(e.at("ct").get<std::string>());
      set.push_back(std::move(se));
    }
    LookupOutcome out;
    out.epoch = epoch;
    out.matches = set.size();
    auto plain = ot::receiver_open(set, st.key, token);
    if (plain) {
      if (plain->size() != 32 + Pseudonym::kSize || !equal_ct(ByteView(*plain).first(32), token)) {
        throw ProtocolError("protocol", "opened OT entry does not belong to this QID");
      }
      out.hit = true;
      out.pseudonym = Pseudonym::from_bytes(ByteView(*plain).subspan(32));
      auto [dummy_token, dummy_filter] = make_dummy(epoch);
      create(epoch, dummy_token, dummy_filter);
    } else {
      out.pseudonym = create(epoch, token, build_stored_filter(index_keys_, token, p.m, p.b, *opts_.rng));
    }
    return out;
  }
  throw ProtocolError("protocol", "OT index collisions persisted across retries");
}

Depositor::Options depositor_options(const DepositorConfig& cfg) {
  Depositor::Options o;
  o.mode = cfg.mode;
  o.params = index_params(cfg.fp, cfg.capacity, cfg.blind_bits);
  o.group = cfg.group;
  o.clock = wall_clock_epochs(cfg.epoch_seconds);
  o.rng = cfg.seed ? std::make_shared<SeededRandom>(*cfg.seed) : system_random();
  return o;
}

std::string to_json_pointer(const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  std::string out = "/";
  for (char c : path) {
    if (c == '.') {
      out.push_back('/');
    } else if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

nlohmann::ordered_json Depositor::pseudonymise(const nlohmann::ordered_json& record,
                                               const std::vector<std::string>& qid_paths) {
  auto out = record;
  for (const auto& path : qid_paths) {
    nlohmann::ordered_json::json_pointer ptr(to_json_pointer(path));
    if (!out.contains(ptr)) continue;
    auto& value = out[ptr];
    if (value.is_null() || value.is_object() || value.is_array()) continue;
    auto qid = value.is_string() ? value.get<std::string>() : value.dump();
    value = lookup(as_bytes(qid)).pseudonym.str();
  }
  return out;
}

// ------------------------------------------------------------------ stream

namespace {

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T v) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(v));
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

}  // namespace

StreamStats pseudonymise_stream(std::istream& in, std::ostream& out, std::ostream& err,
                                const DepositorFactory& connect, const std::vector<std::string>& qid_paths,
                                const StreamOptions& options) {
  StreamStats stats;
  BoundedQueue<std::string> queue(options.buffer_records);
  std::thread reader([&] {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      queue.push(std::move(line));
    }
    queue.close();
  });

  std::unique_ptr<Depositor> depositor;
  auto backoff = options.backoff_initial;
  while (auto line = queue.pop()) {
    ++stats.records_in;
    auto record = nlohmann::ordered_json::parse(*line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
      err << "record " << stats.records_in << ": not a JSON object, dropped\n";
      ++stats.records_dropped;
      continue;
    }
    std::size_t attempts = 0;
    for (;;) {
      try {
        if (!depositor) depositor = connect();
        out << depositor->pseudonymise(record, qid_paths).dump() << '\n';
        ++stats.records_out;
        backoff = options.backoff_initial;
        break;
      } catch (const TransportError& e) {
        depositor.reset();
        ++attempts;
        if (options.max_attempts != 0 && attempts >= options.max_attempts) {
          err << "record " << stats.records_in << ": vault unreachable (" << e.what() << "), dropped\n";
          ++stats.records_dropped;
          break;
        }
        ++stats.reconnects;
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, options.backoff_max);
      } catch (const ProtocolError& e) {
        err << "record " << stats.records_in << ": " << e.what() << ", dropped\n";
        ++stats.records_dropped;
        break;
      }
    }
  }
  out.flush();
  reader.join();
  return stats;
}

}  // namespace peepll
