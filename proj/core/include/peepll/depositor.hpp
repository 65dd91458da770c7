#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "peepll/crypto.hpp"
#include "peepll/group.hpp"
#include "peepll/protocol.hpp"
#include "peepll/secure_index.hpp"
#include "peepll/transport.hpp"

namespace peepll {

/// Current epoch index as seen by one party.
using EpochClock = std::function<std::uint64_t()>;

/// floor(unix_time / epoch_seconds); epoch_seconds == 0 pins the epoch at 0.
EpochClock wall_clock_epochs(std::uint64_t epoch_seconds);

/// Depositor configuration file (JSON):
///
///   {
///     "master_secret": "path/to/key.hex",
///     "mode": "C",
///     "pvault": "127.0.0.1:7474",
///     "qid_paths": ["/src/ip", "/user"],
///     "fp": 0.01, "capacity": 100000, "blind_bits": 120,   // blind_bits optional
///     "epoch_seconds": 86400,
///     "seed": 7,                                            // optional
///     "group": "production"
///   }
struct DepositorConfig {
  std::filesystem::path master_secret;
  Mode mode = Mode::A;
  std::string pvault = "127.0.0.1:7474";
  std::vector<std::string> qid_paths;
  double fp = 0.01;
  std::uint64_t capacity = 100000;
  std::optional<std::uint32_t> blind_bits;
  std::uint64_t epoch_seconds = 0;
  std::optional<std::uint64_t> seed;
  GroupProfile group = GroupProfile::production;

  static DepositorConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static DepositorConfig load(const std::filesystem::path& path);
};

struct LookupOutcome {
  Pseudonym pseudonym;
  bool hit = false;
  std::size_t matches = 0;  // entries returned by the vault (modes B, C, D)
  std::uint64_t epoch = 0;
};

/// What the Depositor saw for one lookup: used by the traffic analyses.
struct LookupTranscript {
  Mode mode = Mode::A;
  Key32 own_token{};
  Message response;
  std::optional<Key32> ot_key;
};

class Depositor {
 public:
  struct Options {
    Mode mode = Mode::A;
    BloomParams params;
    GroupProfile group = GroupProfile::production;
    EpochClock clock;
    std::shared_ptr<RandomSource> rng;
  };

  Depositor(MasterSecret secret, Options options, std::unique_ptr<Channel> channel);

  /// Reads the vault greeting and checks mode and index parameters (plus
  /// the OT group in mode D). Throws ConfigError on mismatch.
  void handshake();

  /// tag(kdf(master, "epoch", epoch), qid).
  Key32 epoch_token(ByteView qid, std::uint64_t epoch) const;
  std::uint64_t current_epoch() const { return opts_.clock(); }

  /// Pseudonym for one QID in the current epoch via the configured mode.
  LookupOutcome lookup(ByteView qid);

  LookupOutcome run_lookup_A(ByteView qid, std::uint64_t epoch);
  LookupOutcome run_lookup_B(ByteView qid, std::uint64_t epoch);
  LookupOutcome run_lookup_C(ByteView qid, std::uint64_t epoch);
  LookupOutcome run_lookup_D(ByteView qid, std::uint64_t epoch);

  /// Dummy creation material pushed through the same pipeline as a real item.
  std::pair<Key32, BloomFilter> make_dummy(std::uint64_t epoch);

  /// Replaces each QID found at the given JSON pointers ("/a/b"; "a.b" is
  /// accepted too) with "pn:<hex>". Other fields are left untouched.
  nlohmann::ordered_json pseudonymise(const nlohmann::ordered_json& record,
                                      const std::vector<std::string>& qid_paths);

  void set_observer(std::function<void(const LookupTranscript&)> observer) { observer_ = std::move(observer); }

  std::uint64_t round_trips() const noexcept { return round_trips_; }
  std::uint64_t vault_epoch() const noexcept { return vault_epoch_; }
  Mode mode() const noexcept { return opts_.mode; }
  const BloomParams& params() const noexcept { return opts_.params; }

 private:
  Message request(MessageType type, std::uint64_t epoch, nlohmann::json body) const;
  Message exchange(const Message& req);
  Pseudonym create(std::uint64_t epoch, const Key32& token, const BloomFilter& filter);
  void notify(const Key32& token, const Message& response, std::optional<Key32> ot_key = {});

  MasterSecret secret_;
  Options opts_;
  std::unique_ptr<Channel> channel_;
  IndexKeySet index_keys_;
  std::optional<IndexKeySet> public_keys_;
  std::shared_ptr<const Group> group_;
  std::optional<Element> ot_public_key_;
  std::function<void(const LookupTranscript&)> observer_;
  std::uint64_t round_trips_ = 0;
  std::uint64_t vault_epoch_ = 0;
};

/// Options for a deployed Depositor: index sizing mirrors the vault flags,
/// epochs follow the wall clock, and `seed` (if set) makes dummies and
/// trapdoor sampling reproducible.
Depositor::Options depositor_options(const DepositorConfig& cfg);

/// Converts "a.b.c" into "/a/b/c"; JSON pointers pass through.
std::string to_json_pointer(const std::string& path);

struct StreamOptions {
  std::size_t buffer_records = 10000;
  std::chrono::milliseconds backoff_initial{100};
  std::chrono::milliseconds backoff_max{5000};
  /// Reconnect attempts per record before giving up; 0 retries forever.
  std::size_t max_attempts = 0;
};

struct StreamStats {
  std::uint64_t records_in = 0;
  std::uint64_t records_out = 0;
  std::uint64_t records_dropped = 0;
  std::uint64_t reconnects = 0;
};

using DepositorFactory = std::function<std::unique_ptr<Depositor>()>;

/// JSON-lines pipeline. A reader thread fills a bounded buffer (the reader
/// blocks when it is full); the worker pseudonymises records in order and
/// reconnects with exponential backoff when the vault is unreachable,
/// retrying the same record. Records failing with protocol or capacity
/// errors are reported on `err` and dropped, never emitted unpseudonymised.
StreamStats pseudonymise_stream(std::istream& in, std::ostream& out, std::ostream& err,
                                const DepositorFactory& connect, const std::vector<std::string>& qid_paths,
                                const StreamOptions& options = {});

}  // namespace peepll
