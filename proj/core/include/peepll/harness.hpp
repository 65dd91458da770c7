#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peepll/depositor.hpp"
#include "peepll/errors.hpp"
#include "peepll/server.hpp"

namespace peepll {

/// Thrown by run_sim when a checked property fails. `name()` identifies it.
class InvariantViolation : public Error {
 public:
  InvariantViolation(std::string name, const std::string& detail)
      : Error(name + ": " + detail), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

/// "10.x.y.z" for index i of a bounded QID universe.
std::string ipv4_qid(std::uint64_t index);

/// Connects a Depositor to `server` over an in-process channel and completes
/// the handshake.
std::unique_ptr<Depositor> connect_in_process(VaultServer& server, const MasterSecret& secret,
                                              Depositor::Options options,
                                              std::shared_ptr<Capture> capture = nullptr);

/// Options matching a vault's index parameters.
Depositor::Options depositor_options(const Vault& vault, EpochClock clock, std::shared_ptr<RandomSource> rng);

// ------------------------------------------------------------------ matching-set curve

/// The eleven fp' values of the published curve.
std::vector<double> published_fp_primes();

struct Fig4Config {
  std::uint64_t prefill = 100;
  std::vector<double> fp_primes = published_fp_primes();
  std::uint64_t trials = 50;
  std::uint64_t seed = 1;
  /// Identifiers per event; sizes the filters as n = prefill * c.
  double c = 2;
  /// Query one of the prefilled QIDs instead of a fresh one.
  bool query_prefilled = false;
  /// Overrides the calibrated blinding (b = 0 gives unblinded filters).
  std::optional<std::uint32_t> blind_bits;
};

struct MatchStats {
  double fp_prime = 0;  // target rate of the row
  double mean_matches = 0;
  double stddev = 0;
  std::uint64_t trials = 0;
  std::uint32_t k_star = 0;
  std::uint32_t m = 0;
  std::uint32_t blind_bits = 0;
};

/// For each fp' (sqrt of the configured fp): fresh mode-C vault per trial,
/// prefilled with `prefill` random QIDs, then one partial-trapdoor search
/// whose result-set size is recorded. Blinding is calibrated so a foreign
/// trapdoor matches with probability fp'.
std::vector<MatchStats> reproduce_fig4(const Fig4Config& cfg);

/// "fp_prime,mean_matches,stddev,trials" plus one row per point.
std::string fig4_csv(const std::vector<MatchStats>& rows);

// ------------------------------------------------------------------ simulation

enum class QidDistribution { uniform, zipf };

/// Simulation configuration (JSON):
///
///   {
///     "num_depositors": 3, "num_events": 10000, "qid_universe_size": 1000,
///     "qid_distribution": "zipf", "zipf_s": 1.2, "mode": "A",
///     "fp": 0.01, "capacity": 0, "blind_bits": 40,    // blind_bits optional
///     "budget": 0, "epochs": 1, "seed": 7, "concurrent": true,
///     "group": "production",
///     "fp_list": [0.1], "prefill_count": 100, "trials": 50   // used by fig4
///   }
struct SimConfig {
  std::uint64_t num_depositors = 3;
  std::uint64_t num_events = 10000;
  std::uint64_t qid_universe_size = 1000;
  QidDistribution qid_distribution = QidDistribution::uniform;
  double zipf_s = 1.2;
  Mode mode = Mode::A;
  double fp = 0.01;
  /// 0 sizes the vault to the events of one epoch.
  std::uint64_t capacity = 0;
  std::optional<std::uint32_t> blind_bits;
  std::uint64_t budget = 0;
  /// Events are split evenly over this many epochs, with a rollover between.
  std::uint64_t epochs = 1;
  std::uint64_t seed = 1;
  /// Depositors run on their own threads. Sequential round-robin runs are
  /// bit-reproducible for a given seed; concurrent runs only structurally.
  bool concurrent = true;
  GroupProfile group = GroupProfile::production;
  std::vector<double> fp_list = published_fp_primes();
  std::uint64_t prefill_count = 100;
  std::uint64_t trials = 50;

  static SimConfig from_json(const nlohmann::json& j);
  static SimConfig load(const std::filesystem::path& path);
  Fig4Config fig4() const;
};

struct SimReport {
  Mode mode = Mode::A;
  std::uint64_t events = 0;
  std::uint64_t lookups = 0;
  double seconds = 0;
  double throughput = 0;  // lookups per second
  std::uint64_t mapping_size = 0;
  std::uint64_t round_trips = 0;
  double round_trips_per_lookup = 0;
  std::uint64_t evictions = 0;
  std::uint64_t rollovers = 0;
  std::uint64_t hits = 0;
  std::uint64_t consistency_violations = 0;
  std::uint64_t distinct_pseudonyms = 0;
  /// SHA-256 over the event sequence with pseudonyms relabelled by first use.
  std::string structure_digest;
  /// SHA-256 over the raw pseudonym sequence.
  std::string pseudonym_digest;

  nlohmann::json to_json() const;
};

/// In-process vault plus `num_depositors` Depositors replaying a synthetic
/// event stream. Throws InvariantViolation ("pseudonym_consistency",
/// "budget_eviction") when a checked property fails. Consistency is only
/// checked with budgets off, since budget eviction legitimately reissues
/// pseudonyms.
SimReport run_sim(const SimConfig& cfg);

// ------------------------------------------------------------------ attack

struct AttackConfig {
  Mode mode = Mode::C;
  std::uint64_t universe = 1000;
  std::uint64_t attacker_lookups = 100;
  double fp = 0.01;
  std::uint64_t seed = 1;
  GroupProfile group = GroupProfile::production;
};

struct AttackReport {
  Mode mode = Mode::C;
  std::uint64_t universe = 0;
  std::uint64_t victim_deposits = 0;
  std::uint64_t attacker_lookups = 0;
  std::uint64_t foreign_entries_seen = 0;  // with repetition
  std::uint64_t distinct_foreign = 0;
  std::uint64_t recovered = 0;  // distinct foreign deposits mapped back to a QID
  double recovery_rate = 0;     // recovered / distinct_foreign

  nlohmann::json to_json() const;
};

/// A victim Depositor deposits every QID of the universe; an insider
/// Depositor holding the MasterSecret then issues its own lookups and
/// dictionary-attacks every foreign entry it receives.
AttackReport dictionary_attack(const AttackConfig& cfg);

}  // namespace peepll
