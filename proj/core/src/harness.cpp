#include "peepll/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <thread>
#include <unordered_map>

#include "peepll/errors.hpp"

namespace peepll {

std::string ipv4_qid(std::uint64_t index) {
  return "10." + std::to_string((index >> 16) & 0xff) + "." + std::to_string((index >> 8) & 0xff) + "." +
         std::to_string(index & 0xff);
}

std::unique_ptr<Depositor> connect_in_process(VaultServer& server, const MasterSecret& secret,
                                              Depositor::Options options, std::shared_ptr<Capture> capture) {
  auto [client, vault_side] = make_in_process_pair();
  if (capture) client = std::make_unique<RecordingChannel>(std::move(client), std::move(capture));
  server.serve(std::move(vault_side));
  auto d = std::make_unique<Depositor>(secret, std::move(options), std::move(client));
  d->handshake();
  return d;
}

Depositor::Options depositor_options(const Vault& vault, EpochClock clock, std::shared_ptr<RandomSource> rng) {
  Depositor::Options o;
  o.mode = vault.mode();
  o.params = vault.params();
  o.group = vault.config().group;
  o.clock = std::move(clock);
  o.rng = std::move(rng);
  return o;
}

namespace {

Key32 token_for(const MasterSecret& secret, std::uint64_t epoch, const std::string& qid) {
  return tag(epoch_tag(secret, epoch).tag_bytes, as_bytes(qid));
}

std::string hex_digest(const Bytes& data) {
  auto d = sha256(data);
  return to_hex(d);
}

}  // namespace

// ------------------------------------------------------------------ matching-set curve

std::vector<double> published_fp_primes() {
  std::vector<double> out;
  for (double fp : {0.001, 0.005, 0.01, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2}) {
    out.push_back(std::sqrt(fp));
  }
  return out;
}

std::vector<MatchStats> reproduce_fig4(const Fig4Config& cfg) {
  if (cfg.prefill == 0 || cfg.trials == 0) throw std::invalid_argument("prefill and trials must be positive");
  std::vector<MatchStats> rows;
  std::uint64_t point = 0;
  for (double fp_prime : cfg.fp_primes) {
    if (!(fp_prime > 0.0 && fp_prime < 1.0)) throw std::invalid_argument("fp' must lie in (0, 1)");
    auto rng = std::make_shared<SeededRandom>(cfg.seed, point++);
    auto capacity = static_cast<std::uint64_t>(std::ceil(static_cast<double>(cfg.prefill) * cfg.c));
    auto params = derive_params(fp_prime * fp_prime, capacity);
    std::uint32_t b = cfg.blind_bits ? *cfg.blind_bits : calibrate_blinding(params, fp_prime);

    VaultConfig vc;
    vc.mode = Mode::C;
    vc.fp = params.fp;
    vc.capacity = capacity;
    vc.blind_bits = b;

    std::vector<double> counts;
    counts.reserve(cfg.trials);
    for (std::uint64_t t = 0; t < cfg.trials; ++t) {
      auto secret = MasterSecret::generate(*rng);
      IndexKeySet keys(secret, params.k_star);
      Vault vault(vc, rng);
      std::set<std::uint64_t> used;
      std::vector<Key32> prefilled;
      while (prefilled.size() < cfg.prefill) {
        auto idx = rng->uniform(1ull << 24);
        if (!used.insert(idx).second) continue;
        auto token = token_for(secret, 0, ipv4_qid(idx));
        vault.update_mapping(token, build_stored_filter(keys, token, params.m, b, *rng));
        prefilled.push_back(token);
      }
      Key32 query{};
      if (cfg.query_prefilled) {
        query = prefilled[rng->uniform(prefilled.size())];
      } else {
        std::uint64_t idx = 0;
        do idx = rng->uniform(1ull << 24);
        while (used.count(idx));
        query = token_for(secret, 0, ipv4_qid(idx));
      }
      auto trapdoor = partial_trapdoor(keys, query, params.m, *rng);
      counts.push_back(static_cast<double>(vault.search_mapping(trapdoor).size()));
    }

    MatchStats s;
    s.fp_prime = fp_prime;
    s.trials = cfg.trials;
    s.k_star = params.k_star;
    s.m = params.m;
    s.blind_bits = b;
    double sum = 0;
    for (double c : counts) sum += c;
    s.mean_matches = sum / static_cast<double>(counts.size());
    double sq = 0;
    for (double c : counts) sq += (c - s.mean_matches) * (c - s.mean_matches);
    s.stddev = counts.size() > 1 ? std::sqrt(sq / static_cast<double>(counts.size() - 1)) : 0.0;
    rows.push_back(s);
  }
  return rows;
}

std::string fig4_csv(const std::vector<MatchStats>& rows) {
  std::string out = "fp_prime,mean_matches,stddev,trials\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.6f,%.4f,%.4f,%llu\n", r.fp_prime, r.mean_matches, r.stddev,
                  static_cast<unsigned long long>(r.trials));
    out += line;
  }
  return out;
}

// ------------------------------------------------------------------ simulation

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  SimConfig c;
  try {
    c.num_depositors = j.value("num_depositors", c.num_depositors);
    c.num_events = j.value("num_events", c.num_events);
    c.qid_universe_size = j.value("qid_universe_size", c.qid_universe_size);
    auto dist = j.value("qid_distribution", std::string("uniform"));
    if (dist == "uniform") {
      c.qid_distribution = QidDistribution::uniform;
    } else if (dist == "zipf") {
      c.qid_distribution = QidDistribution::zipf;
    } else {
      throw ConfigError("qid_distribution must be uniform or zipf");
    }
    c.zipf_s = j.value("zipf_s", c.zipf_s);
    c.mode = parse_mode(j.value("mode", std::string("A")));
    c.fp = j.value("fp", c.fp);
    c.capacity = j.value("capacity", c.capacity);
    if (j.contains("blind_bits")) c.blind_bits = j.at("blind_bits").get<std::uint32_t>();
    c.budget = j.value("budget", c.budget);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.concurrent = j.value("concurrent", c.concurrent);
    c.group = parse_group_profile(j.value("group", std::string("production")));
    if (j.contains("fp_list")) c.fp_list = j.at("fp_list").get<std::vector<double>>();
    c.prefill_count = j.value("prefill_count", c.prefill_count);
    c.trials = j.value("trials", c.trials);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sim config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sim config: ") + e.what());
  }
  if (c.num_depositors == 0 || c.qid_universe_size == 0 || c.epochs == 0) {
    throw ConfigError("sim config: num_depositors, qid_universe_size and epochs must be positive");
  }
  return c;
}

SimConfig SimConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sim config " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("sim config is not valid JSON: " + path.string());
  return from_json(j);
}

Fig4Config SimConfig::fig4() const {
  Fig4Config f;
  f.prefill = prefill_count;
  f.fp_primes = fp_list;
  f.trials = trials;
  f.seed = seed;
  f.blind_bits = blind_bits;
  return f;
}

nlohmann::json SimReport::to_json() const {
  return {{"mode", std::string(to_string(mode))},
          {"events", events},
          {"lookups", lookups},
          {"seconds", seconds},
          {"throughput", throughput},
          {"mapping_size", mapping_size},
          {"round_trips", round_trips},
          {"round_trips_per_lookup", round_trips_per_lookup},
          {"evictions", evictions},
          {"rollovers", rollovers},
          {"hits", hits},
          {"consistency_violations", consistency_violations},
          {"distinct_pseudonyms", distinct_pseudonyms},
          {"structure_digest", structure_digest},
          {"pseudonym_digest", pseudonym_digest}};
}

namespace {

struct Observation {
  std::uint64_t epoch;
  std::uint64_t qid;
  Pseudonym pseudonym;
  bool hit;
};

std::vector<std::uint64_t> draw_events(const SimConfig& cfg, std::uint64_t count, RandomSource& rng) {
  std::vector<std::uint64_t> out;
  out.reserve(count);
  if (cfg.qid_distribution == QidDistribution::uniform) {
    std::uniform_int_distribution<std::uint64_t> dist(0, cfg.qid_universe_size - 1);
    for (std::uint64_t i = 0; i < count; ++i) out.push_back(dist(rng));
  } else {
    std::vector<double> w(cfg.qid_universe_size);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = 1.0 / std::pow(static_cast<double>(k + 1), cfg.zipf_s);
    std::discrete_distribution<std::uint64_t> dist(w.begin(), w.end());
    for (std::uint64_t i = 0; i < count; ++i) out.push_back(dist(rng));
  }
  return out;
}

}  // namespace

SimReport run_sim(const SimConfig& cfg) {
  VaultConfig vc;
  vc.mode = cfg.mode;
  vc.fp = cfg.fp;
  // Auto capacity: every lookup creates at most one entry per epoch.
  vc.capacity = cfg.capacity != 0 ? cfg.capacity
                                  : cfg.num_events / std::max<std::uint64_t>(cfg.epochs, 1) + cfg.num_depositors + 1;
  vc.blind_bits = cfg.blind_bits;
  vc.budget = cfg.budget;
  vc.group = cfg.group;
  auto vault = std::make_shared<Vault>(vc, std::make_shared<SeededRandom>(cfg.seed, 0));
  VaultServer server(vault);

  SeededRandom key_rng(cfg.seed, 1);
  auto secret = MasterSecret::generate(key_rng);
  auto epoch = std::make_shared<std::atomic<std::uint64_t>>(0);
  EpochClock clock = [epoch] { return epoch->load(); };

  std::vector<std::unique_ptr<Depositor>> deps;
  std::vector<std::vector<std::uint64_t>> events;
  for (std::uint64_t d = 0; d < cfg.num_depositors; ++d) {
    auto rng = std::make_shared<SeededRandom>(cfg.seed, 2 + d);
    deps.push_back(connect_in_process(server, secret, depositor_options(*vault, clock, rng)));
    auto share = cfg.num_events / cfg.num_depositors + (d < cfg.num_events % cfg.num_depositors ? 1 : 0);
    events.push_back(draw_events(cfg, share, *rng));
  }

  std::vector<std::vector<Observation>> seen(cfg.num_depositors);
  auto start = std::chrono::steady_clock::now();
  for (std::uint64_t e = 0; e < cfg.epochs; ++e) {
    if (e > 0) {
      server.rollover(e);
      epoch->store(e);
      // Depositors only learn of the rollover through the pushed notice; their
      // clocks are authoritative for which epoch they tag.
    }
    auto slice = [&](std::uint64_t d) {
      auto n = events[d].size();
      return std::pair<std::size_t, std::size_t>(n * e / cfg.epochs, n * (e + 1) / cfg.epochs);
    };
    auto replay_one = [&](std::uint64_t d, std::size_t i) {
      auto qid = events[d][i];
      auto out = deps[d]->lookup(as_bytes(ipv4_qid(qid)));
      seen[d].push_back({out.epoch, qid, out.pseudonym, out.hit});
    };
    if (cfg.concurrent) {
      std::vector<std::thread> workers;
      for (std::uint64_t d = 0; d < cfg.num_depositors; ++d) {
        workers.emplace_back([&, d] {
          auto [lo, hi] = slice(d);
          for (auto i = lo; i < hi; ++i) replay_one(d, i);
        });
      }
      for (auto& w : workers) w.join();
    } else {
      std::vector<std::pair<std::size_t, std::size_t>> ranges;
      for (std::uint64_t d = 0; d < cfg.num_depositors; ++d) ranges.push_back(slice(d));
      bool progress = true;
      while (progress) {
        progress = false;
        for (std::uint64_t d = 0; d < cfg.num_depositors; ++d) {
          if (ranges[d].first < ranges[d].second) {
            replay_one(d, ranges[d].first++);
            progress = true;
          }
        }
      }
    }
  }
  auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  SimReport r;
  r.mode = cfg.mode;
  r.events = cfg.num_events;
  r.seconds = seconds;
  auto stats = vault->stats();
  r.evictions = stats.evictions;
  r.rollovers = stats.rollovers;
  r.mapping_size = vault->size();
  for (const auto& d : deps) r.round_trips += d->round_trips();
  server.stop();

  std::map<std::pair<std::uint64_t, std::uint64_t>, Pseudonym> first;
  std::unordered_map<Pseudonym, std::uint64_t> labels;
  std::map<Pseudonym, std::pair<std::uint64_t, std::uint64_t>> owner;
  Bytes structure;
  Bytes raw;
  for (const auto& per_dep : seen) {
    for (const auto& o : per_dep) {
      ++r.lookups;
      if (o.hit) ++r.hits;
      auto key = std::make_pair(o.epoch, o.qid);
      auto [it, fresh] = first.emplace(key, o.pseudonym);
      if (!fresh && it->second != o.pseudonym) ++r.consistency_violations;
      // Distinct QIDs sharing one pseudonym is also a violation.
      auto [ot, new_owner] = owner.emplace(o.pseudonym, key);
      if (!new_owner && ot->second != key) ++r.consistency_violations;
      auto [lt, new_label] = labels.emplace(o.pseudonym, labels.size());
      append_u64be(structure, o.epoch);
      append_u64be(structure, o.qid);
      append_u64be(structure, lt->second);
      raw.insert(raw.end(), o.pseudonym.value().begin(), o.pseudonym.value().end());
    }
  }
  r.distinct_pseudonyms = labels.size();
  r.structure_digest = hex_digest(structure);
  r.pseudonym_digest = hex_digest(raw);
  r.throughput = seconds > 0 ? static_cast<double>(r.lookups) / seconds : 0.0;
  r.round_trips_per_lookup = r.lookups ? static_cast<double>(r.round_trips) / static_cast<double>(r.lookups) : 0.0;

  if (cfg.budget == 0 && r.consistency_violations != 0) {
    throw InvariantViolation("pseudonym_consistency",
                             std::to_string(r.consistency_violations) + " QIDs saw conflicting pseudonyms");
  }
  if (cfg.budget != 0 && stats.evictions != 0 &&
      stats.min_budget_at_eviction < static_cast<double>(cfg.budget)) {
    throw InvariantViolation("budget_eviction", "an entry was evicted below its budget");
  }
  return r;
}

// ------------------------------------------------------------------ attack

nlohmann::json AttackReport::to_json() const {
  return {{"mode", std::string(to_string(mode))},
          {"universe", universe},
          {"victim_deposits", victim_deposits},
          {"attacker_lookups", attacker_lookups},
          {"foreign_entries_seen", foreign_entries_seen},
          {"distinct_foreign", distinct_foreign},
          {"recovered", recovered},
          {"recovery_rate", recovery_rate}};
}

AttackReport dictionary_attack(const AttackConfig& cfg) {
  if (cfg.mode != Mode::C && cfg.mode != Mode::D) {
    throw std::invalid_argument("dictionary attack needs foreign response material (modes C, D)");
  }
  VaultConfig vc;
  vc.mode = cfg.mode;
  vc.fp = cfg.fp;
  vc.capacity = 2 * (cfg.universe + cfg.attacker_lookups);
  vc.group = cfg.group;
  auto vault = std::make_shared<Vault>(vc, std::make_shared<SeededRandom>(cfg.seed, 0));
  VaultServer server(vault);
  SeededRandom key_rng(cfg.seed, 1);
  auto secret = MasterSecret::generate(key_rng);
  EpochClock clock = [] { return std::uint64_t{0}; };

  auto victim = connect_in_process(server, secret,
                                   depositor_options(*vault, clock, std::make_shared<SeededRandom>(cfg.seed, 2)));
  for (std::uint64_t i = 0; i < cfg.universe; ++i) victim->lookup(as_bytes(ipv4_qid(i)));

  auto attacker = connect_in_process(server, secret,
                                     depositor_options(*vault, clock, std::make_shared<SeededRandom>(cfg.seed, 3)));
  std::vector<LookupTranscript> transcripts;
  attacker->set_observer([&](const LookupTranscript& t) { transcripts.push_back(t); });
  std::set<Key32> own;
  for (std::uint64_t i = 0; i < cfg.attacker_lookups; ++i) {
    auto qid = "192.168." + std::to_string(i >> 8 & 0xff) + "." + std::to_string(i & 0xff);
    own.insert(attacker->epoch_token(as_bytes(qid), 0));
    attacker->lookup(as_bytes(qid));
  }
  server.stop();

  // The attacker's dictionary: epoch tokens of the whole QID universe.
  std::map<Key32, std::uint64_t> dictionary;
  for (std::uint64_t i = 0; i < cfg.universe; ++i) dictionary.emplace(token_for(secret, 0, ipv4_qid(i)), i);

  AttackReport r;
  r.mode = cfg.mode;
  r.universe = cfg.universe;
  r.victim_deposits = cfg.universe;
  r.attacker_lookups = cfg.attacker_lookups;
  std::set<Bytes> foreign;
  std::set<Bytes> recovered;
  for (const auto& t : transcripts) {
    if (cfg.mode == Mode::C) {
      for (const auto& m : t.response.body.at("matches")) {
        auto h = base64_decode(m.at("hmac").get<std::string>());
        Key32 k{};
        std::copy(h.begin(), h.end(), k.begin());
        if (own.count(k)) continue;
        ++r.foreign_entries_seen;
        foreign.insert(h);
        if (dictionary.count(k)) recovered.insert(h);
      }
      continue;
    }
    const auto& key = *t.ot_key;
    std::set<Bytes> own_idx;
    for (const auto& o : own) {
      auto idx = tag(key, o);
      own_idx.insert(Bytes(idx.begin(), idx.end()));
    }
    for (const auto& e : t.response.body.at("entries")) {
      auto idx = base64_decode(e.at("idx").get<std::string>());
      if (own_idx.count(idx)) continue;
      auto ct = base64_decode(e.at("ct").get<std::string>());
      ++r.foreign_entries_seen;
      foreign.insert(ct);
      // Direct decryption with the receiver key, then the dictionary walk
      // over candidate OT indices.
      if (auto plain = aead_open(key, ct)) {
        recovered.insert(ct);
        continue;
      }
      for (const auto& [token, qid] : dictionary) {
        auto cand = tag(key, token);
        if (equal_ct(cand, idx) && aead_open(key, ct)) {
          recovered.insert(ct);
          break;
        }
      }
    }
  }
  r.distinct_foreign = foreign.size();
  r.recovered = recovered.size();
  r.recovery_rate = r.distinct_foreign ? static_cast<double>(r.recovered) / static_cast<double>(r.distinct_foreign) : 0;
  return r;
}

}  // namespace peepll
