// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "golden_messages.hpp"
#include "peepll/errors.hpp"
#include "peepll/harness.hpp"
#include "peepll/ot.hpp"
#include "test_util.hpp"

using namespace peepll;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "failed: " + what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::shared_ptr<std::atomic<std::uint64_t>> epoch_cell() { return std::make_shared<std::atomic<std::uint64_t>>(0); }

// ------------------------------------------------------------------ 1

Outcome fig4() {
  Outcome o;
  auto start = std::chrono::steady_clock::now();
  Fig4Config cfg;  // 100 prefilled records, 50 trials, seed 1
  auto rows = reproduce_fig4(cfg);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  auto at = [&](double fp_prime) {
    for (const auto& r : rows) {
      if (std::abs(r.fp_prime - fp_prime) < 5e-4) return r.mean_matches;
    }
    return std::nan("");
  };
  const std::array<std::pair<double, double>, 3> published{{{0.0316, 5.02}, {0.1, 12.28}, {0.3162, 23.52}}};
  for (auto [x, y] : published) {
    double got = at(x);
    o.note(fmt("fp'=%.4f", x) + fmt(" mean=%.2f", got) + fmt(" (published %.2f)", y));
    o.require(got >= 0.6 * y && got <= 1.4 * y, fmt("fp'=%.4f outside +-40%%", x));
  }
  double lo = at(0.0316), mid = at(0.1), hi = at(0.4472);
  o.require(lo < mid && mid < hi, "trend across 0.0316 < 0.1 < 0.4472 not increasing");
  o.note(fmt("runtime %.1fs", secs));
  o.require(secs < 60, "runtime >= 60s");
  return o;
}

// ------------------------------------------------------------------ 2

Outcome ot_correctness() {
  Outcome o;
  auto g = make_group(GroupProfile::test);
  SeededRandom rng(2);
  std::uint64_t transfers = 0;
  bool exhaustive_ok = true;
  for (std::uint64_t n = 1; n <= 64 && exhaustive_ok; ++n) {
    auto sender = ot::sender_init(*g, rng);
    std::vector<ot::Payload> payloads;
    for (std::uint64_t j = 0; j < n; ++j) {
      ot::Payload p;
      p.discriminator.resize(32);
      rng.fill(p.discriminator);
      p.plaintext.resize(48);
      rng.fill(p.plaintext);
      payloads.push_back(std::move(p));
    }
    for (std::uint64_t i = 0; i < n; ++i) {
      auto rec = ot::receiver_derive(*g, sender.s, i, n, rng);
      auto keys = ot::sender_derive_keys(*g, sender, rec.r, n);
      auto set = ot::seal_entries(keys, payloads);
      auto got = ot::receiver_open(set, rec.key, payloads[i].discriminator);
      ++transfers;
      if (keys[i] != rec.key || !got || *got != payloads[i].plaintext) {
        exhaustive_ok = false;
        o.require(false, "transfer n=" + std::to_string(n) + " i=" + std::to_string(i));
        break;
      }
    }
  }
  o.note(std::to_string(transfers) + " exhaustive transfers");

  std::uint64_t rejected = 0, foreign = 0;
  for (int t = 0; t < 100; ++t) {
    auto n = 2 + rng.uniform(63);
    auto i = rng.uniform(n);
    auto sender = ot::sender_init(*g, rng);
    auto rec = ot::receiver_derive(*g, sender.s, i, n, rng);
    auto keys = ot::sender_derive_keys(*g, sender, rec.r, n);
    std::vector<ot::Payload> payloads(n);
    for (auto& p : payloads) {
      p.discriminator.resize(32);
      rng.fill(p.discriminator);
      p.plaintext = to_bytes("payload");
    }
    auto set = ot::seal_entries(keys, payloads);
    for (std::uint64_t j = 0; j < n; ++j) {
      if (j == i) {
        o.require(aead_open(rec.key, set[j].ciphertext).has_value(), "own ciphertext did not open");
        continue;
      }
      ++foreign;
      if (!aead_open(rec.key, set[j].ciphertext)) ++rejected;
    }
  }
  o.note(std::to_string(rejected) + "/" + std::to_string(foreign) + " foreign ciphertexts rejected");
  o.require(rejected == foreign, "a foreign ciphertext authenticated");
  return o;
}

// ------------------------------------------------------------------ 3

Outcome consistency() {
  Outcome o;
  for (auto mode : {Mode::A, Mode::C, Mode::D}) {
    SimConfig cfg;
    cfg.num_depositors = 3;
    cfg.qid_universe_size = 1000;
    cfg.num_events = 3000;  // 1000 per depositor over the shared universe
    cfg.mode = mode;
    cfg.concurrent = true;
    cfg.seed = 3;
    try {
      auto r = run_sim(cfg);
      o.note(std::string(to_string(mode)) + ": " + std::to_string(r.distinct_pseudonyms) + " pseudonyms, " +
             std::to_string(r.consistency_violations) + " violations");
      o.require(r.consistency_violations == 0, "mode " + std::string(to_string(mode)));
      o.require(r.distinct_pseudonyms <= 1000, "more pseudonyms than QIDs in mode " + std::string(to_string(mode)));
    } catch (const InvariantViolation& e) {
      o.require(false, e.what());
    }
  }
  return o;
}

// ------------------------------------------------------------------ 4

/// Naive Bayes over (offset, byte) features of the raw frame, with add-one
/// smoothing, plus a length feature.
class ByteClassifier {
 public:
  void train(const std::string& frame, bool label) {
    auto& c = counts_[label];
    ++total_[label];
    for (std::size_t i = 0; i < frame.size(); ++i) ++c[key(i, frame[i])];
    ++c[length_key(frame.size())];
  }

  bool predict(const std::string& frame) const {
    double score[2];
    for (int l = 0; l < 2; ++l) {
      const auto& c = counts_[l];
      double t = total_[l];
      double s = std::log(t + 1);
      auto term = [&](std::uint64_t k) {
        auto it = c.find(k);
        double n = it == c.end() ? 0 : it->second;
        return std::log((n + 1) / (t + 2));
      };
      for (std::size_t i = 0; i < frame.size(); ++i) s += term(key(i, frame[i]));
      s += term(length_key(frame.size()));
      score[l] = s;
    }
    return score[1] > score[0];
  }

 private:
  static std::uint64_t key(std::size_t i, char b) { return (static_cast<std::uint64_t>(i) << 8) | static_cast<std::uint8_t>(b); }
  static std::uint64_t length_key(std::size_t n) { return (std::uint64_t{1} << 63) | n; }
  std::map<std::uint64_t, double> counts_[2];
  double total_[2] = {0, 0};
};

Outcome reuse_indistinguishability() {
  Outcome o;
  VaultConfig vc;
  vc.mode = Mode::A;
  vc.capacity = 2000;
  Vault vault(vc, std::make_shared<SeededRandom>(4, 0));
  SeededRandom rng(4, 1);

  // 500 tokens are deposited beforehand and re-asked exactly once each,
  // mixed with 500 fresh tokens. No recorded response repeats a value, so
  // only the shape and bytes of single responses are available.
  auto request_for = [](const Key32& t) {
    Message req;
    req.type = MessageType::LookupRequest;
    req.mode = Mode::A;
    req.set_bin("token", t);
    return req;
  };
  std::vector<std::pair<Key32, bool>> plan;
  for (int i = 0; i < 500; ++i) {
    Key32 t{};
    rng.fill(t);
    vault.handle(request_for(t));
    plan.emplace_back(t, true);
    rng.fill(t);
    plan.emplace_back(t, false);
  }
  std::shuffle(plan.begin(), plan.end(), rng);

  std::vector<std::pair<std::string, bool>> frames;
  std::set<std::set<std::string>> shapes;
  for (const auto& [t, want_hit] : plan) {
    auto before = vault.stats().creations;
    auto resp = vault.handle(request_for(t));
    bool hit = vault.stats().creations == before;
    o.require(hit == want_hit, "vault disagreed with the plan");
    shapes.insert(field_names(resp.body));
    frames.emplace_back(encode(resp), hit);
  }
  o.require(shapes.size() == 1, "response field sets differ");

  // Stratified split: 250 of each class for training, the rest for testing.
  ByteClassifier clf;
  std::vector<std::pair<std::string, bool>> test;
  int seen[2] = {0, 0};
  for (auto& [f, hit] : frames) {
    if (seen[hit]++ < 250) {
      clf.train(f, hit);
    } else {
      test.emplace_back(f, hit);
    }
  }
  std::size_t correct = 0;
  for (auto& [f, hit] : test) correct += clf.predict(f) == hit;
  double acc = static_cast<double>(correct) / static_cast<double>(test.size());

  std::set<std::size_t> lengths;
  for (auto& [f, hit] : frames) lengths.insert(f.size());
  o.note(std::to_string(frames.size()) + " responses, " + std::to_string(lengths.size()) + " frame length(s)");
  o.note(fmt("classifier accuracy %.3f", acc));
  o.require(std::abs(acc - 0.5) <= 0.05, "classifier beats chance by more than 5%");
  return o;
}

// ------------------------------------------------------------------ 5

Outcome confidentiality() {
  Outcome o;
  SeededRandom rng(5);
  std::vector<std::string> planted;
  for (int i = 0; i < 100; ++i) {
    Bytes r(6);
    rng.fill(r);
    planted.push_back("planted-" + std::to_string(i) + "-" + to_hex(r));
  }
  // Every encoding that could carry a QID verbatim.
  auto needles = [](const std::string& q) {
    std::vector<std::string> n{q, to_hex(as_bytes(q)), base64_encode(as_bytes(q))};
    // Base64 at the other two alignments: drop the first one or two bytes.
    n.push_back(base64_encode(as_bytes(q.substr(1))).substr(0, 8));
    n.push_back(base64_encode(as_bytes(q.substr(2))).substr(0, 8));
    n.push_back(base64_encode(as_bytes(q)).substr(0, 8));
    return n;
  };
  auto scan = [&](const std::string& hay) {
    std::size_t hits = 0;
    for (const auto& q : planted) {
      for (const auto& n : needles(q)) hits += hay.find(n) != std::string::npos;
    }
    return hits;
  };

  auto dir = std::filesystem::temp_directory_path() / "peepll_acceptance";
  std::filesystem::create_directories(dir);
  for (auto mode : {Mode::A, Mode::C, Mode::D}) {
    VaultConfig vc;
    vc.mode = mode;
    vc.capacity = 1000;
    vc.snapshot_path = dir / ("vault_" + std::string(to_string(mode)) + ".json");
    auto vault = std::make_shared<Vault>(vc, std::make_shared<SeededRandom>(5, 1));
    VaultServer server(vault);
    auto cap = std::make_shared<Capture>();
    auto secret = MasterSecret::generate(rng);
    auto e = epoch_cell();
    auto d = connect_in_process(
        server, secret, depositor_options(*vault, [e] { return e->load(); }, std::make_shared<SeededRandom>(5, 2)), cap);
    for (int round = 0; round < 2; ++round) {
      for (const auto& q : planted) d->lookup(as_bytes(q));
    }
    std::string wire;
    for (const auto& f : cap->snapshot()) wire += f.text + "\n";
    vault->persist();
    std::ifstream in(*vc.snapshot_path);
    std::stringstream snap;
    snap << in.rdbuf();
    std::string state;
    for (const auto& entry : vault->dump()) {
      state += to_string(entry.key);
      if (entry.bloom) state += to_string(entry.bloom->serialize());
      state += entry.pseudonym.str();
    }
    auto w = scan(wire), s = scan(snap.str()) + scan(state);
    o.note(std::string(to_string(mode)) + ": " + std::to_string(cap->snapshot().size()) + " frames, " +
           std::to_string(w) + " wire / " + std::to_string(s) + " state occurrences");
    o.require(w == 0 && s == 0, "plaintext QID found in mode " + std::string(to_string(mode)));
    o.require(!snap.str().empty(), "empty snapshot in mode " + std::string(to_string(mode)));
    server.stop();
  }
  std::filesystem::remove_all(dir);
  return o;
}

// ------------------------------------------------------------------ 6

Outcome attack() {
  Outcome o;
  AttackConfig cfg;
  cfg.universe = 1000;
  cfg.mode = Mode::C;
  auto c = dictionary_attack(cfg);
  cfg.mode = Mode::D;
  auto d = dictionary_attack(cfg);
  o.note(fmt("C: recovered %.0f", static_cast<double>(c.recovered)) + "/" + std::to_string(c.distinct_foreign) +
         fmt(" (%.1f%%)", 100 * c.recovery_rate));
  o.note(fmt("D: recovered %.0f", static_cast<double>(d.recovered)) + "/" + std::to_string(d.distinct_foreign));
  o.require(c.distinct_foreign > 0 && c.recovery_rate >= 0.99, "mode C recovery below 99%");
  o.require(d.distinct_foreign > 0 && d.recovered == 0, "mode D leaked foreign deposits");
  return o;
}

// ------------------------------------------------------------------ 7

Outcome linkability() {
  Outcome o;
  // (a) epochs
  for (auto mode : {Mode::A, Mode::C, Mode::D}) {
    auto m = std::string(to_string(mode));
    VaultConfig vc;
    vc.mode = mode;
    vc.capacity = 100;
    auto vault = std::make_shared<Vault>(vc, std::make_shared<SeededRandom>(7, 0));
    VaultServer server(vault);
    auto cap = std::make_shared<Capture>();
    auto e = epoch_cell();
    auto d = connect_in_process(server, testutil::oracle_master(),
                                depositor_options(*vault, [e] { return e->load(); }, std::make_shared<SeededRandom>(7, 1)),
                                cap);
    std::set<Pseudonym> pns;
    std::set<Key32> tokens;
    std::set<std::string> requests;
    bool empty_after_rollover = true;
    for (std::uint64_t ep = 0; ep < 3; ++ep) {
      if (ep > 0) {
        server.rollover(ep);
        e->store(ep);
        empty_after_rollover = empty_after_rollover && vault->size() == 0;
      }
      auto before = cap->snapshot().size();
      pns.insert(d->lookup(as_bytes("10.20.30.40")).pseudonym);
      tokens.insert(d->epoch_token(as_bytes("10.20.30.40"), ep));
      auto frames = cap->snapshot();
      for (auto i = before; i < frames.size(); ++i) {
        if (!frames[i].outbound) continue;
        auto msg = decode(frames[i].text);
        // The lookup token is whatever the first request carries minus the epoch.
        if (msg.type == MessageType::LookupRequest || msg.type == MessageType::OtTransferRequest) {
          requests.insert(msg.body.dump());
          break;
        }
      }
    }
    o.require(pns.size() == 3, m + ": pseudonyms not distinct across epochs");
    o.require(tokens.size() == 3 && requests.size() == 3, m + ": lookup tokens repeat across epochs");
    o.require(empty_after_rollover, m + ": mapping not empty after rollover");
    server.stop();
  }
  o.note("epochs: 3 distinct pseudonyms and tokens in A, C, D");

  // (b) budget B = 3 through a depositor
  for (auto mode : {Mode::A, Mode::C}) {
    VaultConfig vc;
    vc.mode = mode;
    vc.capacity = 100;
    vc.budget = 3;
    auto vault = std::make_shared<Vault>(vc, std::make_shared<SeededRandom>(8, 0));
    VaultServer server(vault);
    auto d = connect_in_process(server, testutil::oracle_master(),
                                depositor_options(*vault, [] { return std::uint64_t{0}; }, std::make_shared<SeededRandom>(8, 1)));
    std::vector<Pseudonym> p;
    for (int i = 0; i < 4; ++i) p.push_back(d->lookup(as_bytes("10.1.2.3")).pseudonym);
    bool ok = p[0] == p[1] && p[1] == p[2] && p[3] != p[0];
    o.require(ok, std::string(to_string(mode)) + ": fourth lookup did not get a new pseudonym");
    server.stop();
  }

  // (b) engineered spurious matches: a victim entry whose stored filter is
  // saturated collides with every foreign trapdoor.
  auto own_lookups_survived = [](bool collide) {
    VaultConfig vc;
    vc.mode = Mode::C;
    vc.capacity = 100;
    vc.budget = 3;
    Vault v(vc, std::make_shared<SeededRandom>(9, 0));
    const auto& p = v.params();
    auto master = testutil::oracle_master();
    IndexKeySet keys(master, p.k_star);
    SeededRandom rng(9, 1);
    auto victim = tag(master.bytes(), as_bytes("victim"));
    v.update_mapping(victim, blind(full_trapdoor(keys, victim, p.m).to_filter(p.m), p.m - 1, rng));  // use 1
    int survived = 0;
    for (int round = 0; round < 10; ++round) {
      if (collide) {
        auto foreign = tag(master.bytes(), as_bytes("foreign-" + std::to_string(round)));
        Message req;
        req.type = MessageType::LookupRequest;
        req.mode = Mode::C;
        req.set_bin("trapdoor", partial_trapdoor(keys, foreign, p.m, rng).to_filter(p.m).serialize());
        v.handle(req);
      }
      auto matches = v.search_mapping(partial_trapdoor(keys, victim, p.m, rng));
      bool found = std::any_of(matches.begin(), matches.end(),
                               [&](const MappingEntry& e) { return e.key == Bytes(victim.begin(), victim.end()); });
      if (!found) break;
      std::vector<Bytes> charged{Bytes(victim.begin(), victim.end())};
      v.charge_budget(charged);
      ++survived;
    }
    return survived;
  };
  int clean = own_lookups_survived(false), collided = own_lookups_survived(true);
  o.note("budget: victim served " + std::to_string(clean) + " own lookups clean, " + std::to_string(collided) +
         " with collisions");
  o.require(clean == 2, "un-collided entry should serve exactly two lookups after creation");
  o.require(collided <= clean, "collisions delayed eviction");
  return o;
}

// ------------------------------------------------------------------ 8

Outcome index_properties() {
  Outcome o;
  SeededRandom rng(10);
  auto master = MasterSecret::generate(rng);

  {
    auto params = index_params(0.01, 1000, std::nullopt);
    IndexKeySet keys(master, params.k_star);
    std::size_t misses = 0;
    for (int i = 0; i < 10000; ++i) {
      Bytes q(16);
      rng.fill(q);
      auto stored = build_stored_filter(keys, q, params.m, params.b, rng);
      misses += !contains(stored, partial_trapdoor(keys, q, params.m, rng));
    }
    o.note(std::to_string(misses) + " false negatives / 10000 (b=" + std::to_string(params.b) + ")");
    o.require(misses == 0, "false negatives");
  }

  // Unblinded filter loaded with its design capacity n (fill about 1/2).
  for (double fp : {0.01, 0.05}) {
    auto params = derive_params(fp, 1000);
    IndexKeySet keys(master, params.k_star);
    BloomFilter loaded(params.m);
    for (int i = 0; i < 1000; ++i) {
      Bytes q(16);
      rng.fill(q);
      insert(loaded, full_trapdoor(keys, q, params.m));
    }
    std::size_t hits = 0;
    const int trials = 100000;
    for (int t = 0; t < trials; ++t) {
      Bytes q(16);
      rng.fill(q);
      hits += contains(loaded, partial_trapdoor(keys, q, params.m, rng));
    }
    double rate = static_cast<double>(hits) / trials;
    double expect = std::pow(2.0, -static_cast<double>(params.k_star) / 2);
    o.note(fmt("fp=%.2f", fp) + " k*=" + std::to_string(params.k_star) + fmt(" measured %.5f", rate) +
           fmt(" vs %.5f", expect));
    o.require(rate >= 0.5 * expect && rate <= 1.5 * expect, fmt("fp=%.2f rate outside +-50%%", fp));
  }
  return o;
}

// ------------------------------------------------------------------ 9

Outcome golden_files() {
  Outcome o;
  auto msgs = golden::golden_messages();
  std::set<MessageType> types;
  for (const auto& [name, msg] : msgs) {
    auto g = golden::read_golden(name);
    o.require(!g.empty(), "missing golden " + name);
    o.require(encode(msg) == g, "golden mismatch " + name);
    if (g.empty()) continue;
    auto d = decode(g);
    o.require(d == msg && encode(d) == g, "roundtrip " + name);
    types.insert(msg.type);
  }
  o.require(types.size() == 9, "not every message type is covered");
  o.note(std::to_string(msgs.size()) + " golden files, " + std::to_string(types.size()) + " types");

  // Fuzz: slices of a random pool up to just past 1 MiB, mutated and
  // spliced golden frames, and (1 in 100) a frame inflated to the size limit.
  SeededRandom rng(11);
  std::string pool(kMaxMessageBytes + 4096, '\0');
  rng.fill(std::span(reinterpret_cast<std::uint8_t*>(pool.data()), pool.size()));
  std::vector<std::string> frames;
  for (const auto& [name, msg] : msgs) frames.push_back(encode(msg));

  std::size_t accepted = 0, rejected = 0, crashes = 0, largest = 0;
  for (int i = 0; i < 100000; ++i) {
    std::string input;
    switch (i % 100 == 99 ? 3 : i % 3) {
      case 0: {
        // Log-uniform length in [0, pool size].
        auto bits = rng.uniform(22);
        auto len = std::min<std::uint64_t>(pool.size(), rng.uniform((std::uint64_t{1} << bits) + 1));
        auto off = rng.uniform(pool.size() - len + 1);
        input = pool.substr(off, len);
        break;
      }
      case 1: {
        input = frames[rng.uniform(frames.size())];
        auto flips = 1 + rng.uniform(8);
        for (std::uint64_t f = 0; f < flips; ++f) input[rng.uniform(input.size())] = static_cast<char>(rng() & 0xff);
        break;
      }
      case 2: {
        input = frames[rng.uniform(frames.size())];
        input = input.substr(0, rng.uniform(input.size() + 1)) + frames[rng.uniform(frames.size())].substr(rng.uniform(32));
        break;
      }
      default: {
        // A valid frame with one string field inflated to near or past 1 MiB.
        auto msg = msgs.begin()->second;
        auto fill = kMaxMessageBytes - 512 + rng.uniform(1024);
        msg.body["token"] = std::string(fill, 'A');
        input = msg.body.dump();
        input = "{\"body\":" + input + ",\"epoch\":1,\"mode\":\"A\",\"type\":\"LookupRequest\"}";
        break;
      }
    }
    largest = std::max(largest, input.size());
    try {
      auto m = decode(input);
      ++accepted;
      if (decode(encode(m)) != m) ++crashes;
    } catch (const ProtocolError&) {
      ++rejected;
    } catch (...) {
      ++crashes;
    }
  }
  o.note("fuzz: " + std::to_string(accepted) + " accepted, " + std::to_string(rejected) + " rejected, largest " +
         std::to_string(largest) + " bytes");
  o.require(crashes == 0, std::to_string(crashes) + " unexpected exceptions or roundtrip breaks");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"Matching-set curve", fig4},
      {"OT correctness", ot_correctness},
      {"Global pseudonym consistency", consistency},
      {"Re-use indistinguishability (mode A)", reuse_indistinguishability},
      {"Deposit confidentiality", confidentiality},
      {"Weak deposit confidentiality contrast", attack},
      {"Limited linkability", linkability},
      {"Secure-index structural properties", index_properties},
      {"Protocol golden files", golden_files},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    auto start = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::printf("%s %zu %s [%.1fs] %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
