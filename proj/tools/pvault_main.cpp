// PVault daemon: serves the pseudonym mapping over newline-delimited JSON.

#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "peepll/errors.hpp"
#include "peepll/server.hpp"

using namespace peepll;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::uint64_t wall_epoch(std::uint64_t seconds) {
  return seconds == 0 ? 0 : static_cast<std::uint64_t>(std::time(nullptr)) / seconds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PVault daemon"};
  std::string listen = "127.0.0.1:7474";
  std::string mode = "A";
  std::string group = "production";
  double fp = 0.01;
  std::uint64_t capacity = 100000;
  std::uint32_t blind_bits = 0;
  std::uint64_t epoch_seconds = 0;
  std::uint64_t budget = 0;
  std::uint64_t persist_seconds = 30;
  std::string snapshot;
  app.add_option("--listen", listen, "host:port to bind");
  app.add_option("--mode", mode, "Lookup mode")->check(CLI::IsMember({"A", "B", "C", "D"}));
  app.add_option("--fp", fp, "Target false-positive rate")->check(CLI::Range(0.0, 1.0));
  auto* bb = app.add_option("--blind-bits", blind_bits, "Blinding bits per stored filter (default: calibrated)");
  app.add_option("--capacity", capacity, "Maximum mapping size");
  app.add_option("--epoch-seconds", epoch_seconds, "Epoch length; 0 disables rollover");
  app.add_option("--budget", budget, "Per-entry lookup budget; 0 disables");
  app.add_option("--snapshot-path", snapshot, "Snapshot file restored at start and written periodically");
  app.add_option("--persist-seconds", persist_seconds, "Snapshot interval");
  app.add_option("--group", group, "OT group for mode D")->check(CLI::IsMember({"production", "test"}));
  CLI11_PARSE(app, argc, argv);

  try {
    VaultConfig cfg;
    cfg.mode = parse_mode(mode);
    cfg.fp = fp;
    cfg.capacity = capacity;
    if (bb->count() > 0) cfg.blind_bits = blind_bits;
    cfg.budget = budget;
    cfg.group = parse_group_profile(group);
    cfg.initial_epoch = wall_epoch(epoch_seconds);
    if (!snapshot.empty()) cfg.snapshot_path = snapshot;

    auto vault = std::make_shared<Vault>(cfg);
    if (cfg.snapshot_path) vault->restore();
    VaultServer server(vault);
    TcpListener listener(Endpoint::parse(listen));

    const auto& p = vault->params();
    std::cerr << "pvault: mode " << to_string(cfg.mode) << " on " << Endpoint::parse(listen).host << ":"
              << listener.port() << ", epoch " << vault->epoch() << ", k*=" << p.k_star << " m=" << p.m
              << " b=" << p.b << ", " << vault->size() << " entries restored\n";

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::thread acceptor([&] { server.listen(listener); });

    auto last_persist = std::chrono::steady_clock::now();
    while (!g_stop) {
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
      if (epoch_seconds > 0 && server.advance_to(wall_epoch(epoch_seconds))) {
        std::cerr << "pvault: rolled over to epoch " << vault->epoch() << "\n";
      }
      if (cfg.snapshot_path && std::chrono::steady_clock::now() - last_persist >= std::chrono::seconds(persist_seconds)) {
        vault->persist();
        last_persist = std::chrono::steady_clock::now();
      }
    }

    listener.close();
    acceptor.join();
    server.stop();
    if (cfg.snapshot_path) vault->persist();
    auto s = vault->stats();
    std::cerr << "pvault: stopped after " << s.lookups << " lookups, " << s.creations << " creations, " << s.evictions
              << " evictions\n";
  } catch (const std::exception& e) {
    std::cerr << "pvault: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
