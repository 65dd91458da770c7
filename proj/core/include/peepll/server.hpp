#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "peepll/pvault.hpp"
#include "peepll/transport.hpp"

namespace peepll {

/// Serves Depositor connections against one Vault. Every connection first
/// receives an EpochNotice carrying the index parameters (and, in mode D, an
/// OtPublicKey); afterwards requests are answered strictly in order.
class VaultServer {
 public:
  explicit VaultServer(std::shared_ptr<Vault> vault);
  ~VaultServer();
  VaultServer(const VaultServer&) = delete;
  VaultServer& operator=(const VaultServer&) = delete;

  /// Handles the channel on a new thread until the peer disconnects.
  void serve(std::unique_ptr<Channel> channel);
  /// Accept loop; returns once the listener is closed.
  void listen(TcpListener& listener);

  /// Rolls the vault over and pushes an EpochNotice to every open connection.
  void rollover(std::uint64_t new_epoch);
  /// Rolls over if `current_epoch` is ahead of the vault. Returns true if it did.
  bool advance_to(std::uint64_t current_epoch);

  /// Closes every connection and joins the workers.
  void stop();

  std::size_t active_connections() const;
  Vault& vault() { return *vault_; }

 private:
  struct Connection {
    std::unique_ptr<Channel> channel;
    std::mutex send_mu;
    std::atomic<bool> open{true};
  };

  void run(std::shared_ptr<Connection> conn);
  void rollover_locked(std::uint64_t new_epoch);
  void send(Connection& conn, const Message& msg);
  Message epoch_notice() const;

  std::shared_ptr<Vault> vault_;
  mutable std::mutex mu_;
  std::mutex rollover_mu_;
  std::list<std::shared_ptr<Connection>> connections_;
  std::vector<std::thread> workers_;
  bool stopped_ = false;
};

}  // namespace peepll
