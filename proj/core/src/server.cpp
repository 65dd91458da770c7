#include "peepll/server.hpp"

#include "peepll/errors.hpp"

namespace peepll {

VaultServer::VaultServer(std::shared_ptr<Vault> vault) : vault_(std::move(vault)) {}

VaultServer::~VaultServer() { stop(); }

Message VaultServer::epoch_notice() const {
  const auto& p = vault_->params();
  Message m;
  m.type = MessageType::EpochNotice;
  m.mode = vault_->mode();
  m.epoch = vault_->epoch();
  m.body = {{"blind_bits", std::uint64_t{p.b}}, {"k_star", std::uint64_t{p.k_star}}, {"m", std::uint64_t{p.m}}};
  return m;
}

void VaultServer::send(Connection& conn, const Message& msg) {
  std::lock_guard lock(conn.send_mu);
  if (!conn.open) return;
  try {
    send_message(*conn.channel, msg);
  } catch (const TransportError&) {
    conn.open = false;
  }
}

void VaultServer::serve(std::unique_ptr<Channel> channel) {
  auto conn = std::make_shared<Connection>();
  conn->channel = std::move(channel);
  std::lock_guard lock(mu_);
  if (stopped_) {
    conn->channel->close();
    return;
  }
  connections_.push_back(conn);
  workers_.emplace_back([this, conn] { run(conn); });
}

void VaultServer::run(std::shared_ptr<Connection> conn) {
  {
    // Hold the rollover lock so no notice for a newer epoch overtakes the greeting.
    std::lock_guard lock(rollover_mu_);
    send(*conn, epoch_notice());
    if (vault_->mode() == Mode::D) {
      Message pk;
      pk.type = MessageType::OtPublicKey;
      pk.mode = Mode::D;
      pk.epoch = vault_->epoch();
      pk.body = {{"group", std::string(to_string(vault_->group().profile()))}};
      pk.set_bin("s", vault_->ot_public_key().bytes);
      send(*conn, pk);
    }
  }
  while (conn->open) {
    std::optional<std::string> frame;
    try {
      frame = conn->channel->receive_frame();
    } catch (const TransportError&) {
      break;
    }
    if (!frame) break;
    Message reply;
    try {
      reply = vault_->handle(decode(*frame));
    } catch (const ProtocolError& e) {
      reply = make_error(vault_->mode(), vault_->epoch(), e.code(), e.what());
    }
    send(*conn, reply);
  }
  conn->open = false;
  conn->channel->close();
  std::lock_guard lock(mu_);
  connections_.remove(conn);
}

void VaultServer::listen(TcpListener& listener) {
  while (auto ch = listener.accept()) serve(std::move(ch));
}

void VaultServer::rollover(std::uint64_t new_epoch) {
  std::lock_guard roll(rollover_mu_);
  rollover_locked(new_epoch);
}

void VaultServer::rollover_locked(std::uint64_t new_epoch) {
  vault_->epoch_rollover(new_epoch);
  auto notice = epoch_notice();
  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    conns.assign(connections_.begin(), connections_.end());
  }
  for (auto& c : conns) send(*c, notice);
}

bool VaultServer::advance_to(std::uint64_t current_epoch) {
  std::lock_guard roll(rollover_mu_);
  if (current_epoch <= vault_->epoch()) return false;
  rollover_locked(current_epoch);
  return true;
}

void VaultServer::stop() {
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    stopped_ = true;
    for (auto& c : connections_) {
      c->open = false;
      c->channel->close();
    }
    workers.swap(workers_);
  }
  for (auto& t : workers) {
    if (t.joinable()) t.join();
  }
}

std::size_t VaultServer::active_connections() const {
  std::lock_guard lock(mu_);
  return connections_.size();
}

}  // namespace peepll
