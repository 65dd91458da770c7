#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "peepll/protocol.hpp"

namespace peepll {

/// Ordered, reliable, bidirectional frame stream. Frames are single lines;
/// the newline terminator is added and stripped by the channel.
class Channel {
 public:
  virtual ~Channel() = default;
  /// Throws TransportError if the peer is gone.
  virtual void send_frame(std::string_view frame) = 0;
  /// std::nullopt once the peer closed and all frames were drained.
  virtual std::optional<std::string> receive_frame() = 0;
  virtual void close() = 0;
};

void send_message(Channel& ch, const Message& msg);
/// Throws TransportError on close; ProtocolError("malformed") on bad frames.
Message receive_message(Channel& ch);

/// Two connected in-process endpoints backed by blocking queues.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_in_process_pair();

/// Frames seen on a channel, in order, tagged by direction.
struct Capture {
  struct Frame {
    bool outbound;
    std::string text;
  };
  mutable std::mutex mu;
  std::vector<Frame> frames;

  std::vector<Frame> snapshot() const {
    std::lock_guard lock(mu);
    return frames;
  }
};

/// Decorator that records every frame passing through the wrapped channel.
class RecordingChannel final : public Channel {
 public:
  RecordingChannel(std::unique_ptr<Channel> inner, std::shared_ptr<Capture> capture)
      : inner_(std::move(inner)), capture_(std::move(capture)) {}

  void send_frame(std::string_view frame) override;
  std::optional<std::string> receive_frame() override;
  void close() override { inner_->close(); }

 private:
  std::unique_ptr<Channel> inner_;
  std::shared_ptr<Capture> capture_;
};

/// "host:port" with the port defaulting to 7474.
struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7474;
  static Endpoint parse(std::string_view text);
};

std::unique_ptr<Channel> tcp_connect(const Endpoint& ep);

class TcpListener {
 public:
  explicit TcpListener(const Endpoint& ep);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  /// Blocks; nullptr once the listener is closed.
  std::unique_ptr<Channel> accept();
  void close();

 private:
  int fd_;
  std::uint16_t port_;
};

}  // namespace peepll
