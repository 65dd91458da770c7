#include "peepll/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <condition_variable>
#include <cstring>
#include <deque>

#include "peepll/errors.hpp"

namespace peepll {

void send_message(Channel& ch, const Message& msg) {
  auto wire = encode(msg);
  wire.pop_back();
  ch.send_frame(wire);
}

Message receive_message(Channel& ch) {
  auto frame = ch.receive_frame();
  if (!frame) throw TransportError("connection closed by peer");
  return decode(*frame);
}

// ------------------------------------------------------------- in-process

namespace {

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> frames;
  bool closed = false;
};

class QueueChannel final : public Channel {
 public:
  QueueChannel(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out) : in_(std::move(in)), out_(std::move(out)) {}
  ~QueueChannel() override { QueueChannel::close(); }

  void send_frame(std::string_view frame) override {
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw TransportError("in-process peer closed");
    out_->frames.emplace_back(frame);
    out_->cv.notify_one();
  }

  std::optional<std::string> receive_frame() override {
    std::unique_lock lock(in_->mu);
    in_->cv.wait(lock, [&] { return !in_->frames.empty() || in_->closed; });
    if (in_->frames.empty()) return std::nullopt;
    auto f = std::move(in_->frames.front());
    in_->frames.pop_front();
    return f;
  }

  void close() override {
    for (auto& p : {in_, out_}) {
      std::lock_guard lock(p->mu);
      p->closed = true;
      p->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<Pipe> in_;
  std::shared_ptr<Pipe> out_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_in_process_pair() {
  auto a_to_b = std::make_shared<Pipe>();
  auto b_to_a = std::make_shared<Pipe>();
  return {std::make_unique<QueueChannel>(b_to_a, a_to_b), std::make_unique<QueueChannel>(a_to_b, b_to_a)};
}

void RecordingChannel::send_frame(std::string_view frame) {
  {
    std::lock_guard lock(capture_->mu);
    capture_->frames.push_back({true, std::string(frame)});
  }
  inner_->send_frame(frame);
}

std::optional<std::string> RecordingChannel::receive_frame() {
  auto f = inner_->receive_frame();
  if (f) {
    std::lock_guard lock(capture_->mu);
    capture_->frames.push_back({false, *f});
  }
  return f;
}

// ------------------------------------------------------------- TCP

Endpoint Endpoint::parse(std::string_view text) {
  Endpoint ep;
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos) {
    if (!text.empty()) ep.host = std::string(text);
    return ep;
  }
  if (colon > 0) ep.host = std::string(text.substr(0, colon));
  auto port_text = text.substr(colon + 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535) {
    throw std::invalid_argument("invalid port in endpoint: " + std::string(text));
  }
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

namespace {

class TcpChannel final : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void send_frame(std::string_view frame) override {
    std::string wire(frame);
    wire.push_back('\n');
    std::size_t sent = 0;
    while (sent < wire.size()) {
      auto n = ::send(fd_, wire.data() + sent, wire.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> receive_frame() override {
    for (;;) {
      auto nl = buf_.find('\n', scanned_);
      if (nl != std::string::npos) {
        if (nl > kMaxMessageBytes) throw TransportError("frame exceeds 1 MiB");
        std::string frame = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        scanned_ = 0;
        return frame;
      }
      scanned_ = buf_.size();
      if (buf_.size() > kMaxMessageBytes) throw TransportError("frame exceeds 1 MiB");
      char chunk[65536];
      auto n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("recv failed: ") + std::strerror(errno));
      }
      if (n == 0) return std::nullopt;
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void close() override {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_;
  std::string buf_;
  std::size_t scanned_ = 0;
};

struct AddrInfoDeleter {
  void operator()(addrinfo* a) const { freeaddrinfo(a); }
};

std::unique_ptr<addrinfo, AddrInfoDeleter> resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  auto port = std::to_string(ep.port);
  int rc = ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) throw TransportError("cannot resolve " + ep.host + ": " + gai_strerror(rc));
  return std::unique_ptr<addrinfo, AddrInfoDeleter>(res);
}

}  // namespace

std::unique_ptr<Channel> tcp_connect(const Endpoint& ep) {
  auto res = resolve(ep, false);
  for (auto* a = res.get(); a != nullptr; a = a->ai_next) {
    int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) return std::make_unique<TcpChannel>(fd);
    ::close(fd);
  }
  throw TransportError("cannot connect to " + ep.host + ":" + std::to_string(ep.port));
}

TcpListener::TcpListener(const Endpoint& ep) : fd_(-1), port_(0) {
  auto res = resolve(ep, true);
  for (auto* a = res.get(); a != nullptr; a = a->ai_next) {
    int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  if (fd_ < 0) throw TransportError("cannot listen on " + ep.host + ":" + std::to_string(ep.port));
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                     : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

TcpListener::~TcpListener() {
  close();
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::accept() {
  for (;;) {
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) return std::make_unique<TcpChannel>(fd);
    if (errno == EINTR) continue;
    return nullptr;
  }
}

void TcpListener::close() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

}  // namespace peepll
