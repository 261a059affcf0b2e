#include "provguard/coap_transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fmt/format.h>

namespace provguard::coap {

Message InProcessTransport::exchange(const Message& request) {
  const Bytes wire = encode(request);
  auto reply = handler_(wire);
  if (!reply) throw Error(ErrorCode::Timeout, "handler produced no response");
  return decode(*reply);
}

namespace {

sockaddr_in loopback(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw Error(ErrorCode::TransportError, "bad IPv4 address " + host);
  return addr;
}

std::string errno_text() { return std::strerror(errno); }

bool matches(const Message& request, const Message& reply) {
  if (reply.type == MessageType::ACK || reply.type == MessageType::RST) return reply.message_id == request.message_id;
  return reply.token == request.token;
}

}  // namespace

UdpTransport::UdpTransport(std::string host, std::uint16_t port, RetransmitPolicy policy)
    : host_(std::move(host)), port_(port), policy_(policy) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw Error(ErrorCode::TransportError, "socket: " + errno_text());
}

UdpTransport::~UdpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

Message UdpTransport::exchange(const Message& request) {
  std::lock_guard lock(mu_);
  const Bytes wire = encode(request);
  const sockaddr_in dest = loopback(host_, port_);
  const int attempts = request.type == MessageType::CON ? 1 + policy_.max_retransmit : 1;
  int timeout = policy_.ack_timeout_ms;
  std::array<std::uint8_t, 2048> buf{};

  for (int attempt = 0; attempt < attempts; ++attempt, timeout *= 2) {
    if (::sendto(fd_, wire.data(), wire.size(), 0, reinterpret_cast<const sockaddr*>(&dest), sizeof dest) < 0)
      throw Error(ErrorCode::TransportError, "sendto: " + errno_text());
    ++transmissions_;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout);
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) break;
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (ready < 0 && errno != EINTR) throw Error(ErrorCode::TransportError, "poll: " + errno_text());
      if (ready <= 0) continue;
      const auto n = ::recv(fd_, buf.data(), buf.size(), 0);
      if (n < 0) continue;
      try {
        Message reply = decode(std::span(buf.data(), static_cast<std::size_t>(n)));
        if (matches(request, reply)) return reply;
      } catch (const Error&) {
        // Undecodable datagrams are dropped, the request stays outstanding.
      }
    }
  }
  throw Error(ErrorCode::Timeout, fmt::format("no response to message {} after {} transmissions", request.message_id, attempts));
}

UdpServer::UdpServer(Handler handler, std::uint16_t port) : handler_(std::move(handler)) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw Error(ErrorCode::TransportError, "socket: " + errno_text());
  sockaddr_in addr = loopback("127.0.0.1", port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    const auto msg = errno_text();
    ::close(fd_);
    throw Error(ErrorCode::TransportError, fmt::format("bind port {}: {}", port, msg));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  thread_ = std::thread([this] { loop(); });
}

UdpServer::~UdpServer() {
  stop();
  if (fd_ >= 0) ::close(fd_);
}

void UdpServer::stop() {
  running_ = false;
  if (thread_.joinable()) thread_.join();
}

void UdpServer::loop() {
  std::array<std::uint8_t, 2048> buf{};
  while (running_) {
    pollfd pfd{fd_, POLLIN, 0};
    if (::poll(&pfd, 1, 50) <= 0) continue;
    sockaddr_in from{};
    socklen_t len = sizeof from;
    const auto n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n < 0) continue;
    auto reply = handler_(std::span(buf.data(), static_cast<std::size_t>(n)));
    if (reply) ::sendto(fd_, reply->data(), reply->size(), 0, reinterpret_cast<sockaddr*>(&from), len);
  }
}

Client::Client(Transport& transport, std::uint64_t seed)
    : transport_(transport), rng_(seed), next_id_(static_cast<std::uint16_t>(rng_())) {}

Message Client::request(Code method, const std::vector<std::string>& path, const std::vector<std::string>& query,
                        Bytes payload) {
  Message req;
  req.type = MessageType::CON;
  req.code = method;
  {
    std::lock_guard lock(mu_);
    req.message_id = next_id_++;
    const std::uint64_t t = rng_();
    req.token.resize(4);
    for (std::size_t i = 0; i < 4; ++i) req.token[i] = static_cast<std::uint8_t>(t >> (8 * i));
  }
  req.set_uri_path(path);
  for (const auto& q : query) req.add_option(kUriQuery, std::string_view(q));
  req.payload = std::move(payload);
  return transport_.exchange(req);
}

}  // namespace provguard::coap
