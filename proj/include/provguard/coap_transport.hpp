#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>

#include "provguard/coap.hpp"

namespace provguard::coap {

/// Server side of the byte contract: one datagram in, at most one out.
using Handler = std::function<std::optional<Bytes>(std::span<const std::uint8_t>)>;

/// Client side: send a request, wait for its matching response.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Message exchange(const Message& request) = 0;
};

/// Encodes, hands the bytes straight to a handler and decodes the reply.
class InProcessTransport final : public Transport {
 public:
  explicit InProcessTransport(Handler handler) : handler_(std::move(handler)) {}
  Message exchange(const Message& request) override;

 private:
  Handler handler_;
};

struct RetransmitPolicy {
  int ack_timeout_ms = 2000;
  int max_retransmit = 4;
};

/// Loopback UDP client. CON requests are retransmitted with exponential
/// backoff; exchanges to the same destination are serialized.
class UdpTransport final : public Transport {
 public:
  UdpTransport(std::string host, std::uint16_t port, RetransmitPolicy policy = {});
  ~UdpTransport() override;
  UdpTransport(const UdpTransport&) = delete;
  UdpTransport& operator=(const UdpTransport&) = delete;

  Message exchange(const Message& request) override;
  int transmissions() const { return transmissions_.load(); }

 private:
  int fd_ = -1;
  std::string host_;
  std::uint16_t port_;
  RetransmitPolicy policy_;
  std::mutex mu_;
  std::atomic<int> transmissions_{0};
};

/// Binds 127.0.0.1:`port` (0 picks an ephemeral port) and answers each
/// datagram with the handler on a background thread.
class UdpServer {
 public:
  UdpServer(Handler handler, std::uint16_t port);
  ~UdpServer();
  UdpServer(const UdpServer&) = delete;
  UdpServer& operator=(const UdpServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  void loop();

  Handler handler_;
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{true};
  std::thread thread_;
};

/// Builds requests with fresh message ids and tokens.
class Client {
 public:
  explicit Client(Transport& transport, std::uint64_t seed = 0x5eed);

  Message request(Code method, const std::vector<std::string>& path,
                  const std::vector<std::string>& query = {}, Bytes payload = {});

 private:
  Transport& transport_;
  std::mutex mu_;
  std::mt19937_64 rng_;
  std::uint16_t next_id_;
};

}  // namespace provguard::coap
