#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "provguard/gateway.hpp"

namespace provguard {

/// HTTP status for a module error. Unauthorized maps to 401; handlers that
/// see a valid token without the needed right answer 403 themselves.
int http_status(ErrorCode code);
nlohmann::json error_body(ErrorCode code, std::string_view message);

/// JSON views shared by the HTTP API and the CLI.
nlohmann::json to_json(const Transaction& tx);
nlohmann::json to_json(const LocatedTx& tx);
nlohmann::json to_json(const Block& b);
nlohmann::json to_json(const ValidationReport& r);
Transaction transaction_from_json(const nlohmann::json& j);

/// REST front end of a Gateway:
///
///   POST /transactions                      202 {tx_id, status}
///   GET  /transactions?status&kind&device_id&since_block
///   GET  /transactions/{tx_id}
///   POST /mine                              manual mode only
///   GET  /chain   GET /chain/validate   GET /context
///   GET  /pending?state=awaiting|decided|expired
///   POST /pending/{id}/decision             {decision}, Authorization: Bearer
///   GET  /icontracts
///   POST /icontracts/proposals              201, body {catalog}
///   POST /icontracts/proposals/{id}/confirm
///   POST /icontracts/proposals/{id}/abort
///   GET  /devices   GET /metrics   GET /health
///
/// Errors are {"error": {"code": <ErrorCode name>, "message": ...}}.
class HttpApi {
 public:
  explicit HttpApi(Gateway& gateway);
  ~HttpApi();
  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port;
  /// returns the bound port.
  std::uint16_t start(const std::string& host, std::uint16_t port);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, std::uint16_t port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace provguard
