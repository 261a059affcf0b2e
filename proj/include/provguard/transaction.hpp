#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "provguard/common.hpp"

namespace provguard {

enum class TxKind : std::uint8_t { Read = 0, ConfigUpdate = 1, FirmwareUpdate = 2, ActuatorCommand = 3 };

enum class TxStatus : std::uint8_t {
  Submitted,
  Mined,
  Approved,
  Suspicious,
  Executed,
  Rejected,
  Expired,
};

std::string_view to_string(TxKind kind);
std::string_view to_string(TxStatus status);
std::optional<TxKind> parse_kind(std::string_view s);
std::optional<TxStatus> parse_status(std::string_view s);

/// Lifecycle edges:
///   Submitted->Mined, Mined->Approved|Suspicious,
///   Suspicious->Approved|Rejected|Expired, Approved->Executed.
bool is_valid_transition(TxStatus from, TxStatus to);

/// Statuses under which a transaction's template counts as legitimate
/// history for proof-of-provenance.
bool is_legitimizing(TxStatus status);

/// Rejected and Expired entries stay in provenance but never legitimize.
bool is_rejection(TxStatus status);

using ParamMap = std::map<std::string, std::string>;

struct Transaction {
  std::string tx_id;
  std::string device_id;
  TxKind kind = TxKind::Read;
  ParamMap params;
  std::string issuer;
  Millis submitted_at = 0;
  TxStatus status = TxStatus::Submitted;

  bool operator==(const Transaction&) const = default;
};

/// Canonical text form of the parameter map used as the CoAP PUT payload:
/// `key=value` pairs sorted by key and joined by '&'. '%', '&' and '=' are
/// percent-escaped.
std::string serialize_params(const ParamMap& params);
ParamMap parse_params(std::string_view text);

}  // namespace provguard
