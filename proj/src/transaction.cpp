#include "provguard/transaction.hpp"

#include <cctype>
#include <chrono>
#include <fmt/format.h>

namespace provguard {

std::string to_hex(const Digest& d) {
  std::string out;
  out.reserve(64);
  static constexpr char kHex[] = "0123456789abcdef";
  for (auto b : d) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0x0f]);
  }
  return out;
}

Digest digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) throw Error(ErrorCode::InvalidArgument, "digest hex must be 64 chars");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(ErrorCode::InvalidArgument, "bad hex digit");
  };
  Digest d{};
  for (std::size_t i = 0; i < 32; ++i)
    d[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return d;
}

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DuplicateTxId: return "DuplicateTxId";
    case ErrorCode::UnknownDeviceKindCombination: return "UnknownDeviceKindCombination";
    case ErrorCode::UnknownTransaction: return "UnknownTransaction";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::StatusConflict: return "StatusConflict";
    case ErrorCode::TokenTooLong: return "TokenTooLong";
    case ErrorCode::OptionTooLong: return "OptionTooLong";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::ReservedTKL: return "ReservedTKL";
    case ErrorCode::PayloadMarkerWithoutPayload: return "PayloadMarkerWithoutPayload";
    case ErrorCode::MalformedOption: return "MalformedOption";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::LedgerUnavailable: return "LedgerUnavailable";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::DuplicatePending: return "DuplicatePending";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::UnknownPending: return "UnknownPending";
    case ErrorCode::AlreadyDecided: return "AlreadyDecided";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::Expired: return "Expired";
    case ErrorCode::SelfConfirm: return "SelfConfirm";
    case ErrorCode::InvalidCatalog: return "InvalidCatalog";
    case ErrorCode::UnknownProposal: return "UnknownProposal";
    case ErrorCode::ProposalClosed: return "ProposalClosed";
    case ErrorCode::DuplicateDevice: return "DuplicateDevice";
    case ErrorCode::UnknownDevice: return "UnknownDevice";
    case ErrorCode::NotApproved: return "NotApproved";
    case ErrorCode::UnsupportedKind: return "UnsupportedKind";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::MiningModeAuto: return "MiningModeAuto";
    case ErrorCode::ScenarioAssertionFailed: return "ScenarioAssertionFailed";
    case ErrorCode::EmptyRecords: return "EmptyRecords";
  }
  return "Unknown";
}

Millis SystemClock::now_ms() const {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string_view to_string(TxKind kind) {
  switch (kind) {
    case TxKind::Read: return "Read";
    case TxKind::ConfigUpdate: return "ConfigUpdate";
    case TxKind::FirmwareUpdate: return "FirmwareUpdate";
    case TxKind::ActuatorCommand: return "ActuatorCommand";
  }
  return "?";
}

std::string_view to_string(TxStatus status) {
  switch (status) {
    case TxStatus::Submitted: return "Submitted";
    case TxStatus::Mined: return "Mined";
    case TxStatus::Approved: return "Approved";
    case TxStatus::Suspicious: return "Suspicious";
    case TxStatus::Executed: return "Executed";
    case TxStatus::Rejected: return "Rejected";
    case TxStatus::Expired: return "Expired";
  }
  return "?";
}

std::optional<TxKind> parse_kind(std::string_view s) {
  for (auto k : {TxKind::Read, TxKind::ConfigUpdate, TxKind::FirmwareUpdate, TxKind::ActuatorCommand})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<TxStatus> parse_status(std::string_view s) {
  for (auto st : {TxStatus::Submitted, TxStatus::Mined, TxStatus::Approved, TxStatus::Suspicious,
                  TxStatus::Executed, TxStatus::Rejected, TxStatus::Expired})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

bool is_valid_transition(TxStatus from, TxStatus to) {
  switch (from) {
    case TxStatus::Submitted: return to == TxStatus::Mined;
    case TxStatus::Mined: return to == TxStatus::Approved || to == TxStatus::Suspicious;
    case TxStatus::Suspicious:
      return to == TxStatus::Approved || to == TxStatus::Rejected || to == TxStatus::Expired;
    case TxStatus::Approved: return to == TxStatus::Executed;
    default: return false;
  }
}

bool is_legitimizing(TxStatus status) {
  return status == TxStatus::Approved || status == TxStatus::Executed;
}

bool is_rejection(TxStatus status) {
  return status == TxStatus::Rejected || status == TxStatus::Expired;
}

namespace {

void append_escaped(std::string& out, std::string_view s) {
  for (char c : s) {
    if (c == '%' || c == '&' || c == '=')
      out += fmt::format("%{:02X}", static_cast<unsigned char>(c));
    else
      out.push_back(c);
  }
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%') {
      if (i + 2 >= s.size() || !std::isxdigit(static_cast<unsigned char>(s[i + 1])) ||
          !std::isxdigit(static_cast<unsigned char>(s[i + 2])))
        throw Error(ErrorCode::InvalidArgument, "bad percent escape in params");
      out.push_back(static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

}  // namespace

std::string serialize_params(const ParamMap& params) {
  std::string out;
  for (const auto& [key, value] : params) {
    if (!out.empty()) out.push_back('&');
    append_escaped(out, key);
    out.push_back('=');
    append_escaped(out, value);
  }
  return out;
}

ParamMap parse_params(std::string_view text) {
  ParamMap out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('&', start);
    if (end == std::string_view::npos) end = text.size();
    auto pair = text.substr(start, end - start);
    auto eq = pair.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::InvalidArgument, "param pair without '='");
    out[unescape(pair.substr(0, eq))] = unescape(pair.substr(eq + 1));
    start = end + 1;
  }
  return out;
}

}  // namespace provguard
