#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace provguard {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;
using Millis = std::int64_t;

std::string to_hex(const Digest& d);
Digest digest_from_hex(std::string_view hex);

/// Stable machine-readable error codes. The HTTP layer maps each one to a
/// status code and echoes the name in the response body.
enum class ErrorCode {
  InvalidArgument,
  DuplicateTxId,
  UnknownDeviceKindCombination,
  UnknownTransaction,
  EmptyPool,
  StatusConflict,
  TokenTooLong,
  OptionTooLong,
  Truncated,
  BadVersion,
  ReservedTKL,
  PayloadMarkerWithoutPayload,
  MalformedOption,
  Timeout,
  LedgerUnavailable,
  ConfigParse,
  DuplicatePending,
  PreconditionViolated,
  UnknownPending,
  AlreadyDecided,
  Unauthorized,
  Expired,
  SelfConfirm,
  InvalidCatalog,
  UnknownProposal,
  ProposalClosed,
  DuplicateDevice,
  UnknownDevice,
  NotApproved,
  UnsupportedKind,
  TransportError,
  MiningModeAuto,
  ScenarioAssertionFailed,
  EmptyRecords,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Wall-clock source in epoch milliseconds. Injected everywhere a timestamp
/// ends up in a hash or a staleness decision so tests can pin it.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Millis now_ms() const = 0;
};

class SystemClock final : public Clock {
 public:
  Millis now_ms() const override;
};

class ManualClock final : public Clock {
 public:
  explicit ManualClock(Millis start = 0) : now_(start) {}
  Millis now_ms() const override { return now_.load(); }
  void set(Millis t) { now_.store(t); }
  void advance(Millis dt) { now_.fetch_add(dt); }

 private:
  std::atomic<Millis> now_;
};

}  // namespace provguard
