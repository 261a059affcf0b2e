#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "provguard/coap.hpp"
#include "provguard/ledger.hpp"

namespace provguard {

enum class TemperatureUnit { Celsius, Fahrenheit };
std::string_view to_string(TemperatureUnit u);
std::optional<TemperatureUnit> parse_unit(std::string_view s);

double celsius_to_fahrenheit(double c);
double fahrenheit_to_celsius(double f);
/// One decimal place plus unit letter, e.g. "77.0 F".
std::string format_reading(double celsius, TemperatureUnit unit);

struct DeviceSpec {
  std::string device_id;
  TemperatureUnit unit = TemperatureUnit::Celsius;
  std::uint64_t seed = 1;
  double initial_celsius = 20.0;
  std::set<std::string> protocols{"coap", "http"};
};

/// Emulated temperature sensor. Ambient truth is a seeded random walk:
/// each tick moves +/-0.1 C, clamped to [-20, 50].
class EmulatedDevice {
 public:
  static constexpr double kStep = 0.1;
  static constexpr double kMin = -20.0;
  static constexpr double kMax = 50.0;

  explicit EmulatedDevice(DeviceSpec spec);

  const std::string& id() const { return spec_.device_id; }
  const DeviceSpec& spec() const { return spec_; }
  TemperatureUnit unit() const;
  double truth_celsius() const;
  void set_truth_celsius(double c);
  void tick();
  std::string read() const;

 private:
  friend class DeviceExecutor;
  void set_unit(TemperatureUnit unit);

  DeviceSpec spec_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  double truth_;
  TemperatureUnit unit_;
};

struct ExecutionResult {
  std::string tx_id;
  std::string device_id;
  std::string outcome;  // reading for Read, "ack unit=<u>" for ConfigUpdate
  Millis executed_at = 0;
};

struct DeviceInfo {
  std::string device_id;
  TemperatureUnit unit;
  double truth_celsius;
  std::set<std::string> protocols;
};

/// The only component that touches devices. Executes Approved transactions
/// and refuses everything else with NotApproved.
class DeviceExecutor {
 public:
  explicit DeviceExecutor(const Clock& clock, Ledger* lifecycle = nullptr) : clock_(clock), lifecycle_(lifecycle) {}

  void register_device(DeviceSpec spec);
  std::vector<DeviceInfo> list_devices() const;
  std::vector<std::string> device_ids() const;
  bool has_device(const std::string& id) const;

  /// Requires tx.status == Approved (and the bound ledger to agree). Moves
  /// the transaction to Executed before touching the device, so each
  /// approval executes at most once.
  ExecutionResult execute(const Transaction& tx);

  /// Sensor observation outside any transaction, used for physical context.
  std::optional<std::string> sense(const std::string& device_id) const;
  void tick_all();
  EmulatedDevice& device(const std::string& id);

  /// CoAP endpoint:
  ///   GET device/{id}                 -> 2.05 current reading
  ///   GET device/{id}?tx={tx_id}      -> executes an approved Read, 2.05
  ///   PUT device/{id}/config?tx=...   -> executes an approved ConfigUpdate, 2.04
  /// Unapproved or unknown transactions get 4.03, unknown devices 4.04,
  /// undecodable datagrams RST.
  std::optional<Bytes> handle_coap(std::span<const std::uint8_t> datagram);

  std::uint64_t executed_count() const { return executed_.load(); }
  std::uint64_t refused_count() const { return refused_.load(); }

 private:
  coap::Message respond(const coap::Message& req);

  const Clock& clock_;
  Ledger* lifecycle_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<EmulatedDevice>> devices_;
  std::atomic<std::uint64_t> executed_{0};
  std::atomic<std::uint64_t> refused_{0};
};

/// Request shape the pipeline sends for an approved transaction.
coap::Message execution_request(const Transaction& tx);

}  // namespace provguard
