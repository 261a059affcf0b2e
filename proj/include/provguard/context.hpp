#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "provguard/ledger.hpp"
#include "provguard/transaction.hpp"

namespace provguard {

enum class Quantity { Temperature, Datetime, Location };

std::string_view to_string(Quantity q);
std::optional<Quantity> parse_quantity(std::string_view s);

struct PhysicalReading {
  std::string source;
  Quantity quantity = Quantity::Temperature;
  std::string value;  // scalar with unit tag, e.g. "21.5 C"
  Millis observed_at = 0;

  bool operator==(const PhysicalReading&) const = default;
};

/// The schema of a transaction: where it goes, what it does and which
/// parameters it carries. Parameter values are not part of it. A key may
/// declare a unit tag as `name@unit`; the tag is part of the key.
struct TemplateDescriptor {
  std::string device_id;
  TxKind kind = TxKind::Read;
  std::vector<std::string> param_keys;  // sorted, unique

  bool operator==(const TemplateDescriptor&) const = default;
};

struct TemplateSignature {
  Digest digest{};

  bool operator==(const TemplateSignature&) const = default;
  auto operator<=>(const TemplateSignature&) const = default;
  std::string hex() const { return to_hex(digest); }
};

TemplateDescriptor describe_template(const Transaction& tx);
TemplateSignature template_signature(const TemplateDescriptor& t);
TemplateSignature template_signature(const Transaction& tx);

struct ProvenanceEntry {
  TemplateSignature signature;
  TxStatus status = TxStatus::Mined;
  std::uint64_t block_index = 0;
  std::string tx_id;
  TemplateDescriptor descriptor;

  bool operator==(const ProvenanceEntry&) const = default;
};

struct ProvenanceGroup {
  std::size_t group_index = 0;
  std::vector<ProvenanceEntry> entries;

  bool operator==(const ProvenanceGroup&) const = default;
};

struct ContextSnapshot {
  std::vector<ProvenanceGroup> groups;
  std::vector<PhysicalReading> physical;
  /// Pre-legitimized templates from the bootstrap configuration.
  std::vector<TemplateSignature> seeded_templates;
  std::vector<std::string> registered_devices;
  std::size_t registered_sensors = 0;
  Millis built_at = 0;
  std::size_t window = 100;
  double build_micros = 0;

  std::size_t entry_count() const;
  /// Equality over everything except built_at, physical and build_micros.
  bool same_provenance(const ContextSnapshot& other) const;
};

nlohmann::json to_json(const ContextSnapshot& snapshot);

/// Latest sensor readings, optionally refreshed by probes.
class SensorFeed {
 public:
  using Probe = std::function<std::optional<std::string>()>;

  void register_sensor(const std::string& source, Quantity quantity, Probe probe = {});
  void report(const std::string& source, std::string value, Millis observed_at);
  /// Runs every registered probe and stores fresh values stamped `now`.
  void poll(Millis now);

  std::vector<PhysicalReading> latest() const;
  std::size_t sensor_count() const;

 private:
  struct Sensor {
    Quantity quantity;
    Probe probe;
    std::optional<PhysicalReading> last;
  };
  mutable std::mutex mu_;
  std::map<std::string, Sensor> sensors_;
};

/// Chunks the most recent `window` chain transactions into groups of
/// `group_size`, last group possibly short. Throws InvalidArgument when
/// either bound is zero.
std::vector<ProvenanceGroup> collect_provenance(const Ledger& ledger, std::size_t window, std::size_t group_size);

/// One fresh reading per sensor plus a datetime reading for `now`.
std::vector<PhysicalReading> collect_physical(const SensorFeed& feed, Millis now, Millis max_age);

struct FactoryOptions {
  std::size_t window = 100;
  std::size_t group_size = 10;
  Millis max_physical_age = 5000;
};

class ContextFactory {
 public:
  ContextFactory(const Clock& clock, FactoryOptions options) : clock_(clock), options_(options) {}

  void seed_templates(std::vector<TemplateSignature> seeded) { seeded_ = std::move(seeded); }
  void set_registered_devices(std::vector<std::string> devices) { devices_ = std::move(devices); }
  const FactoryOptions& options() const { return options_; }

  /// Never mutates the ledger; feed probes are not run here.
  ContextSnapshot build(const Ledger& ledger, const SensorFeed& feed) const;

 private:
  const Clock& clock_;
  FactoryOptions options_;
  std::vector<TemplateSignature> seeded_;
  std::vector<std::string> devices_;
};

}  // namespace provguard
