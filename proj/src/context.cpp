#include "provguard/context.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fmt/format.h>

#include "provguard/canonical.hpp"
#include "provguard/sha256.hpp"

namespace provguard {

std::string_view to_string(Quantity q) {
  switch (q) {
    case Quantity::Temperature: return "temperature";
    case Quantity::Datetime: return "datetime";
    case Quantity::Location: return "location";
  }
  return "?";
}

std::optional<Quantity> parse_quantity(std::string_view s) {
  for (auto q : {Quantity::Temperature, Quantity::Datetime, Quantity::Location})
    if (to_string(q) == s) return q;
  return std::nullopt;
}

TemplateDescriptor describe_template(const Transaction& tx) {
  TemplateDescriptor t{tx.device_id, tx.kind, {}};
  for (const auto& [key, value] : tx.params) t.param_keys.push_back(key);
  return t;
}

TemplateSignature template_signature(const TemplateDescriptor& t) {
  canonical::Writer w;
  w.str("template/v1");
  w.str(t.device_id);
  w.u8(static_cast<std::uint8_t>(t.kind));
  std::vector<std::string> keys = t.param_keys;
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  w.u32(static_cast<std::uint32_t>(keys.size()));
  for (const auto& k : keys) w.str(k);
  return TemplateSignature{sha256(w.bytes())};
}

TemplateSignature template_signature(const Transaction& tx) { return template_signature(describe_template(tx)); }

std::size_t ContextSnapshot::entry_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.entries.size();
  return n;
}

bool ContextSnapshot::same_provenance(const ContextSnapshot& other) const {
  return groups == other.groups && seeded_templates == other.seeded_templates &&
         registered_devices == other.registered_devices && window == other.window;
}

nlohmann::json to_json(const ContextSnapshot& s) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : s.groups) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : g.entries)
      entries.push_back({{"signature", e.signature.hex()},
                         {"status", to_string(e.status)},
                         {"block_index", e.block_index},
                         {"tx_id", e.tx_id},
                         {"device_id", e.descriptor.device_id},
                         {"kind", to_string(e.descriptor.kind)},
                         {"param_keys", e.descriptor.param_keys}});
    groups.push_back({{"group_index", g.group_index}, {"entries", std::move(entries)}});
  }
  nlohmann::json physical = nlohmann::json::array();
  for (const auto& p : s.physical)
    physical.push_back({{"source", p.source},
                        {"quantity", to_string(p.quantity)},
                        {"value", p.value},
                        {"observed_at", p.observed_at}});
  nlohmann::json seeded = nlohmann::json::array();
  for (const auto& t : s.seeded_templates) seeded.push_back(t.hex());
  return {{"groups", std::move(groups)},
          {"physical", std::move(physical)},
          {"seeded_templates", std::move(seeded)},
          {"registered_devices", s.registered_devices},
          {"built_at", s.built_at},
          {"window", s.window},
          {"entry_count", s.entry_count()},
          {"build_micros", s.build_micros}};
}

void SensorFeed::register_sensor(const std::string& source, Quantity quantity, Probe probe) {
  std::lock_guard lock(mu_);
  sensors_[source] = Sensor{quantity, std::move(probe), std::nullopt};
}

void SensorFeed::report(const std::string& source, std::string value, Millis observed_at) {
  std::lock_guard lock(mu_);
  auto it = sensors_.find(source);
  if (it == sensors_.end()) throw Error(ErrorCode::InvalidArgument, "unregistered sensor " + source);
  auto& last = it->second.last;
  if (last && last->observed_at > observed_at) return;  // keep the most recent
  last = PhysicalReading{source, it->second.quantity, std::move(value), observed_at};
}

void SensorFeed::poll(Millis now) {
  std::vector<std::pair<std::string, Probe>> probes;
  {
    std::lock_guard lock(mu_);
    for (const auto& [source, sensor] : sensors_)
      if (sensor.probe) probes.emplace_back(source, sensor.probe);
  }
  for (const auto& [source, probe] : probes)
    if (auto value = probe()) report(source, std::move(*value), now);
}

std::vector<PhysicalReading> SensorFeed::latest() const {
  std::lock_guard lock(mu_);
  std::vector<PhysicalReading> out;
  for (const auto& [source, sensor] : sensors_)
    if (sensor.last) out.push_back(*sensor.last);
  return out;
}

std::size_t SensorFeed::sensor_count() const {
  std::lock_guard lock(mu_);
  return sensors_.size();
}

std::vector<ProvenanceGroup> collect_provenance(const Ledger& ledger, std::size_t window, std::size_t group_size) {
  if (window == 0 || group_size == 0) throw Error(ErrorCode::InvalidArgument, "window and group_size must be >= 1");
  std::vector<ProvenanceGroup> groups;
  for (const auto& row : ledger.recent_transactions(window)) {
    if (groups.empty() || groups.back().entries.size() == group_size)
      groups.push_back(ProvenanceGroup{groups.size(), {}});
    auto descriptor = describe_template(row.tx);
    auto signature = template_signature(descriptor);
    groups.back().entries.push_back(
        ProvenanceEntry{signature, row.tx.status, row.block_index, row.tx.tx_id, std::move(descriptor)});
  }
  return groups;
}

namespace {

std::string iso8601(Millis ms) {
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec, ms % 1000);
}

}  // namespace

std::vector<PhysicalReading> collect_physical(const SensorFeed& feed, Millis now, Millis max_age) {
  std::vector<PhysicalReading> out;
  for (auto& r : feed.latest())
    if (r.observed_at <= now && now - r.observed_at <= max_age) out.push_back(std::move(r));
  out.push_back(PhysicalReading{"clock", Quantity::Datetime, iso8601(now), now});
  return out;
}

ContextSnapshot ContextFactory::build(const Ledger& ledger, const SensorFeed& feed) const {
  const auto start = std::chrono::steady_clock::now();
  ContextSnapshot s;
  s.window = options_.window;
  s.built_at = clock_.now_ms();
  try {
    s.groups = collect_provenance(ledger, options_.window, options_.group_size);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument) throw;
    throw Error(ErrorCode::LedgerUnavailable, e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::LedgerUnavailable, e.what());
  }
  s.physical = collect_physical(feed, s.built_at, options_.max_physical_age);
  s.seeded_templates = seeded_;
  s.registered_devices = devices_;
  s.registered_sensors = feed.sensor_count();
  s.build_micros = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
  return s;
}

}  // namespace provguard
