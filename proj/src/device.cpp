#include "provguard/device.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fmt/format.h>

namespace provguard {

std::string_view to_string(TemperatureUnit u) { return u == TemperatureUnit::Celsius ? "celsius" : "fahrenheit"; }

std::optional<TemperatureUnit> parse_unit(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "celsius" || lower == "c") return TemperatureUnit::Celsius;
  if (lower == "fahrenheit" || lower == "f") return TemperatureUnit::Fahrenheit;
  return std::nullopt;
}

double celsius_to_fahrenheit(double c) { return c * 9.0 / 5.0 + 32.0; }
double fahrenheit_to_celsius(double f) { return (f - 32.0) * 5.0 / 9.0; }

std::string format_reading(double celsius, TemperatureUnit unit) {
  if (unit == TemperatureUnit::Celsius) return fmt::format("{:.1f} C", celsius);
  return fmt::format("{:.1f} F", celsius_to_fahrenheit(celsius));
}

EmulatedDevice::EmulatedDevice(DeviceSpec spec)
    : spec_(std::move(spec)), rng_(spec_.seed), truth_(std::clamp(spec_.initial_celsius, kMin, kMax)), unit_(spec_.unit) {}

TemperatureUnit EmulatedDevice::unit() const {
  std::lock_guard lock(mu_);
  return unit_;
}

double EmulatedDevice::truth_celsius() const {
  std::lock_guard lock(mu_);
  return truth_;
}

void EmulatedDevice::set_truth_celsius(double c) {
  std::lock_guard lock(mu_);
  truth_ = std::clamp(c, kMin, kMax);
}

void EmulatedDevice::tick() {
  std::lock_guard lock(mu_);
  const double step = (rng_() & 1) ? kStep : -kStep;
  // Stay on the 0.1 grid so formatted readings do not drift.
  truth_ = std::clamp(std::round((truth_ + step) * 10.0) / 10.0, kMin, kMax);
}

std::string EmulatedDevice::read() const {
  std::lock_guard lock(mu_);
  return format_reading(truth_, unit_);
}

void EmulatedDevice::set_unit(TemperatureUnit unit) {
  std::lock_guard lock(mu_);
  unit_ = unit;
}

void DeviceExecutor::register_device(DeviceSpec spec) {
  if (spec.device_id.empty()) throw Error(ErrorCode::InvalidArgument, "device_id must not be empty");
  std::lock_guard lock(mu_);
  if (devices_.contains(spec.device_id)) throw Error(ErrorCode::DuplicateDevice, spec.device_id);
  auto id = spec.device_id;
  devices_.emplace(std::move(id), std::make_unique<EmulatedDevice>(std::move(spec)));
}

std::vector<DeviceInfo> DeviceExecutor::list_devices() const {
  std::lock_guard lock(mu_);
  std::vector<DeviceInfo> out;
  for (const auto& [id, d] : devices_) out.push_back(DeviceInfo{id, d->unit(), d->truth_celsius(), d->spec().protocols});
  return out;
}

std::vector<std::string> DeviceExecutor::device_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, d] : devices_) out.push_back(id);
  return out;
}

bool DeviceExecutor::has_device(const std::string& id) const {
  std::lock_guard lock(mu_);
  return devices_.contains(id);
}

EmulatedDevice& DeviceExecutor::device(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = devices_.find(id);
  if (it == devices_.end()) throw Error(ErrorCode::UnknownDevice, id);
  return *it->second;
}

ExecutionResult DeviceExecutor::execute(const Transaction& tx) {
  const bool approved = tx.status == TxStatus::Approved &&
                        (!lifecycle_ || lifecycle_->status_of(tx.tx_id) == TxStatus::Approved);
  if (!approved) {
    ++refused_;
    throw Error(ErrorCode::NotApproved, tx.tx_id + " has status " + std::string(to_string(tx.status)));
  }
  EmulatedDevice& dev = device(tx.device_id);

  std::optional<TemperatureUnit> new_unit;
  switch (tx.kind) {
    case TxKind::Read: break;
    case TxKind::ConfigUpdate: {
      auto it = tx.params.find("unit");
      if (it == tx.params.end() || !(new_unit = parse_unit(it->second)))
        throw Error(ErrorCode::UnsupportedKind, "config update needs unit=celsius|fahrenheit");
      break;
    }
    default:
      throw Error(ErrorCode::UnsupportedKind, std::string(to_string(tx.kind)) + " on a temperature sensor");
  }

  if (lifecycle_) lifecycle_->transition(tx.tx_id, TxStatus::Executed, TxStatus::Approved);

  ExecutionResult result{tx.tx_id, tx.device_id, {}, clock_.now_ms()};
  if (new_unit) {
    dev.set_unit(*new_unit);
    result.outcome = fmt::format("ack unit={}", to_string(*new_unit));
  } else {
    result.outcome = dev.read();
  }
  ++executed_;
  return result;
}

std::optional<std::string> DeviceExecutor::sense(const std::string& device_id) const {
  std::lock_guard lock(mu_);
  auto it = devices_.find(device_id);
  if (it == devices_.end()) return std::nullopt;
  return it->second->read();
}

void DeviceExecutor::tick_all() {
  std::lock_guard lock(mu_);
  for (auto& [id, d] : devices_) d->tick();
}

namespace {

coap::Message reply_to(const coap::Message& req, coap::Code code, std::string_view payload = {}) {
  coap::Message r;
  r.type = req.type == coap::MessageType::CON ? coap::MessageType::ACK : coap::MessageType::NON;
  r.code = code;
  r.message_id = req.type == coap::MessageType::CON ? req.message_id : static_cast<std::uint16_t>(req.message_id + 1);
  r.token = req.token;
  if (!payload.empty()) {
    r.add_option(coap::kContentFormat, Bytes{});  // text/plain;charset=utf-8
    r.payload.assign(payload.begin(), payload.end());
  }
  return r;
}

std::optional<std::string> tx_query(const coap::Message& req) {
  for (const auto& q : req.option_strings(coap::kUriQuery))
    if (q.starts_with("tx=")) return q.substr(3);
  return std::nullopt;
}

}  // namespace

coap::Message execution_request(const Transaction& tx) {
  coap::Message m;
  m.type = coap::MessageType::CON;
  if (tx.kind == TxKind::ConfigUpdate) {
    m.code = coap::kPut;
    m.set_uri_path({"device", tx.device_id, "config"});
    const auto body = serialize_params(tx.params);
    m.payload.assign(body.begin(), body.end());
  } else {
    m.code = coap::kGet;
    m.set_uri_path({"device", tx.device_id});
  }
  m.add_option(coap::kUriQuery, "tx=" + tx.tx_id);
  return m;
}

coap::Message DeviceExecutor::respond(const coap::Message& req) {
  const auto path = req.uri_path();
  if (path.size() < 2 || path.size() > 3 || path[0] != "device" || (path.size() == 3 && path[2] != "config"))
    return reply_to(req, coap::kNotFound);
  const std::string& device_id = path[1];
  if (!has_device(device_id)) return reply_to(req, coap::kNotFound);
  const bool config = path.size() == 3;
  if ((config && req.code != coap::kPut) || (!config && req.code != coap::kGet))
    return reply_to(req, coap::kMethodNotAllowed);

  const auto tx_id = tx_query(req);
  if (!tx_id) {
    if (config) return reply_to(req, coap::kForbidden);
    return reply_to(req, coap::kContent, *sense(device_id));
  }

  std::optional<Transaction> tx;
  if (lifecycle_) tx = lifecycle_->find(*tx_id);
  if (!tx) {
    ++refused_;
    return reply_to(req, coap::kForbidden);
  }
  const TxKind expected = config ? TxKind::ConfigUpdate : TxKind::Read;
  if (tx->device_id != device_id || tx->kind != expected) return reply_to(req, coap::kBadRequest);
  if (config && req.payload_string() != serialize_params(tx->params)) return reply_to(req, coap::kBadRequest);

  try {
    auto result = execute(*tx);
    return reply_to(req, config ? coap::kChanged : coap::kContent, result.outcome);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::NotApproved:
      case ErrorCode::StatusConflict: return reply_to(req, coap::kForbidden);
      case ErrorCode::UnknownDevice: return reply_to(req, coap::kNotFound);
      default: return reply_to(req, coap::kBadRequest);
    }
  }
}

std::optional<Bytes> DeviceExecutor::handle_coap(std::span<const std::uint8_t> datagram) {
  coap::Message req;
  try {
    req = coap::decode(datagram);
  } catch (const Error&) {
    coap::Message rst;
    rst.type = coap::MessageType::RST;
    if (datagram.size() >= 4) rst.message_id = static_cast<std::uint16_t>(datagram[2] << 8 | datagram[3]);
    return coap::encode(rst);
  }
  if (req.type == coap::MessageType::ACK || req.type == coap::MessageType::RST) return std::nullopt;
  if (req.code == coap::kEmpty || req.code.cls != 0) {
    coap::Message rst;
    rst.type = coap::MessageType::RST;
    rst.message_id = req.message_id;
    return coap::encode(rst);
  }
  return coap::encode(respond(req));
}

}  // namespace provguard
