#include "provguard/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>

namespace provguard {

using nlohmann::json;

std::string_view to_string(MiningMode m) { return m == MiningMode::Auto ? "auto" : "manual"; }
std::string_view to_string(CoapTransportKind k) { return k == CoapTransportKind::InProcess ? "inprocess" : "udp"; }

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::ConfigParse, what); }

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) fail("unknown key '" + key + "' in " + where);
}

template <typename T>
T get_unsigned(const json& v, const char* key, T max = std::numeric_limits<T>::max()) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    fail(std::string(key) + " must be a non-negative integer");
  const auto n = v.get<std::uint64_t>();
  if (n > static_cast<std::uint64_t>(max)) fail(std::string(key) + " is out of range");
  return static_cast<T>(n);
}

std::string get_string(const json& v, const char* key) {
  if (!v.is_string()) fail(std::string(key) + " must be a string");
  return v.get<std::string>();
}

std::vector<std::string> get_strings(const json& v, const char* key) {
  if (!v.is_array()) fail(std::string(key) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& s : v) out.push_back(get_string(s, key));
  return out;
}

TrustedPrincipal parse_principal(const json& j) {
  if (!j.is_object()) fail("principal must be an object");
  reject_unknown_keys(j, {"id", "token", "can_update_icontracts"}, "principal");
  TrustedPrincipal p;
  if (!j.contains("id")) fail("principal needs an id");
  p.principal_id = get_string(j["id"], "id");
  if (j.contains("token")) p.bearer_token = get_string(j["token"], "token");
  if (j.contains("can_update_icontracts")) {
    if (!j["can_update_icontracts"].is_boolean()) fail("can_update_icontracts must be a boolean");
    p.can_update_icontracts = j["can_update_icontracts"].get<bool>();
  }
  return p;
}

DeviceSpec parse_device(const json& j) {
  if (!j.is_object()) fail("device must be an object");
  reject_unknown_keys(j, {"id", "unit", "seed", "initial_celsius", "protocols"}, "device");
  DeviceSpec d;
  if (!j.contains("id")) fail("device needs an id");
  d.device_id = get_string(j["id"], "id");
  if (j.contains("unit")) {
    auto u = parse_unit(get_string(j["unit"], "unit"));
    if (!u) fail("unit must be celsius or fahrenheit");
    d.unit = *u;
  }
  if (j.contains("seed")) d.seed = get_unsigned<std::uint64_t>(j["seed"], "seed");
  if (j.contains("initial_celsius")) {
    if (!j["initial_celsius"].is_number()) fail("initial_celsius must be a number");
    d.initial_celsius = j["initial_celsius"].get<double>();
  }
  if (j.contains("protocols")) {
    auto list = get_strings(j["protocols"], "protocols");
    d.protocols = std::set<std::string>(list.begin(), list.end());
  }
  return d;
}

TemplateDescriptor parse_template(const json& j) {
  if (!j.is_object()) fail("bootstrap template must be an object");
  reject_unknown_keys(j, {"device_id", "kind", "param_keys"}, "bootstrap template");
  TemplateDescriptor t;
  if (!j.contains("device_id") || !j.contains("kind")) fail("bootstrap template needs device_id and kind");
  t.device_id = get_string(j["device_id"], "device_id");
  auto kind = parse_kind(get_string(j["kind"], "kind"));
  if (!kind) fail("unknown kind in bootstrap template");
  t.kind = *kind;
  if (j.contains("param_keys")) t.param_keys = get_strings(j["param_keys"], "param_keys");
  std::sort(t.param_keys.begin(), t.param_keys.end());
  t.param_keys.erase(std::unique(t.param_keys.begin(), t.param_keys.end()), t.param_keys.end());
  return t;
}

}  // namespace

void validate(const PipelineConfig& c) {
  if (c.difficulty > 32) fail("difficulty above 32 bits would not mine in reasonable time");
  if (c.window == 0 || c.group_size == 0) fail("window and group_size must be positive");
  if (c.max_snapshot_age_ms <= 0 || c.max_physical_age_ms <= 0) fail("age bounds must be positive");
  if (c.pending_ttl_ms && *c.pending_ttl_ms <= 0) fail("pending_ttl_ms must be positive");
  if (c.min_provenance_count == 0) fail("min_provenance_count must be at least 1");
  if (c.miners.empty()) fail("at least one miner identity is required");
  if (c.tick_interval_ms <= 0) fail("tick_interval_ms must be positive");
  if (c.timing_repeats < 1) fail("timing_repeats must be at least 1");

  std::set<std::string> ids, tokens;
  for (const auto& p : c.principals) {
    if (p.principal_id.empty()) fail("principal id must not be empty");
    if (!ids.insert(p.principal_id).second) fail("duplicate principal " + p.principal_id);
    if (p.bearer_token.empty())
      fail("principal " + p.principal_id + " has no token; set it in the config or " + token_env_name(p.principal_id));
    if (!tokens.insert(p.bearer_token).second) fail("bearer tokens must be unique");
  }
  std::set<std::string> devices;
  for (const auto& d : c.devices) {
    if (d.device_id.empty()) fail("device id must not be empty");
    if (!devices.insert(d.device_id).second) fail("duplicate device " + d.device_id);
  }
}

PipelineConfig parse_pipeline_config(const json& j) {
  if (!j.is_object()) fail("config must be an object");
  reject_unknown_keys(j,
                      {"difficulty", "window", "group_size", "max_snapshot_age_ms", "max_physical_age_ms", "pending_ttl_ms",
                       "min_provenance_count", "catalog_path", "disabled_rules", "principals", "devices", "http_port",
                       "coap_port", "coap_transport", "mining_mode", "tick_interval_ms", "seed", "miners",
                       "bootstrap_templates", "timing_repeats", "static_dir"},
                      "config");
  PipelineConfig c;
  try {
    if (j.contains("difficulty")) c.difficulty = get_unsigned<std::uint32_t>(j["difficulty"], "difficulty");
    if (j.contains("window")) c.window = get_unsigned<std::size_t>(j["window"], "window");
    if (j.contains("group_size")) c.group_size = get_unsigned<std::size_t>(j["group_size"], "group_size");
    if (j.contains("max_snapshot_age_ms")) c.max_snapshot_age_ms = get_unsigned<Millis>(j["max_snapshot_age_ms"], "max_snapshot_age_ms");
    if (j.contains("max_physical_age_ms")) c.max_physical_age_ms = get_unsigned<Millis>(j["max_physical_age_ms"], "max_physical_age_ms");
    if (j.contains("pending_ttl_ms") && !j["pending_ttl_ms"].is_null())
      c.pending_ttl_ms = get_unsigned<Millis>(j["pending_ttl_ms"], "pending_ttl_ms");
    if (j.contains("min_provenance_count"))
      c.min_provenance_count = get_unsigned<std::size_t>(j["min_provenance_count"], "min_provenance_count");
    if (j.contains("catalog_path")) c.catalog_path = get_string(j["catalog_path"], "catalog_path");
    if (j.contains("disabled_rules")) c.disabled_rules = get_strings(j["disabled_rules"], "disabled_rules");
    if (j.contains("principals")) {
      if (!j["principals"].is_array()) fail("principals must be an array");
      for (const auto& p : j["principals"]) c.principals.push_back(parse_principal(p));
    }
    if (j.contains("devices")) {
      if (!j["devices"].is_array()) fail("devices must be an array");
      for (const auto& d : j["devices"]) c.devices.push_back(parse_device(d));
    }
    if (j.contains("http_port")) c.http_port = get_unsigned<std::uint16_t>(j["http_port"], "http_port");
    if (j.contains("coap_port")) c.coap_port = get_unsigned<std::uint16_t>(j["coap_port"], "coap_port");
    if (j.contains("coap_transport")) {
      const auto t = get_string(j["coap_transport"], "coap_transport");
      if (t == "inprocess") c.coap_transport = CoapTransportKind::InProcess;
      else if (t == "udp") c.coap_transport = CoapTransportKind::Udp;
      else fail("coap_transport must be inprocess or udp");
    }
    if (j.contains("mining_mode")) {
      const auto m = get_string(j["mining_mode"], "mining_mode");
      if (m == "auto") c.mining_mode = MiningMode::Auto;
      else if (m == "manual") c.mining_mode = MiningMode::Manual;
      else fail("mining_mode must be auto or manual");
    }
    if (j.contains("tick_interval_ms")) c.tick_interval_ms = get_unsigned<Millis>(j["tick_interval_ms"], "tick_interval_ms");
    if (j.contains("seed")) c.seed = get_unsigned<std::uint64_t>(j["seed"], "seed");
    if (j.contains("miners")) c.miners = get_strings(j["miners"], "miners");
    if (j.contains("bootstrap_templates")) {
      if (!j["bootstrap_templates"].is_array()) fail("bootstrap_templates must be an array");
      for (const auto& t : j["bootstrap_templates"]) c.bootstrap_templates.push_back(parse_template(t));
    }
    if (j.contains("timing_repeats")) c.timing_repeats = get_unsigned<int>(j["timing_repeats"], "timing_repeats");
    if (j.contains("static_dir")) c.static_dir = get_string(j["static_dir"], "static_dir");
  } catch (const json::exception& e) {
    fail(e.what());
  }
  // Tokens may still arrive from the environment, so only structural checks
  // that do not depend on them run here.
  PipelineConfig probe = c;
  for (auto& p : probe.principals)
    if (p.bearer_token.empty()) p.bearer_token = "\x01" + p.principal_id;
  validate(probe);
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(e.what());
  }
  return parse_pipeline_config(j);
}

json to_json(const PipelineConfig& c) {
  json principals = json::array();
  for (const auto& p : c.principals)
    principals.push_back({{"id", p.principal_id}, {"can_update_icontracts", p.can_update_icontracts}});
  json devices = json::array();
  for (const auto& d : c.devices)
    devices.push_back({{"id", d.device_id}, {"unit", to_string(d.unit)}, {"seed", d.seed},
                       {"initial_celsius", d.initial_celsius}, {"protocols", d.protocols}});
  json templates = json::array();
  for (const auto& t : c.bootstrap_templates)
    templates.push_back({{"device_id", t.device_id}, {"kind", to_string(t.kind)}, {"param_keys", t.param_keys}});
  return {{"difficulty", c.difficulty},
          {"window", c.window},
          {"group_size", c.group_size},
          {"max_snapshot_age_ms", c.max_snapshot_age_ms},
          {"max_physical_age_ms", c.max_physical_age_ms},
          {"pending_ttl_ms", c.pending_ttl_ms ? json(*c.pending_ttl_ms) : json(nullptr)},
          {"min_provenance_count", c.min_provenance_count},
          {"catalog_path", c.catalog_path},
          {"disabled_rules", c.disabled_rules},
          {"principals", principals},  // tokens are never echoed
          {"devices", devices},
          {"http_port", c.http_port},
          {"coap_port", c.coap_port},
          {"coap_transport", to_string(c.coap_transport)},
          {"mining_mode", to_string(c.mining_mode)},
          {"tick_interval_ms", c.tick_interval_ms},
          {"seed", c.seed},
          {"miners", c.miners},
          {"bootstrap_templates", templates},
          {"timing_repeats", c.timing_repeats},
          {"static_dir", c.static_dir}};
}

std::string token_env_name(const std::string& principal_id) {
  std::string name = "PROVGUARD_TOKEN_";
  for (unsigned char ch : principal_id) name += std::isalnum(ch) ? static_cast<char>(std::toupper(ch)) : '_';
  return name;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

void apply_env_overrides(PipelineConfig& c, const EnvLookup& env) {
  auto port = [&](const char* name, std::uint16_t& out) {
    auto v = env(name);
    if (!v) return;
    char* end = nullptr;
    const long n = std::strtol(v->c_str(), &end, 10);
    if (v->empty() || *end != '\0' || n < 0 || n > 65535) fail(std::string(name) + " is not a port number");
    out = static_cast<std::uint16_t>(n);
  };
  port("PROVGUARD_HTTP_PORT", c.http_port);
  port("PROVGUARD_COAP_PORT", c.coap_port);
  for (auto& p : c.principals)
    if (auto t = env(token_env_name(p.principal_id))) p.bearer_token = *t;
  validate(c);
}

}  // namespace provguard
