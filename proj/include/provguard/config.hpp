#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "provguard/context.hpp"
#include "provguard/device.hpp"
#include "provguard/verifier.hpp"

namespace provguard {

enum class MiningMode { Auto, Manual };
enum class CoapTransportKind { InProcess, Udp };

std::string_view to_string(MiningMode m);
std::string_view to_string(CoapTransportKind k);

/// Gateway configuration. The JSON form uses the same field names; unknown
/// keys are rejected. See config/gateway.example.json.
struct PipelineConfig {
  std::uint32_t difficulty = 12;
  std::size_t window = 100;
  std::size_t group_size = 10;
  Millis max_snapshot_age_ms = 10'000;
  Millis max_physical_age_ms = 5'000;
  std::optional<Millis> pending_ttl_ms;  // absent: pending entries never expire
  std::size_t min_provenance_count = 1;
  std::string catalog_path;  // empty: built-in catalog
  std::vector<std::string> disabled_rules;
  std::vector<TrustedPrincipal> principals;
  std::vector<DeviceSpec> devices;
  std::uint16_t http_port = 8080;
  std::uint16_t coap_port = 0;  // 0: ephemeral when coap_transport is udp
  CoapTransportKind coap_transport = CoapTransportKind::InProcess;
  MiningMode mining_mode = MiningMode::Auto;
  Millis tick_interval_ms = 100;
  std::uint64_t seed = 1;
  std::vector<std::string> miners{"miner-a", "miner-b", "miner-c"};
  std::vector<TemplateDescriptor> bootstrap_templates;
  /// Each evaluation is timed this many times and the fastest run kept.
  /// Verdicts are identical across repeats.
  int timing_repeats = 1;
  std::string static_dir;  // optional console bundle served at /
};

/// Throws ConfigParse.
PipelineConfig parse_pipeline_config(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::string& path);
nlohmann::json to_json(const PipelineConfig& c);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// PROVGUARD_HTTP_PORT, PROVGUARD_COAP_PORT and PROVGUARD_TOKEN_<ID> where
/// <ID> is the principal id upper-cased with non-alphanumerics as '_'.
/// Re-validates afterwards, so a principal may leave its token to the
/// environment.
void apply_env_overrides(PipelineConfig& c, const EnvLookup& env);

/// Startup validation. Throws ConfigParse.
void validate(const PipelineConfig& c);

std::string token_env_name(const std::string& principal_id);

}  // namespace provguard
