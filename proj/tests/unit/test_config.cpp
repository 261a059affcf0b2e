#include <doctest.h>

#include <map>

#include "provguard/config.hpp"
#include "provguard/rules.hpp"

using namespace provguard;
using nlohmann::json;

namespace {

std::optional<ErrorCode> parse_error_of(const json& j) {
  try {
    parse_pipeline_config(j);
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    auto it = vars.find(name);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults") {
  const auto c = parse_pipeline_config(json::object());
  CHECK(c.difficulty == 12);
  CHECK(c.window == 100);
  CHECK(c.group_size == 10);
  CHECK(c.max_snapshot_age_ms == 10'000);
  CHECK(c.max_physical_age_ms == 5'000);
  CHECK_FALSE(c.pending_ttl_ms);
  CHECK(c.min_provenance_count == 1);
  CHECK(c.mining_mode == MiningMode::Auto);
  CHECK(c.coap_transport == CoapTransportKind::InProcess);
  CHECK(c.miners.size() == 3);
  CHECK(c.timing_repeats == 1);
}

TEST_CASE("example files load") {
  const std::string dir = std::string(PROVGUARD_SOURCE_DIR) + "/config/";
  auto c = load_pipeline_config(dir + "gateway.example.json");
  CHECK(c.devices.size() == 2);
  CHECK(c.devices[0].seed == 1001);
  CHECK(c.bootstrap_templates.size() == 2);
  CHECK(c.coap_transport == CoapTransportKind::Udp);
  // Tokens come from the environment.
  CHECK_THROWS_AS(validate(c), Error);
  apply_env_overrides(c, env_of({{"PROVGUARD_TOKEN_OPERATOR", "a"},
                                 {"PROVGUARD_TOKEN_AUDITOR", "b"},
                                 {"PROVGUARD_TOKEN_VIEWER", "c"},
                                 {"PROVGUARD_HTTP_PORT", "9090"}}));
  CHECK(c.principals[1].bearer_token == "b");
  CHECK(c.http_port == 9090);

  const auto catalog = load_rule_catalog(dir + "catalog.example.json");
  CHECK(to_json(catalog) == to_json(load_rule_catalog()));
  CHECK_THROWS_AS(load_pipeline_config(dir + "missing.json"), Error);
}

TEST_CASE("full round-trip through JSON") {
  const json j = {
      {"difficulty", 8},
      {"window", 50},
      {"group_size", 5},
      {"pending_ttl_ms", 60000},
      {"disabled_rules", {"delayed-streaming"}},
      {"principals", {{{"id", "op"}, {"token", "t1"}, {"can_update_icontracts", true}}}},
      {"devices", {{{"id", "s1"}, {"unit", "fahrenheit"}, {"seed", 7}, {"initial_celsius", 18.5}, {"protocols", {"coap"}}}}},
      {"mining_mode", "manual"},
      {"bootstrap_templates", {{{"device_id", "s1"}, {"kind", "ConfigUpdate"}, {"param_keys", {"unit", "rate", "unit"}}}}},
      {"timing_repeats", 3},
  };
  const auto c = parse_pipeline_config(j);
  CHECK(c.pending_ttl_ms == 60000);
  CHECK(c.devices[0].unit == TemperatureUnit::Fahrenheit);
  CHECK(c.devices[0].initial_celsius == 18.5);
  CHECK(c.bootstrap_templates[0].param_keys == std::vector<std::string>{"rate", "unit"});
  const json out = to_json(c);
  CHECK_FALSE(out["principals"][0].contains("token"));
  CHECK(out.dump().find("t1") == std::string::npos);
  auto back = out;
  back["principals"][0]["token"] = "t1";
  CHECK(to_json(parse_pipeline_config(back)) == out);
}

TEST_CASE("schema violations are ConfigParse") {
  const json bad[] = {
      json::array(),
      {{"colour", 1}},
      {{"difficulty", -1}},
      {{"difficulty", 40}},
      {{"difficulty", "12"}},
      {{"window", 0}},
      {{"group_size", 0}},
      {{"max_snapshot_age_ms", 0}},
      {{"pending_ttl_ms", 0}},
      {{"min_provenance_count", 0}},
      {{"miners", json::array()}},
      {{"tick_interval_ms", 0}},
      {{"timing_repeats", 0}},
      {{"http_port", 70000}},
      {{"mining_mode", "sometimes"}},
      {{"coap_transport", "tcp"}},
      {{"principals", {{{"id", "a"}, {"token", "x"}}, {{"id", "a"}, {"token", "y"}}}}},
      {{"principals", {{{"id", "a"}, {"token", "x"}}, {{"id", "b"}, {"token", "x"}}}}},
      {{"principals", {{{"id", ""}, {"token", "x"}}}}},
      {{"principals", {{{"id", "a"}, {"secret", "x"}}}}},
      {{"devices", {{{"id", "s"}}, {{"id", "s"}}}}},
      {{"devices", {{{"id", "s"}, {"unit", "kelvin"}}}}},
      {{"bootstrap_templates", {{{"device_id", "s"}, {"kind", "Teleport"}}}}},
  };
  for (const auto& b : bad) {
    CAPTURE(b.dump());
    CHECK(parse_error_of(b) == ErrorCode::ConfigParse);
  }
}

TEST_CASE("environment overrides") {
  CHECK(token_env_name("bench-operator") == "PROVGUARD_TOKEN_BENCH_OPERATOR");
  CHECK(token_env_name("a.b") == "PROVGUARD_TOKEN_A_B");

  auto c = parse_pipeline_config({{"principals", {{{"id", "op"}, {"token", "file-token"}}}}});
  apply_env_overrides(c, env_of({}));
  CHECK(c.principals[0].bearer_token == "file-token");
  apply_env_overrides(c, env_of({{"PROVGUARD_TOKEN_OP", "env-token"}, {"PROVGUARD_COAP_PORT", "5684"}}));
  CHECK(c.principals[0].bearer_token == "env-token");
  CHECK(c.coap_port == 5684);
  for (const char* bad : {"", "-1", "65536", "80x"})
    CHECK_THROWS_AS(apply_env_overrides(c, env_of({{"PROVGUARD_HTTP_PORT", bad}})), Error);
}

}  // TEST_SUITE
