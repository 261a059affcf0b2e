// provguard: gateway server, thin HTTP client commands and the bench runner.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "provguard/bench.hpp"
#include "provguard/http_api.hpp"

using namespace provguard;
using nlohmann::json;

namespace {

HttpApi* g_api = nullptr;

void on_signal(int) {
  if (g_api) g_api->stop();
}

struct Endpoint {
  std::string url = "http://127.0.0.1:8080";
};

// Prints the JSON body; non-2xx answers go to stderr and exit 1.
int call(const Endpoint& ep, const std::string& method, const std::string& path, const json& body = nullptr,
         const std::string& token = {}) {
  httplib::Client cli(ep.url);
  cli.set_connection_timeout(5);
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
  httplib::Result res = method == "GET" ? cli.Get(path, headers)
                                        : cli.Post(path, headers, body.is_null() ? "" : body.dump(), "application/json");
  if (!res) {
    std::cerr << "request failed: " << httplib::to_string(res.error()) << " (" << ep.url << ")\n";
    return 2;
  }
  json parsed = json::parse(res->body, nullptr, false);
  const std::string text = parsed.is_discarded() ? res->body : parsed.dump(2);
  (res->status / 100 == 2 ? std::cout : std::cerr) << text << '\n';
  return res->status / 100 == 2 ? 0 : 1;
}

std::vector<Millis> parse_delays(const std::string& s) {
  std::vector<Millis> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(std::stoll(part));
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no delays given");
  return out;
}

int run_bench_command(const std::string& delays, std::uint64_t seed, const std::string& out_dir, std::size_t devices,
                      int repeats) {
  std::filesystem::create_directories(out_dir);
  std::vector<bench::BenchRecord> all;
  for (Millis d : parse_delays(delays)) {
    bench::BenchScenario s;
    s.delay_ms = d;
    s.seed = seed;
    s.devices = devices;
    s.timing_repeats = repeats;
    std::cerr << fmt::format("delay {} ms: injecting config-update at position {}\n", d,
                             bench::injection_position(seed, s.n_transactions));
    auto run = bench::run_scenario(s);
    const auto path = fmt::format("{}/bench_delay_{}ms.csv", out_dir, d);
    bench::write_csv_file(path, run.records);
    std::cerr << fmt::format("  {:.1f} s, {} rows -> {}\n", run.wall_seconds, run.records.size(), path);
    all.insert(all.end(), run.records.begin(), run.records.end());
  }
  const auto summary = bench::summarize(all);
  std::ofstream csv(out_dir + "/summary.csv");
  bench::write_summary_csv(csv, summary);
  bench::print_summary(std::cout, summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"provguard: provenance-checked IoT transaction gateway"};
  app.require_subcommand(1);
  Endpoint ep;
  if (const char* env = std::getenv("PROVGUARD_URL")) ep.url = env;

  auto* serve = app.add_subcommand("serve", "run the gateway");
  std::string config_path;
  std::string host = "127.0.0.1";
  serve->add_option("-c,--config", config_path, "gateway config JSON")->required();
  serve->add_option("--host", host, "bind address");

  auto with_url = [&](CLI::App* sub) { sub->add_option("--url", ep.url, "gateway base URL (or PROVGUARD_URL)"); };

  auto* submit = app.add_subcommand("submit", "submit a transaction");
  with_url(submit);
  std::string device, kind = "Read", issuer = "operator", tx_id;
  std::vector<std::string> params;
  submit->add_option("-d,--device", device, "target device id")->required();
  submit->add_option("-k,--kind", kind, "Read|ConfigUpdate|FirmwareUpdate|ActuatorCommand");
  submit->add_option("-p,--param", params, "key=value, repeatable");
  submit->add_option("--issuer", issuer, "issuing principal");
  submit->add_option("--tx-id", tx_id, "explicit transaction id");

  auto* mine = app.add_subcommand("mine", "mine queued transactions (manual mode)");
  with_url(mine);

  auto* pending = app.add_subcommand("pending", "list pending verifications");
  with_url(pending);
  std::string state;
  pending->add_option("--state", state, "awaiting|decided|expired");

  auto* decide = app.add_subcommand("decide", "approve or revoke a pending transaction");
  with_url(decide);
  std::string pending_id, decision, token;
  decide->add_option("pending_id", pending_id)->required();
  decide->add_option("decision", decision, "approve|revoke")->required()->check(CLI::IsMember({"approve", "revoke"}));
  decide->add_option("-t,--token", token, "bearer token")->envname("PROVGUARD_TOKEN");

  auto* validate_chain = app.add_subcommand("validate-chain", "validate the gateway's chain");
  with_url(validate_chain);

  auto* bench_cmd = app.add_subcommand("bench", "run the evaluation scenarios in-process");
  std::string delays = "50,100,200", out_dir = "bench_out";
  std::uint64_t seed = 1;
  std::size_t devices = 1;
  int repeats = 5;
  bench_cmd->add_option("--delays", delays, "comma-separated request delays in ms");
  bench_cmd->add_option("--seed", seed, "scenario seed");
  bench_cmd->add_option("--out", out_dir, "output directory");
  bench_cmd->add_option("--devices", devices, "number of emulated sensors");
  bench_cmd->add_option("--repeats", repeats, "timing repeats per evaluation (fastest kept)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      auto config = load_pipeline_config(config_path);
      apply_env_overrides(config, process_env());
      SystemClock clock;
      Gateway gw(config, clock, EventLog::stderr_sink());
      HttpApi api(gw);
      g_api = &api;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      gw.start();
      gw.log().emit("listening", {{"host", host}, {"port", config.http_port}, {"mining_mode", to_string(config.mining_mode)}});
      api.listen(host, config.http_port);
      gw.stop();
      return 0;
    }
    if (*submit) {
      json body = {{"device_id", device}, {"kind", kind}, {"issuer", issuer}, {"params", json::object()}};
      if (!tx_id.empty()) body["tx_id"] = tx_id;
      for (const auto& p : params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "param must be key=value: " + p);
        body["params"][p.substr(0, eq)] = p.substr(eq + 1);
      }
      return call(ep, "POST", "/transactions", body);
    }
    if (*mine) return call(ep, "POST", "/mine");
    if (*pending) return call(ep, "GET", state.empty() ? "/pending" : "/pending?state=" + state);
    if (*decide) return call(ep, "POST", "/pending/" + pending_id + "/decision", {{"decision", decision}}, token);
    if (*validate_chain) return call(ep, "GET", "/chain/validate");
    if (*bench_cmd) return run_bench_command(delays, seed, out_dir, devices, repeats);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
