#include "provguard/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace provguard::bench {

using SteadyClock = std::chrono::steady_clock;

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::FactoryBuildMs: return "factory_build_ms";
    case Metric::EvaluatorReadUs: return "evaluator_read_us";
    case Metric::EvaluatorAnalysisUs: return "evaluator_analysis_us";
    case Metric::DetectionToHoldMs: return "detection_to_hold_ms";
  }
  return "?";
}

std::optional<Metric> parse_metric(std::string_view s) {
  for (auto m : {Metric::FactoryBuildMs, Metric::EvaluatorReadUs, Metric::EvaluatorAnalysisUs, Metric::DetectionToHoldMs})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

PipelineConfig bench_config(const BenchScenario& s) {
  PipelineConfig c;
  c.difficulty = s.difficulty;
  c.group_size = s.group_size;
  c.window = s.n_transactions;
  c.mining_mode = MiningMode::Manual;
  c.seed = s.seed;
  c.timing_repeats = s.timing_repeats;
  c.principals = {TrustedPrincipal{std::string(kOperatorId), std::string(kOperatorToken), true},
                  TrustedPrincipal{std::string(kAuditorId), std::string(kAuditorToken), true}};
  for (std::size_t i = 0; i < std::max<std::size_t>(s.devices, 1); ++i) {
    DeviceSpec d;
    d.device_id = fmt::format("sensor-{}", i + 1);
    d.seed = s.seed * 1000 + i;
    c.devices.push_back(d);
    c.bootstrap_templates.push_back(TemplateDescriptor{d.device_id, TxKind::Read, {}});
  }
  return c;
}

std::size_t injection_position(std::uint64_t seed, std::size_t n_transactions) {
  // Plain modulo rather than uniform_int_distribution, whose algorithm
  // differs between standard libraries.
  std::mt19937_64 rng(seed);
  return static_cast<std::size_t>(rng() % (n_transactions + 1));
}

namespace {

[[noreturn]] void scenario_failed(const BenchScenario& s, const std::string& what) {
  throw Error(ErrorCode::ScenarioAssertionFailed, fmt::format("delay {} ms, seed {}: {}", s.delay_ms, s.seed, what));
}

double ms_to_us(double ms) { return ms * 1000.0; }

}  // namespace

BenchRun run_scenario(const BenchScenario& s) {
  if (s.n_transactions == 0 || s.group_size == 0) throw Error(ErrorCode::InvalidArgument, "empty scenario");

  BenchRun run;
  run.scenario = s;
  run.injection_index = injection_position(s.seed, s.n_transactions);
  run.clock = std::make_unique<SystemClock>();

  // The hold moment is taken from the gateway's own event stream.
  auto held_at = std::make_shared<std::optional<SteadyClock::time_point>>();
  auto injected_id = std::make_shared<std::string>();
  auto sink = [held_at, injected_id](const std::string& line) {
    if (held_at->has_value() || line.find("\"event\":\"held\"") == std::string::npos) return;
    if (!injected_id->empty() && line.find("\"tx_id\":\"" + *injected_id + "\"") != std::string::npos)
      *held_at = SteadyClock::now();
  };
  run.gateway = std::make_unique<Gateway>(bench_config(s), *run.clock, sink);
  Gateway& gw = *run.gateway;
  const auto devices = gw.config().devices;

  std::map<std::string, std::size_t> position_of;
  std::size_t group = 0;
  auto tick = [&] {
    const auto report = gw.run_pipeline_tick();
    if (!report.errors.empty()) scenario_failed(s, "pipeline error: " + report.errors.front());
    run.records.push_back(BenchRecord{s.delay_ms, Metric::FactoryBuildMs, group++, ms_to_us(report.factory_build_ms)});
    for (const auto& e : report.evaluations) {
      const auto pos = position_of.at(e.tx_id);
      run.stream[pos].outcome = e.outcome;
      run.stream[pos].reasons = e.reasons;
      run.records.push_back(BenchRecord{s.delay_ms, Metric::EvaluatorReadUs, pos, e.evaluator_read_us});
      run.records.push_back(BenchRecord{s.delay_ms, Metric::EvaluatorAnalysisUs, pos, e.evaluator_analysis_us});
    }
  };

  const std::size_t total = s.n_transactions + 1;
  std::size_t reads = 0;
  SteadyClock::time_point injected_at{};
  const auto start = SteadyClock::now();
  for (std::size_t pos = 0; pos < total; ++pos) {
    std::this_thread::sleep_until(start + std::chrono::milliseconds(s.delay_ms) * pos);
    Transaction tx;
    tx.issuer = "operator";
    if (pos == run.injection_index) {
      tx.device_id = devices.front().device_id;
      tx.kind = TxKind::ConfigUpdate;
      tx.params = {{"unit", "fahrenheit"}};
      tx.tx_id = fmt::format("cfg-{:03}", pos);
      *injected_id = tx.tx_id;
      injected_at = SteadyClock::now();
    } else {
      tx.device_id = devices[reads % devices.size()].device_id;
      tx.kind = TxKind::Read;
      tx.tx_id = fmt::format("read-{:03}", pos);
      ++reads;
    }
    const auto id = gw.submit(tx);
    position_of[id] = pos;
    run.stream.push_back(StreamEntry{id, tx.kind, Outcome::Approved, {}});

    // A group closes after every group_size reads; an injection sitting
    // right behind it joins that group and closes it instead.
    const bool group_full = reads > 0 && reads % s.group_size == 0 && (tx.kind == TxKind::Read || pos == run.injection_index);
    const bool injection_next = pos + 1 == run.injection_index;
    if ((group_full && !injection_next) || pos + 1 == total) {
      if (gw.ledger().pending_count() > 0) tick();
    }
  }
  run.wall_seconds = std::chrono::duration<double>(SteadyClock::now() - start).count();
  run.injected_tx_id = *injected_id;

  // Scenario assertions: exactly the injection is flagged, it is held, and
  // every read went through.
  for (const auto& e : run.stream) {
    const bool injected = e.tx_id == run.injected_tx_id;
    if (injected != (e.outcome == Outcome::Suspicious))
      scenario_failed(s, fmt::format("{} evaluated {}", e.tx_id, to_string(e.outcome)));
    const auto status = gw.ledger().status_of(e.tx_id);
    if (!injected && status != TxStatus::Executed) scenario_failed(s, e.tx_id + " was not executed");
    if (injected) {
      if (std::find(e.reasons.begin(), e.reasons.end(), kReasonUnseenTemplate) == e.reasons.end())
        scenario_failed(s, "injected config-update not flagged as unseen-template");
      if (status != TxStatus::Suspicious) scenario_failed(s, "injected config-update is not held");
    }
  }
  const auto pending = gw.verifier().find_by_tx(run.injected_tx_id);
  if (!pending || pending->state() != PendingState::Awaiting) scenario_failed(s, "no pending verification for injection");
  if (gw.metrics().stage_of(run.injected_tx_id, Stage::Executed)) scenario_failed(s, "injected config-update executed");
  if (!held_at->has_value()) scenario_failed(s, "hold event not observed");
  run.pending_id = pending->pending_id;
  run.records.push_back(BenchRecord{s.delay_ms, Metric::DetectionToHoldMs, run.injection_index,
                                    std::chrono::duration<double, std::micro>(**held_at - injected_at).count()});
  return run;
}

std::vector<BenchRecord> run_bench(const BenchScenario& s) { return run_scenario(s).records; }

void write_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
  out << "scenario_delay_ms,metric,index,value_us\n";
  for (const auto& r : records) fmt::print(out, "{},{},{},{:.3f}\n", r.scenario_delay_ms, to_string(r.metric), r.index, r.value_us);
}

void write_csv_file(const std::string& path, const std::vector<BenchRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
  write_csv(out, records);
}

namespace {

std::string_view published_reference(Metric m) {
  switch (m) {
    case Metric::FactoryBuildMs: return "around 2 s per build";
    case Metric::EvaluatorReadUs: return "0.33 ms per input";
    case Metric::EvaluatorAnalysisUs: return "under 1 s per input";
    case Metric::DetectionToHoldMs: return "not reported";
  }
  return "";
}

double nearest_rank(std::vector<double> values, std::size_t pct) {
  std::sort(values.begin(), values.end());
  // ceil(pct * n / 100) in integers; 0.95 * n in doubles can land just above n.
  const std::size_t rank = (pct * values.size() + 99) / 100;
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

}  // namespace

Summary summarize(const std::vector<BenchRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::EmptyRecords, "nothing to summarize");
  std::map<std::pair<Millis, Metric>, std::vector<double>> grouped;
  Summary s;
  for (const auto& r : records) {
    grouped[{r.scenario_delay_ms, r.metric}].push_back(r.value_us);
    if (r.metric == Metric::DetectionToHoldMs) {
      s.detection_index[r.scenario_delay_ms] = r.index;
      s.detection_to_hold_ms[r.scenario_delay_ms] = r.value_us / 1000.0;
    }
  }
  for (const auto& [key, values] : grouped) {
    double sum = 0;
    for (double v : values) sum += v;
    s.rows.push_back(SummaryRow{key.first, key.second, values.size(), sum / static_cast<double>(values.size()),
                                nearest_rank(values, 95), std::string(published_reference(key.second))});
  }
  return s;
}

void write_summary_csv(std::ostream& out, const Summary& s) {
  out << "scenario_delay_ms,metric,count,mean_us,p95_us,detection_index,published_reference\n";
  for (const auto& r : s.rows) {
    auto it = s.detection_index.find(r.scenario_delay_ms);
    const std::string det = it == s.detection_index.end() ? "" : std::to_string(it->second);
    fmt::print(out, "{},{},{},{:.3f},{:.3f},{},\"{}\"\n", r.scenario_delay_ms, to_string(r.metric), r.count, r.mean_us,
               r.p95_us, det, r.published_reference);
  }
}

void print_summary(std::ostream& out, const Summary& s) {
  fmt::print(out, "{:>8}  {:<22} {:>6} {:>12} {:>12}  {}\n", "delay", "metric", "n", "mean_us", "p95_us", "published");
  for (const auto& r : s.rows)
    fmt::print(out, "{:>6}ms  {:<22} {:>6} {:>12.3f} {:>12.3f}  {}\n", r.scenario_delay_ms, to_string(r.metric), r.count,
               r.mean_us, r.p95_us, r.published_reference);
  for (const auto& [delay, idx] : s.detection_index)
    fmt::print(out, "delay {} ms: config-update at position {}, held after {:.1f} ms\n", delay, idx,
               s.detection_to_hold_ms.at(delay));
}

}  // namespace provguard::bench
