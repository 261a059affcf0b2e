#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "provguard/gateway.hpp"

namespace provguard::bench {

struct BenchScenario {
  Millis delay_ms = 50;
  std::size_t n_transactions = 100;
  std::size_t group_size = 10;
  std::uint64_t seed = 1;
  std::size_t devices = 1;
  int timing_repeats = 5;
  std::uint32_t difficulty = 12;
};

enum class Metric { FactoryBuildMs, EvaluatorReadUs, EvaluatorAnalysisUs, DetectionToHoldMs };
std::string_view to_string(Metric m);
std::optional<Metric> parse_metric(std::string_view s);

/// Every value is in microseconds regardless of the metric's name.
struct BenchRecord {
  Millis scenario_delay_ms = 0;
  Metric metric = Metric::EvaluatorReadUs;
  std::size_t index = 0;  // group index for factory_build_ms, stream position otherwise
  double value_us = 0;
};

inline constexpr std::string_view kOperatorId = "bench-operator";
inline constexpr std::string_view kOperatorToken = "bench-operator-token";
inline constexpr std::string_view kAuditorId = "bench-auditor";
inline constexpr std::string_view kAuditorToken = "bench-auditor-token";

/// Manual mining, devices sensor-1..sensor-N, the Read template of every
/// device seeded as legitimate, and two principals allowed to update
/// iContracts.
PipelineConfig bench_config(const BenchScenario& s);

struct StreamEntry {
  std::string tx_id;
  TxKind kind = TxKind::Read;
  Outcome outcome = Outcome::Approved;
  std::vector<std::string> reasons;
};

/// A finished run. The gateway stays alive so callers can keep driving it,
/// e.g. approve the held config-update over HTTP.
struct BenchRun {
  BenchScenario scenario;
  std::size_t injection_index = 0;
  std::string injected_tx_id;
  std::string pending_id;
  std::vector<StreamEntry> stream;  // submission order
  std::vector<BenchRecord> records;
  double wall_seconds = 0;
  std::unique_ptr<SystemClock> clock;
  std::unique_ptr<Gateway> gateway;
};

/// Submits n reads paced `delay_ms` apart on a monotonic schedule, with one
/// ConfigUpdate inserted at a seeded uniform position in [0, n]. A pipeline
/// tick runs after every `group_size` reads. Throws ScenarioAssertionFailed
/// unless exactly the injected transaction is flagged (unseen-template),
/// held and not executed, and every read is executed.
BenchRun run_scenario(const BenchScenario& s);

std::vector<BenchRecord> run_bench(const BenchScenario& s);

/// Injection position for a seed, as run_scenario draws it.
std::size_t injection_position(std::uint64_t seed, std::size_t n_transactions);

void write_csv(std::ostream& out, const std::vector<BenchRecord>& records);
void write_csv_file(const std::string& path, const std::vector<BenchRecord>& records);

struct SummaryRow {
  Millis scenario_delay_ms = 0;
  Metric metric = Metric::EvaluatorReadUs;
  std::size_t count = 0;
  double mean_us = 0;
  double p95_us = 0;  // nearest-rank
  std::string published_reference;
};

struct Summary {
  std::vector<SummaryRow> rows;  // ordered by delay, then metric
  std::map<Millis, std::size_t> detection_index;
  std::map<Millis, double> detection_to_hold_ms;
};

/// Throws EmptyRecords.
Summary summarize(const std::vector<BenchRecord>& records);
void write_summary_csv(std::ostream& out, const Summary& s);
void print_summary(std::ostream& out, const Summary& s);

}  // namespace provguard::bench
