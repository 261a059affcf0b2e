#pragma once

#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "provguard/coap_transport.hpp"
#include "provguard/config.hpp"
#include "provguard/context.hpp"
#include "provguard/device.hpp"
#include "provguard/evaluator.hpp"
#include "provguard/ledger.hpp"
#include "provguard/verifier.hpp"

namespace provguard {

/// One JSON object per line: {"ts":..., "event":..., ...fields}.
class EventLog {
 public:
  using Sink = std::function<void(const std::string&)>;
  explicit EventLog(const Clock& clock, Sink sink = {}) : clock_(clock), sink_(std::move(sink)) {}
  void emit(std::string_view event, nlohmann::json fields = nlohmann::json::object());
  static Sink stderr_sink();

 private:
  const Clock& clock_;
  Sink sink_;
  std::mutex mu_;
};

enum class Stage { Submitted, Mined, Evaluated, Routed, Decided, Executed };
std::string_view to_string(Stage s);

struct StageMark {
  Millis at = 0;
  std::uint64_t seq = 0;  // global order of marks, finer than `at`
};

struct EvaluationRecord {
  std::string tx_id;
  Outcome outcome = Outcome::Approved;
  std::vector<std::string> reasons;
  std::size_t inputs = 0;
  double evaluator_read_us = 0;  // mean per contextual input
  double evaluator_analysis_us = 0;
};

struct PipelineReport {
  std::size_t mined = 0;
  std::size_t approved = 0;
  std::size_t suspicious = 0;
  std::size_t executed = 0;
  std::optional<std::uint64_t> block_index;
  std::string block_hash;
  double factory_build_ms = 0;
  double mining_ms = 0;
  std::vector<EvaluationRecord> evaluations;
  std::vector<std::string> errors;  // per-transaction failures, the tick continues
  std::vector<std::string> expired;  // pending ids expired at tick start
};

nlohmann::json to_json(const PipelineReport& r);

/// Stage timestamps per transaction plus the most recent tick reports.
class Metrics {
 public:
  static constexpr std::size_t kMaxTicks = 1000;

  void mark(const std::string& tx_id, Stage stage, Millis at);
  std::optional<StageMark> stage_of(const std::string& tx_id, Stage stage) const;
  void record_tick(const PipelineReport& report);
  void count(std::string_view counter, std::uint64_t n = 1);
  nlohmann::json to_json() const;

 private:
  mutable std::mutex mu_;
  std::uint64_t seq_ = 0;
  std::map<std::string, std::map<Stage, StageMark>> stages_;
  std::vector<nlohmann::json> ticks_;
  std::map<std::string, std::uint64_t, std::less<>> counters_;
};

/// Wires ledger, context factory, evaluator, verifier and executor into one
/// pipeline. Ticks are exclusive; everything else may run concurrently.
class Gateway {
 public:
  Gateway(PipelineConfig config, const Clock& clock, EventLog::Sink log_sink = {});
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Starts the background tick loop in auto mining mode. No-op otherwise.
  void start();
  void stop();

  /// Fills tx_id ("tx-<n>") and submitted_at when empty.
  std::string submit(Transaction tx);

  /// Expires overdue pending entries, mines every queued transaction into
  /// one block, rebuilds context, then evaluates, routes and (for
  /// approvals) executes each newly mined transaction.
  PipelineReport run_pipeline_tick();

  /// Manual-mode tick. Throws MiningModeAuto in auto mode and EmptyPool
  /// when nothing is queued.
  PipelineReport mine_now();

  /// Fresh snapshot. Does not poll sensors, so it never changes state.
  ContextSnapshot current_context() const;

  DecisionOutcome decide(const std::string& pending_id, std::string_view token, Decision decision);

  const PipelineConfig& config() const { return config_; }
  const Clock& clock() const { return clock_; }
  Ledger& ledger() { return ledger_; }
  const Ledger& ledger() const { return ledger_; }
  Verifier& verifier() { return *verifier_; }
  const Verifier& verifier() const { return *verifier_; }
  Evaluator& evaluator() { return evaluator_; }
  const Evaluator& evaluator() const { return evaluator_; }
  DeviceExecutor& executor() { return executor_; }
  const DeviceExecutor& executor() const { return executor_; }
  SensorFeed& feed() { return feed_; }
  const Metrics& metrics() const { return metrics_; }
  EventLog& log() { return log_; }
  std::optional<std::uint16_t> coap_port() const;

 private:
  Verdict timed_evaluate(const Transaction& tx, const ContextSnapshot& snapshot, const Catalog& catalog, Millis now) const;
  /// Sends the approved transaction to its device over CoAP.
  bool dispatch(const Transaction& tx);
  void run_policies(PolicyTrigger trigger, const Transaction& tx, const std::vector<std::string>& reasons);
  void loop();

  PipelineConfig config_;
  const Clock& clock_;
  EventLog log_;
  Metrics metrics_;
  Ledger ledger_;
  SensorFeed feed_;
  ContextFactory factory_;
  Evaluator evaluator_;
  DeviceExecutor executor_;
  std::unique_ptr<Verifier> verifier_;

  std::unique_ptr<coap::UdpServer> coap_server_;
  std::unique_ptr<coap::Transport> coap_transport_;
  std::unique_ptr<coap::Client> coap_client_;

  std::mutex tick_mu_;
  std::mutex submit_mu_;
  std::uint64_t next_tx_ = 1;
  std::size_t next_miner_ = 0;

  std::mutex loop_mu_;
  std::condition_variable loop_cv_;
  bool running_ = false;
  std::thread loop_thread_;
};

}  // namespace provguard
