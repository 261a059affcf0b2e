#include "provguard/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <set>

#include <fmt/format.h>

namespace provguard {

using nlohmann::json;

void EventLog::emit(std::string_view event, json fields) {
  if (!sink_) return;
  json line = {{"ts", clock_.now_ms()}, {"event", event}};
  for (auto& [k, v] : fields.items()) line[k] = std::move(v);
  const auto text = line.dump();
  std::lock_guard lock(mu_);
  sink_(text);
}

EventLog::Sink EventLog::stderr_sink() {
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Submitted: return "submitted";
    case Stage::Mined: return "mined";
    case Stage::Evaluated: return "evaluated";
    case Stage::Routed: return "routed";
    case Stage::Decided: return "decided";
    case Stage::Executed: return "executed";
  }
  return "?";
}

json to_json(const PipelineReport& r) {
  json evals = json::array();
  for (const auto& e : r.evaluations)
    evals.push_back({{"tx_id", e.tx_id},
                     {"outcome", to_string(e.outcome)},
                     {"reasons", e.reasons},
                     {"inputs", e.inputs},
                     {"evaluator_read_us", e.evaluator_read_us},
                     {"evaluator_analysis_us", e.evaluator_analysis_us}});
  return {{"mined", r.mined},
          {"approved", r.approved},
          {"suspicious", r.suspicious},
          {"executed", r.executed},
          {"block_index", r.block_index ? json(*r.block_index) : json(nullptr)},
          {"hash", r.block_hash},
          {"factory_build_ms", r.factory_build_ms},
          {"mining_ms", r.mining_ms},
          {"evaluations", evals},
          {"errors", r.errors},
          {"expired", r.expired}};
}

void Metrics::mark(const std::string& tx_id, Stage stage, Millis at) {
  std::lock_guard lock(mu_);
  stages_[tx_id][stage] = StageMark{at, ++seq_};
}

std::optional<StageMark> Metrics::stage_of(const std::string& tx_id, Stage stage) const {
  std::lock_guard lock(mu_);
  auto it = stages_.find(tx_id);
  if (it == stages_.end()) return std::nullopt;
  auto s = it->second.find(stage);
  if (s == it->second.end()) return std::nullopt;
  return s->second;
}

void Metrics::record_tick(const PipelineReport& report) {
  std::lock_guard lock(mu_);
  if (ticks_.size() == kMaxTicks) ticks_.erase(ticks_.begin());
  ticks_.push_back(provguard::to_json(report));
  counters_["ticks"] += 1;
  counters_["mined"] += report.mined;
  counters_["approved"] += report.approved;
  counters_["suspicious"] += report.suspicious;
  counters_["executed"] += report.executed;
}

void Metrics::count(std::string_view counter, std::uint64_t n) {
  std::lock_guard lock(mu_);
  auto it = counters_.find(counter);
  if (it == counters_.end()) counters_.emplace(std::string(counter), n);
  else it->second += n;
}

json Metrics::to_json() const {
  std::lock_guard lock(mu_);
  json stages = json::object();
  for (const auto& [tx, marks] : stages_) {
    json m = json::object();
    for (const auto& [stage, mark] : marks) m[std::string(to_string(stage))] = {{"at_ms", mark.at}, {"seq", mark.seq}};
    stages[tx] = std::move(m);
  }
  json counters = json::object();
  for (const auto& [k, v] : counters_) counters[k] = v;
  return {{"counters", counters}, {"ticks", ticks_}, {"stages", stages}};
}

namespace {

Catalog initial_catalog(const PipelineConfig& c) {
  Catalog catalog = load_rule_catalog(c.catalog_path);
  for (const auto& id : c.disabled_rules) {
    auto it = std::find_if(catalog.rules.begin(), catalog.rules.end(), [&](const Rule& r) { return r.rule_id == id; });
    if (it == catalog.rules.end()) throw Error(ErrorCode::ConfigParse, "disabled_rules names unknown rule " + id);
    it->enabled = false;
  }
  return catalog;
}

double millis_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Gateway::Gateway(PipelineConfig config, const Clock& clock, EventLog::Sink log_sink)
    : config_(std::move(config)),
      clock_(clock),
      log_(clock, std::move(log_sink)),
      ledger_(clock),
      factory_(clock, FactoryOptions{config_.window, config_.group_size, config_.max_physical_age_ms}),
      evaluator_(initial_catalog(config_), EvaluatorSettings{config_.max_snapshot_age_ms, config_.min_provenance_count}),
      executor_(clock, &ledger_) {
  validate(config_);

  std::vector<std::string> device_ids;
  for (const auto& spec : config_.devices) {
    executor_.register_device(spec);
    device_ids.push_back(spec.device_id);
    feed_.register_sensor(spec.device_id, Quantity::Temperature,
                          [this, id = spec.device_id] { return executor_.sense(id); });
  }
  factory_.set_registered_devices(device_ids);

  std::vector<TemplateSignature> seeded;
  for (const auto& t : config_.bootstrap_templates) seeded.push_back(template_signature(t));
  factory_.seed_templates(std::move(seeded));

  VerifierHooks hooks;
  hooks.on_approved = [this](const Transaction& tx) {
    metrics_.mark(tx.tx_id, Stage::Decided, clock_.now_ms());
    log_.emit("decision", {{"tx_id", tx.tx_id}, {"decision", "approve"}});
    run_policies(PolicyTrigger::OnApproved, tx, {});
    dispatch(tx);
  };
  hooks.on_closed = [this](const Transaction& tx, PolicyTrigger trigger) {
    if (trigger == PolicyTrigger::OnRejected) metrics_.mark(tx.tx_id, Stage::Decided, clock_.now_ms());
    log_.emit(trigger == PolicyTrigger::OnRejected ? "decision" : "expired",
              {{"tx_id", tx.tx_id}, {"status", to_string(tx.status)}});
    run_policies(trigger, tx, {});
  };
  hooks.install_catalog = [this](Catalog c) {
    const auto version = evaluator_.install(std::move(c));
    log_.emit("catalog_installed", {{"version", version}});
    return version;
  };
  verifier_ = std::make_unique<Verifier>(ledger_, clock_, config_.principals, config_.pending_ttl_ms, std::move(hooks));

  auto handler = [this](std::span<const std::uint8_t> datagram) { return executor_.handle_coap(datagram); };
  if (config_.coap_transport == CoapTransportKind::Udp) {
    coap_server_ = std::make_unique<coap::UdpServer>(handler, config_.coap_port);
    coap_transport_ = std::make_unique<coap::UdpTransport>("127.0.0.1", coap_server_->port());
  } else {
    coap_transport_ = std::make_unique<coap::InProcessTransport>(handler);
  }
  coap_client_ = std::make_unique<coap::Client>(*coap_transport_, config_.seed);
}

Gateway::~Gateway() {
  stop();
  if (coap_server_) coap_server_->stop();
}

void Gateway::start() {
  if (config_.mining_mode != MiningMode::Auto) return;
  std::lock_guard lock(loop_mu_);
  if (running_) return;
  running_ = true;
  loop_thread_ = std::thread([this] { loop(); });
}

void Gateway::stop() {
  {
    std::lock_guard lock(loop_mu_);
    running_ = false;
  }
  loop_cv_.notify_all();
  if (loop_thread_.joinable()) loop_thread_.join();
}

void Gateway::loop() {
  std::unique_lock lock(loop_mu_);
  while (running_) {
    loop_cv_.wait_for(lock, std::chrono::milliseconds(config_.tick_interval_ms), [this] { return !running_; });
    if (!running_) break;
    lock.unlock();
    try {
      run_pipeline_tick();
    } catch (const std::exception& e) {
      log_.emit("tick_failed", {{"error", e.what()}});
    }
    lock.lock();
  }
}

std::optional<std::uint16_t> Gateway::coap_port() const {
  if (!coap_server_) return std::nullopt;
  return coap_server_->port();
}

std::string Gateway::submit(Transaction tx) {
  {
    std::lock_guard lock(submit_mu_);
    if (tx.tx_id.empty()) {
      // Skip ids a caller already used explicitly.
      do tx.tx_id = fmt::format("tx-{:06}", next_tx_++);
      while (ledger_.status_of(tx.tx_id));
    }
  }
  if (tx.submitted_at == 0) tx.submitted_at = clock_.now_ms();
  tx.status = TxStatus::Submitted;
  const auto id = ledger_.submit_transaction(tx);
  metrics_.mark(id, Stage::Submitted, clock_.now_ms());
  log_.emit("submitted", {{"tx_id", id}, {"device_id", tx.device_id}, {"kind", to_string(tx.kind)}});
  return id;
}

Verdict Gateway::timed_evaluate(const Transaction& tx, const ContextSnapshot& snapshot, const Catalog& catalog,
                                Millis now) const {
  const auto& settings = evaluator_.settings();
  Verdict best = evaluate(tx, snapshot, catalog, settings, now);
  for (int i = 1; i < config_.timing_repeats; ++i) {
    Verdict again = evaluate(tx, snapshot, catalog, settings, now);
    best.analysis_micros = std::min(best.analysis_micros, again.analysis_micros);
    if (again.mean_read_micros() < best.mean_read_micros()) best.per_input_read_micros = std::move(again.per_input_read_micros);
  }
  return best;
}

bool Gateway::dispatch(const Transaction& tx) {
  const coap::Message req = execution_request(tx);
  std::vector<std::string> query = req.option_strings(coap::kUriQuery);
  try {
    const coap::Message resp = coap_client_->request(req.code, req.uri_path(), query, req.payload);
    if (resp.code.cls == 2) {
      metrics_.mark(tx.tx_id, Stage::Executed, clock_.now_ms());
      log_.emit("executed", {{"tx_id", tx.tx_id}, {"device_id", tx.device_id}, {"outcome", resp.payload_string()}});
      return true;
    }
    log_.emit("execution_refused", {{"tx_id", tx.tx_id}, {"code", resp.code.str()}});
  } catch (const Error& e) {
    log_.emit("execution_failed", {{"tx_id", tx.tx_id}, {"error", e.what()}});
  }
  metrics_.count("execution_failures");
  return false;
}

void Gateway::run_policies(PolicyTrigger trigger, const Transaction& tx, const std::vector<std::string>& reasons) {
  const auto catalog = evaluator_.catalog();
  for (auto action : apply_policies(trigger, catalog->policies)) {
    if (action == PolicyAction::EscalateToVerifier) continue;  // routing handles it
    log_.emit("policy", {{"tx_id", tx.tx_id}, {"trigger", to_string(trigger)}, {"action", to_string(action)}, {"reasons", reasons}});
    metrics_.count(fmt::format("policy_{}", to_string(action)));
  }
}

PipelineReport Gateway::run_pipeline_tick() {
  std::lock_guard tick(tick_mu_);
  PipelineReport report;
  report.expired = verifier_->expire_pending(clock_.now_ms());
  if (ledger_.pending_count() == 0) return report;

  const auto& miner = config_.miners[next_miner_++ % config_.miners.size()];
  const auto mine_start = std::chrono::steady_clock::now();
  Block block;
  try {
    block = ledger_.mine_block(miner, config_.difficulty);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyPool) return report;
    throw;
  }
  report.mining_ms = millis_since(mine_start);
  report.block_index = block.index;
  report.block_hash = to_hex(block.hash);
  report.mined = block.transactions.size();
  const Millis mined_at = clock_.now_ms();
  for (const auto& tx : block.transactions) metrics_.mark(tx.tx_id, Stage::Mined, mined_at);
  log_.emit("mined", {{"block_index", block.index}, {"miner", miner}, {"transactions", block.transactions.size()},
                      {"nonce", block.nonce}, {"hash", report.block_hash}});

  executor_.tick_all();
  feed_.poll(clock_.now_ms());
  const ContextSnapshot snapshot = factory_.build(ledger_, feed_);
  report.factory_build_ms = snapshot.build_micros / 1000.0;
  const auto summary = SnapshotSummary::of(snapshot);

  const auto catalog = evaluator_.catalog();
  for (const auto& tx : block.transactions) {
    try {
      const Verdict v = timed_evaluate(tx, snapshot, *catalog, clock_.now_ms());
      metrics_.mark(tx.tx_id, Stage::Evaluated, clock_.now_ms());
      report.evaluations.push_back(EvaluationRecord{tx.tx_id, v.outcome, v.reasons, v.per_input_read_micros.size(),
                                                    v.mean_read_micros(), v.analysis_micros});
      const auto destination = route(v, tx, ledger_);
      metrics_.mark(tx.tx_id, Stage::Routed, clock_.now_ms());
      log_.emit("evaluated", {{"tx_id", tx.tx_id}, {"outcome", to_string(v.outcome)}, {"reasons", v.reasons},
                              {"catalog_version", v.catalog_version}});

      Transaction routed = tx;
      if (destination == Destination::Executor) {
        ++report.approved;
        routed.status = TxStatus::Approved;
        run_policies(PolicyTrigger::OnApproved, routed, {});
        if (dispatch(routed)) ++report.executed;
      } else {
        ++report.suspicious;
        routed.status = TxStatus::Suspicious;
        run_policies(PolicyTrigger::OnSuspicious, routed, v.reasons);
        const auto pending_id = verifier_->enqueue(routed, v, summary);
        log_.emit("held", {{"tx_id", tx.tx_id}, {"pending_id", pending_id}, {"reasons", v.reasons}});
      }
    } catch (const Error& e) {
      report.errors.push_back(fmt::format("{}: {}", tx.tx_id, e.what()));
      log_.emit("transaction_failed", {{"tx_id", tx.tx_id}, {"error", e.what()}});
    }
  }
  metrics_.record_tick(report);
  log_.emit("tick", {{"mined", report.mined}, {"approved", report.approved}, {"suspicious", report.suspicious},
                     {"executed", report.executed}, {"factory_build_ms", report.factory_build_ms}});
  return report;
}

PipelineReport Gateway::mine_now() {
  if (config_.mining_mode == MiningMode::Auto)
    throw Error(ErrorCode::MiningModeAuto, "blocks are mined automatically in auto mode");
  if (ledger_.pending_count() == 0) throw Error(ErrorCode::EmptyPool, "no pending transactions to mine");
  return run_pipeline_tick();
}

ContextSnapshot Gateway::current_context() const { return factory_.build(ledger_, feed_); }

DecisionOutcome Gateway::decide(const std::string& pending_id, std::string_view token, Decision decision) {
  return verifier_->decide(pending_id, token, decision);
}

}  // namespace provguard
