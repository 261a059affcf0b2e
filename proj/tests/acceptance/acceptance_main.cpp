// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "provguard/bench.hpp"
#include "provguard/canonical.hpp"
#include "provguard/coap.hpp"
#include "provguard/http_api.hpp"
#include "provguard/sha256.hpp"

using namespace provguard;
using nlohmann::json;

namespace {

// Pinned parameters and tolerances.
constexpr std::uint64_t kSeeds = 10;
constexpr Millis kDelays[] = {50, 100, 200};
constexpr double kMaxScenarioSeconds = 120.0;
constexpr double kMaxReadMeanSpread = 0.50;  // (max - min) / min across delays
constexpr int kTamperTrials = 1000;
constexpr std::size_t kTamperBlocks = 5;  // including genesis
constexpr int kOracleHistories = 500;
constexpr int kOracleMaxTxs = 30;
constexpr int kCoapRoundTrips = 10'000;
constexpr int kCoapFuzzInputs = 100'000;
constexpr int kRacers = 16;
constexpr int kRaceRounds = 50;
constexpr int kSwapEvaluations = 20'000;

struct Check {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

int failures = 0;

void report(const std::string& name, const Check& o, const std::string& summary) {
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << (o.pass ? summary : o.detail) << std::endl;
}

// Exceptions inside a criterion become a FAIL line, not a crash.
// Names given on the command line restrict the run; empty runs everything.
std::set<std::string> selected;

void criterion(const std::string& name, const std::function<std::string(Check&)>& body) {
  if (!selected.empty() && !selected.contains(name)) return;
  Check o;
  std::string summary;
  try {
    summary = body(o);
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  report(name, o, summary);
}

class Rest {
 public:
  explicit Rest(Gateway& gw) : api_(gw), port_(api_.start("127.0.0.1", 0)), client_("127.0.0.1", port_) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(30);
  }

  std::pair<int, json> get(const std::string& path) { return unpack(client_.Get(path)); }

  std::pair<int, json> post(const std::string& path, const json& body = json::object(), const std::string& token = {}) {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    return unpack(client_.Post(path, h, body.dump(), "application/json"));
  }

 private:
  static std::pair<int, json> unpack(const httplib::Result& r) {
    if (!r) throw std::runtime_error("HTTP request failed: " + httplib::to_string(r.error()));
    return {r->status, r->body.empty() ? json() : json::parse(r->body)};
  }

  HttpApi api_;
  std::uint16_t port_;
  httplib::Client client_;
};

struct VerdictKey {
  std::string tx_id;
  provguard::Outcome outcome;
  std::vector<std::string> reasons;
  bool operator==(const VerdictKey&) const = default;
};

std::vector<VerdictKey> verdicts(const bench::BenchRun& run) {
  std::vector<VerdictKey> out;
  for (const auto& e : run.stream) out.push_back({e.tx_id, e.outcome, e.reasons});
  return out;
}

double mean_of(const std::vector<bench::BenchRecord>& rs, bench::Metric m) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : rs)
    if (r.metric == m) sum += r.value_us, ++n;
  return n ? sum / static_cast<double>(n) : 0;
}

std::size_t analysis_argmax(const bench::BenchRun& run) {
  double best = -1;
  std::size_t at = 0;
  for (const auto& r : run.records)
    if (r.metric == bench::Metric::EvaluatorAnalysisUs && r.value_us > best) best = r.value_us, at = r.index;
  return at;
}

// Totals over every gateway the acceptance run creates.
struct SafetyLedger {
  std::uint64_t executed = 0;
  std::uint64_t executed_without_approval = 0;
  std::uint64_t bypass_attempts = 0;
  std::uint64_t bypass_successes = 0;

  // Every Executed transaction must have been Routed as Approved or carry an
  // Approve decision before its Executed mark.
  void audit(Gateway& gw) {
    for (const auto& lt : gw.ledger().read_transactions({TxStatus::Executed})) {
      ++executed;
      const auto exec = gw.metrics().stage_of(lt.tx.tx_id, Stage::Executed);
      const auto pending = gw.verifier().find_by_tx(lt.tx.tx_id);
      bool approved = false;
      if (pending) {
        const auto decided = gw.metrics().stage_of(lt.tx.tx_id, Stage::Decided);
        approved = pending->decision && pending->decision->decision == Decision::Approve && decided && exec &&
                   decided->seq < exec->seq;
      } else {
        const auto routed = gw.metrics().stage_of(lt.tx.tx_id, Stage::Routed);
        approved = routed && exec && routed->seq < exec->seq;
      }
      if (!approved) ++executed_without_approval;
    }
  }
};

SafetyLedger safety;

// Criterion 1 to 3 share the same 30 runs.
struct ScenarioResults {
  std::map<std::uint64_t, std::map<Millis, std::vector<VerdictKey>>> verdicts;
  std::map<Millis, std::vector<double>> read_means;
  std::vector<std::string> spike_misses;
  std::size_t runs = 0;
};

std::string e2e(Check& o, ScenarioResults& res) {
  double slowest = 0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    for (Millis delay : kDelays) {
      bench::BenchScenario s;
      s.delay_ms = delay;
      s.seed = seed;
      const std::string tag = fmt::format("seed {} delay {} ms", seed, delay);
      bench::BenchRun run;
      try {
        run = bench::run_scenario(s);
      } catch (const Error& e) {
        o.require(false, tag + ": " + e.what());
        continue;
      }
      ++res.runs;
      slowest = std::max(slowest, run.wall_seconds);
      o.require(run.wall_seconds < kMaxScenarioSeconds, fmt::format("{}: took {:.1f} s", tag, run.wall_seconds));
      Gateway& gw = *run.gateway;

      std::size_t approved = 0, executed = 0, suspicious = 0;
      for (const auto& e : run.stream) {
        approved += e.outcome == provguard::Outcome::Approved;
        suspicious += e.outcome == provguard::Outcome::Suspicious;
        executed += gw.ledger().status_of(e.tx_id) == TxStatus::Executed;
      }
      o.require(approved == 100 && executed == 100 && suspicious == 1,
                fmt::format("{}: {} approved, {} executed, {} suspicious", tag, approved, executed, suspicious));
      const auto& injected = run.stream.at(run.injection_index);
      o.require(injected.tx_id == run.injected_tx_id && injected.reasons == std::vector<std::string>{"unseen-template"},
                tag + ": injected transaction not flagged unseen-template");

      // Held: a direct device request for it is refused and nothing runs.
      const auto before = gw.executor().executed_count();
      Transaction held = *gw.ledger().find(run.injected_tx_id);
      ++safety.bypass_attempts;
      const auto reply = coap::decode(*gw.executor().handle_coap(coap::encode(execution_request(held))));
      if (reply.code.cls == 2) ++safety.bypass_successes;
      o.require(reply.code.str() == "4.03" && gw.executor().executed_count() == before &&
                    gw.ledger().status_of(run.injected_tx_id) == TxStatus::Suspicious,
                tag + ": held transaction reachable before approval");

      // Approve over REST, then it executes.
      Rest rest(gw);
      const auto [pst, pending] = rest.get("/pending?state=awaiting");
      o.require(pst == 200 && pending.size() == 1 && pending[0]["tx_id"] == run.injected_tx_id,
                tag + ": pending list does not show the injection");
      const auto [dst, decision] = rest.post("/pending/" + run.pending_id + "/decision", {{"decision", "approve"}},
                                             std::string(bench::kAuditorToken));
      o.require(dst == 200 && decision["status"] == "Executed", tag + ": approve did not execute: " + decision.dump());
      o.require(rest.get("/transactions/" + run.injected_tx_id).second["status"] == "Executed",
                tag + ": status after approval is not Executed");
      o.require(gw.executor().device("sensor-1").unit() == TemperatureUnit::Fahrenheit,
                tag + ": device unit unchanged after approval");
      safety.audit(gw);

      res.verdicts[seed][delay] = verdicts(run);
      res.read_means[delay].push_back(mean_of(run.records, bench::Metric::EvaluatorReadUs));
      const auto argmax = analysis_argmax(run);
      if (argmax != run.injection_index)
        res.spike_misses.push_back(fmt::format("{}: max at {} but injection at {}", tag, argmax, run.injection_index));
      std::cerr << fmt::format("  {}: injection {} held, approved via REST, {:.1f} s\n", tag, run.injection_index,
                               run.wall_seconds);
    }
  }
  return fmt::format("{} runs ({} seeds x {} delays), 100 reads executed and 1 held per run, slowest {:.1f} s",
                     res.runs, kSeeds, std::size(kDelays), slowest);
}

std::string delay_invariance(Check& o, const ScenarioResults& res) {
  o.require(res.runs == kSeeds * std::size(kDelays), "scenario runs missing");
  std::vector<double> means;
  for (Millis d : kDelays) {
    const auto& v = res.read_means.at(d);
    means.push_back(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
  }
  const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
  const double spread = (*hi - *lo) / *lo;
  o.require(spread < kMaxReadMeanSpread, fmt::format("read mean spread {:.1f}% across delays (means {:.4f}/{:.4f}/{:.4f} us)",
                                                     spread * 100, means[0], means[1], means[2]));
  for (const auto& [seed, by_delay] : res.verdicts) {
    const auto& first = by_delay.begin()->second;
    for (const auto& [delay, seq] : by_delay)
      o.require(seq == first, fmt::format("seed {}: verdicts at {} ms differ from {} ms", seed, delay, by_delay.begin()->first));
  }
  return fmt::format("mean read {:.4f}/{:.4f}/{:.4f} us at 50/100/200 ms, spread {:.1f}% < {:.0f}%; verdict sequences identical for all {} seeds",
                     means[0], means[1], means[2], spread * 100, kMaxReadMeanSpread * 100, res.verdicts.size());
}

std::string spike(Check& o, const ScenarioResults& res) {
  o.require(res.runs == kSeeds * std::size(kDelays), "scenario runs missing");
  for (const auto& m : res.spike_misses) o.require(false, m);
  return fmt::format("analysis-time maximum at the injection index in {}/{} runs", res.runs - res.spike_misses.size(),
                     res.runs);
}

Transaction rest_tx(const json& j) { return transaction_from_json(j); }

std::string provenance_feedback(Check& o) {
  bench::BenchScenario s;
  PipelineConfig cfg = bench::bench_config(s);
  SystemClock clock;
  Gateway gw(cfg, clock);
  Rest rest(gw);
  const json read = {{"device_id", "sensor-1"}, {"kind", "Read"}, {"issuer", "operator"}};
  const json update = {{"device_id", "sensor-1"}, {"kind", "ConfigUpdate"}, {"issuer", "operator"},
                       {"params", {{"unit", "fahrenheit"}}}};
  for (int i = 0; i < 10; ++i) rest.post("/transactions", read);
  const auto [sst, sub] = rest.post("/transactions", update);
  o.require(sst == 202, "submit failed");
  const std::string first_id = sub["tx_id"];
  rest.post("/mine");

  const auto pending = rest.get("/pending").second;
  o.require(pending.size() == 1, "expected one pending entry");
  const std::string pid = pending.at(0)["pending_id"];
  const auto [dst, dec] = rest.post("/pending/" + pid + "/decision", {{"decision", "revoke"}}, std::string(bench::kOperatorToken));
  o.require(dst == 200 && dec["status"] == "Rejected", "revoke failed: " + dec.dump());

  const std::string sig = template_signature(rest_tx(update)).hex();
  const auto ctx = rest.get("/context").second;
  bool found = false;
  for (const auto& g : ctx["groups"])
    for (const auto& e : g["entries"])
      if (e["tx_id"] == first_id) found = e["signature"] == sig && e["status"] == "Rejected";
  o.require(found, "next snapshot lacks the rejected signature");
  o.require(gw.ledger().rejections().size() == 1, "rejection record missing");

  const auto [rst, resub] = rest.post("/transactions", update);
  const std::string second_id = resub["tx_id"];
  const auto mined = rest.post("/mine").second;
  o.require(mined["report"]["suspicious"] == 1, "re-submission not flagged");
  const auto again = rest.get("/transactions/" + second_id).second;
  o.require(again["status"] == "Suspicious", "re-submission status " + again["status"].dump());
  const auto second_pending = rest.get("/pending?state=awaiting").second;
  o.require(second_pending.size() == 1 && second_pending[0]["reasons"][0] == "unseen-template",
            "re-submission not held with unseen-template");
  bool mentions = false;
  for (const auto& f : second_pending[0]["findings"]) mentions |= f.get<std::string>().find("previously rejected 1") != std::string::npos;
  o.require(mentions, "findings do not mention the earlier rejection");
  safety.audit(gw);
  return fmt::format("revoked {} appears as Rejected with signature {}..; re-submission {} held as unseen-template",
                     first_id, sig.substr(0, 12), second_id);
}

std::string ledger_tamper(Check& o) {
  ManualClock clock(1'700'000'000'000);
  Ledger ledger(clock);
  constexpr std::uint32_t difficulty = 12;
  for (std::size_t b = 1; b < kTamperBlocks; ++b) {
    for (int i = 0; i < 3; ++i) {
      Transaction tx;
      tx.tx_id = fmt::format("b{}-t{}", b, i);
      tx.device_id = "sensor-1";
      tx.kind = i == 2 ? TxKind::ConfigUpdate : TxKind::Read;
      if (i == 2) tx.params = {{"unit", "fahrenheit"}};
      tx.issuer = "operator";
      tx.submitted_at = clock.now_ms();
      ledger.submit_transaction(tx);
    }
    ledger.mine_block(fmt::format("miner-{}", b % 3), difficulty);
    clock.advance(1000);
  }
  const Chain chain = ledger.chain();
  o.require(chain.blocks.size() == kTamperBlocks, "chain has the wrong length");
  o.require(validate_chain(chain, difficulty).valid, "untampered chain invalid");
  for (std::size_t i = 1; i < chain.blocks.size(); ++i)
    o.require(leading_zero_bits(chain.blocks[i].hash) >= difficulty && chain.blocks[i].difficulty == difficulty,
              fmt::format("block {} misses difficulty", i));

  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  const Bytes wire = encode_chain(chain, &ranges);
  o.require(validate_encoded_chain(wire, difficulty).valid, "encoded chain invalid");
  std::mt19937_64 rng(20240611);
  int invalid = 0, located = 0, in_block = 0;
  for (int t = 0; t < kTamperTrials; ++t) {
    Bytes copy = wire;
    const std::size_t pos = rng() % copy.size();
    copy[pos] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    const auto r = validate_encoded_chain(copy, difficulty);
    if (!r.valid) ++invalid;
    std::optional<std::size_t> owner;
    for (std::size_t b = 0; b < ranges.size(); ++b)
      if (pos >= ranges[b].first && pos < ranges[b].second) owner = b;
    if (owner) {
      ++in_block;
      if (r.first_bad_index == owner) ++located;
      else o.require(false, fmt::format("byte {} in block {} reported at {}", pos, *owner,
                                        r.first_bad_index ? std::to_string(*r.first_bad_index) : "none"));
    }
  }
  o.require(invalid == kTamperTrials, fmt::format("{} of {} tampered chains validated", kTamperTrials - invalid, kTamperTrials));
  return fmt::format("{}/{} tampered chains invalid; first bad index correct in {}/{} in-block flips; all {} blocks meet difficulty {}",
                     invalid, kTamperTrials, located, in_block, kTamperBlocks - 1, difficulty);
}

void drive(Ledger& ledger, const std::string& id, TxStatus target) {
  switch (target) {
    case TxStatus::Approved: ledger.transition(id, TxStatus::Approved); break;
    case TxStatus::Executed:
      ledger.transition(id, TxStatus::Approved);
      ledger.transition(id, TxStatus::Executed);
      break;
    case TxStatus::Suspicious: ledger.transition(id, TxStatus::Suspicious); break;
    case TxStatus::Rejected:
    case TxStatus::Expired:
      ledger.transition(id, TxStatus::Suspicious);
      ledger.transition(id, target);
      ledger.record_rejection(id);
      break;
    default: break;
  }
}

std::string provenance_oracle(Check& o) {
  std::mt19937_64 rng(777);
  const std::vector<std::string> devices = {"d1", "d2", "d3", "d4"};
  const TxKind kinds[] = {TxKind::Read, TxKind::ConfigUpdate, TxKind::ActuatorCommand};
  const char* keys[] = {"unit", "proto", "rate"};
  const TxStatus statuses[] = {TxStatus::Mined, TxStatus::Approved, TxStatus::Executed,
                               TxStatus::Suspicious, TxStatus::Rejected, TxStatus::Expired};
  const Catalog no_rules;
  int agree = 0, unseen = 0;
  for (int h = 0; h < kOracleHistories; ++h) {
    const std::size_t n_dev = 1 + rng() % devices.size();
    const std::size_t n_kind = 1 + rng() % std::size(kinds);
    auto random_tx = [&](const std::string& id) {
      Transaction tx;
      tx.tx_id = id;
      tx.device_id = devices[rng() % n_dev];
      tx.kind = kinds[rng() % n_kind];
      tx.issuer = "operator";
      for (const char* k : keys)
        if (rng() % 3 == 0) tx.params[k] = std::to_string(rng() % 4);
      return tx;
    };
    ManualClock clock;
    Ledger ledger(clock);
    std::vector<std::pair<Transaction, TxStatus>> history;
    const int n = static_cast<int>(rng() % (kOracleMaxTxs + 1));
    for (int i = 0; i < n; ++i) {
      auto tx = random_tx(fmt::format("h{}", i));
      ledger.submit_transaction(tx);
      if (rng() % 3 == 0 || i + 1 == n) ledger.mine_block("m", 0);
      history.emplace_back(tx, TxStatus::Submitted);
    }
    if (ledger.pending_count() > 0) ledger.mine_block("m", 0);
    for (auto& [tx, st] : history) {
      st = statuses[rng() % std::size(statuses)];
      drive(ledger, tx.tx_id, st);
    }
    // Half the candidates copy a historical schema to exercise matches.
    Transaction cand = random_tx("cand");
    if (!history.empty() && rng() % 2) {
      const auto& src = history[rng() % history.size()].first;
      cand.device_id = src.device_id;
      cand.kind = src.kind;
      cand.params.clear();
      for (const auto& [k, v] : src.params) cand.params[k] = v + "x";
    }
    ledger.submit_transaction(cand);
    ledger.mine_block("m", 0);
    cand.status = TxStatus::Mined;

    ContextFactory factory(clock, FactoryOptions{});
    SensorFeed feed;
    const auto snap = factory.build(ledger, feed);
    const auto v = evaluate(cand, snap, no_rules, {}, clock.now_ms());
    const bool flagged = std::find(v.reasons.begin(), v.reasons.end(), "unseen-template") != v.reasons.end();

    bool seen = false;
    for (const auto& [tx, st] : history) {
      std::set<std::string> a, b;
      for (const auto& [k, _] : tx.params) a.insert(k);
      for (const auto& [k, _] : cand.params) b.insert(k);
      if (tx.device_id == cand.device_id && tx.kind == cand.kind && a == b &&
          (st == TxStatus::Approved || st == TxStatus::Executed))
        seen = true;
    }
    if (flagged == !seen) ++agree;
    else o.require(false, fmt::format("history {}: evaluator {} but scan says {}", h, flagged ? "unseen" : "seen",
                                      seen ? "seen" : "unseen"));
    unseen += flagged;
  }
  return fmt::format("{}/{} histories agree with the brute-force scan ({} unseen, {} seen)", agree, kOracleHistories,
                     unseen, kOracleHistories - unseen);
}

std::string coap_codec(Check& o) {
  using namespace coap;
  Message get;
  get.type = MessageType::CON;
  get.code = kGet;
  get.message_id = 0x1234;
  get.add_option(kUriPath, std::string_view("execute"));
  o.require(encode(get) == Bytes{0x40, 0x01, 0x12, 0x34, 0xB7, 'e', 'x', 'e', 'c', 'u', 't', 'e'}, "GET vector differs");
  Message ack;
  ack.type = MessageType::ACK;
  ack.code = kChanged;
  o.require(encode(ack) == Bytes{0x60, 0x44, 0x00, 0x00}, "ACK vector differs");

  std::mt19937_64 rng(99);
  int round_trips = 0;
  for (int i = 0; i < kCoapRoundTrips; ++i) {
    Message m;
    m.type = static_cast<MessageType>(rng() % 4);
    m.code = Code::from_raw(static_cast<std::uint8_t>(rng()));
    m.message_id = static_cast<std::uint16_t>(rng());
    m.token.resize(rng() % 9);
    for (auto& b : m.token) b = static_cast<std::uint8_t>(rng());
    std::uint32_t number = 0;
    for (int k = static_cast<int>(rng() % 6); k > 0; --k) {
      number += static_cast<std::uint32_t>(rng() % 269);
      if (number > 0xFFFF) break;
      Bytes value(rng() % 4 == 0 ? rng() % 256 : rng() % 16);
      for (auto& b : value) b = static_cast<std::uint8_t>(rng());
      m.add_option(static_cast<std::uint16_t>(number), value);
    }
    if (rng() % 2) {
      m.payload.resize(1 + rng() % 100);
      for (auto& b : m.payload) b = static_cast<std::uint8_t>(rng());
    }
    if (decode(encode(m)) == m) ++round_trips;
  }
  o.require(round_trips == kCoapRoundTrips, fmt::format("{} round-trips failed", kCoapRoundTrips - round_trips));

  int rejected = 0, accepted = 0, other = 0;
  for (int i = 0; i < kCoapFuzzInputs; ++i) {
    Bytes in(rng() % 64);
    for (auto& b : in) b = static_cast<std::uint8_t>(rng());
    if (!in.empty() && rng() % 2) in[0] = static_cast<std::uint8_t>(0x40 | (in[0] & 0x3F));
    try {
      const auto m = decode(in);
      ++accepted;
      if (encode(m) != in) o.require(false, "accepted input does not re-encode to itself");
    } catch (const Error&) {
      ++rejected;
    } catch (...) {
      ++other;
    }
  }
  o.require(other == 0, fmt::format("{} fuzz inputs raised non-codec exceptions", other));
  return fmt::format("both vectors byte-exact; {}/{} round-trips; {} fuzz inputs survived ({} decoded, {} rejected)",
                     round_trips, kCoapRoundTrips, kCoapFuzzInputs, accepted, rejected);
}

std::string lifecycle_safety(Check& o) {
  // Direct execute attempts on every status.
  ManualClock clock(1);
  Ledger ledger(clock);
  DeviceExecutor ex(clock, &ledger);
  ex.register_device(DeviceSpec{"sensor-1"});
  std::mt19937_64 rng(4242);
  const TxStatus targets[] = {TxStatus::Submitted, TxStatus::Mined, TxStatus::Approved, TxStatus::Suspicious,
                              TxStatus::Executed, TxStatus::Rejected, TxStatus::Expired};
  int attempts = 0, legit = 0, succeeded = 0, wrong = 0;
  for (int i = 0; i < 700; ++i) {
    Transaction tx;
    tx.tx_id = fmt::format("x{}", i);
    tx.device_id = "sensor-1";
    ledger.submit_transaction(tx);
    const TxStatus target = targets[rng() % std::size(targets)];
    if (target != TxStatus::Submitted) {
      ledger.mine_block("m", 0);
      drive(ledger, tx.tx_id, target);
    }
    // The caller may claim any status; only the ledger's Approved counts.
    tx.status = rng() % 2 ? TxStatus::Approved : target;
    const bool ok = target == TxStatus::Approved && tx.status == TxStatus::Approved;
    ++attempts;
    legit += ok;
    try {
      ex.execute(tx);
      ++succeeded;
      if (!ok) ++wrong;
    } catch (const Error&) {
      if (ok) ++wrong;
    }
  }
  o.require(wrong == 0, fmt::format("{} execute calls disagreed with the Approved gate", wrong));
  o.require(static_cast<int>(ex.executed_count()) == legit, "executed count differs from approved calls");

  o.require(safety.executed_without_approval == 0,
            fmt::format("{} pipeline executions lacked approval", safety.executed_without_approval));
  o.require(safety.bypass_successes == 0, "a held transaction was executed over CoAP");

  // First decision wins under contention.
  int clean_rounds = 0;
  for (int round = 0; round < kRaceRounds; ++round) {
    ManualClock c(1);
    Ledger l(c);
    Verifier v(l, c, {{"a", "tok-a", false}, {"b", "tok-b", false}});
    Transaction tx;
    tx.tx_id = "held";
    tx.device_id = "sensor-1";
    tx.kind = TxKind::ConfigUpdate;
    l.submit_transaction(tx);
    l.mine_block("m", 0);
    l.transition("held", TxStatus::Suspicious);
    tx.status = TxStatus::Suspicious;
    Verdict verdict;
    verdict.tx_id = "held";
    verdict.outcome = provguard::Outcome::Suspicious;
    const auto pid = v.enqueue(tx, verdict, {});
    std::atomic<int> wins{0}, already{0};
    std::barrier sync(kRacers);
    std::vector<std::thread> racers;
    for (int i = 0; i < kRacers; ++i)
      racers.emplace_back([&, i] {
        sync.arrive_and_wait();
        try {
          v.decide(pid, i % 2 ? "tok-a" : "tok-b", i % 3 ? Decision::Approve : Decision::Revoke);
          ++wins;
        } catch (const Error& e) {
          if (e.code() == ErrorCode::AlreadyDecided) ++already;
        }
      });
    for (auto& t : racers) t.join();
    const auto p = v.get(pid);
    const auto expected = p->decision->decision == Decision::Approve ? TxStatus::Approved : TxStatus::Rejected;
    if (wins == 1 && already == kRacers - 1 && l.status_of("held") == expected) ++clean_rounds;
  }
  o.require(clean_rounds == kRaceRounds, fmt::format("{} of {} race rounds had more than one winner", kRaceRounds - clean_rounds, kRaceRounds));
  return fmt::format("{} direct execute calls, {} succeeded, all Approved; {} pipeline executions audited, 0 unapproved; "
                     "{} CoAP bypass attempts refused; {} rounds of {} racers, exactly one winner each",
                     attempts, succeeded, safety.executed, safety.bypass_attempts, kRaceRounds, kRacers);
}

std::string icontract_update(Check& o) {
  bench::BenchScenario s;
  PipelineConfig cfg = bench::bench_config(s);
  cfg.principals.push_back({"bench-viewer", "bench-viewer-token", false});
  SystemClock clock;
  Gateway gw(cfg, clock);
  Rest rest(gw);
  const std::string op(bench::kOperatorToken), aud(bench::kAuditorToken);
  const json probe = {{"device_id", "sensor-1"}, {"kind", "Read"}, {"issuer", "contractor"}};

  rest.post("/transactions", probe);
  const auto before = rest.post("/mine").second;
  o.require(before["report"]["approved"] == 1, "probe read not approved under the initial catalog");

  json catalog = default_catalog_json();
  catalog["rules"].push_back({{"rule_id", "known-issuers"},
                              {"description", "Only listed issuers may act"},
                              {"predicate", {{"in", {"$tx.issuer", {"operator", "maintainer"}}}}},
                              {"on_fail_reason", "unknown-issuer"}});
  const auto old_version = gw.evaluator().catalog()->version;
  const auto [pst, prop] = rest.post("/icontracts/proposals", {{"catalog", catalog}}, op);
  o.require(pst == 201 && prop["state"] == "Proposed", "proposal not accepted");
  const std::string id = prop["proposal_id"];
  const std::string confirm = "/icontracts/proposals/" + id + "/confirm";

  o.require(rest.post(confirm, {}, op).first == 403, "self-confirm not rejected");
  o.require(rest.post(confirm, {}, "bench-viewer-token").first == 403, "confirm without update right not rejected");
  o.require(rest.post(confirm, {}).first == 401, "anonymous confirm not rejected");
  o.require(gw.evaluator().catalog()->version == old_version, "catalog changed before a valid confirmation");

  rest.post("/transactions", probe);
  o.require(rest.post("/mine").second["report"]["approved"] == 1, "verdict changed before commit");

  const auto [cst, done] = rest.post(confirm, {}, aud);
  o.require(cst == 200 && done["state"] == "Committed", "confirm by a second principal failed");
  o.require(gw.evaluator().catalog()->version > old_version, "catalog version did not advance");

  rest.post("/transactions", probe);
  const auto after = rest.post("/mine").second;
  o.require(after["report"]["suspicious"] == 1, "added rule did not change the next verdict");
  o.require(after["report"]["evaluations"][0]["reasons"] == json::array({"unknown-issuer"}),
            "unexpected reasons " + after["report"]["evaluations"][0]["reasons"].dump());

  // Atomic swap: concurrent evaluations each see exactly one catalog.
  Catalog lax = parse_catalog(default_catalog_json());
  Catalog strict = parse_catalog(catalog);
  Evaluator ev(lax, {});
  ManualClock mc;
  Ledger l(mc);
  Transaction tx = rest_tx(probe);
  tx.tx_id = "p";
  l.submit_transaction(tx);
  l.mine_block("m", 0);
  tx.status = TxStatus::Mined;
  ContextFactory factory(mc, FactoryOptions{});
  factory.set_registered_devices({"sensor-1"});
  factory.seed_templates({template_signature(tx)});
  SensorFeed feed;
  const auto snap = factory.build(l, feed);
  o.require(evaluate(tx, snap, lax, {}, 0).outcome == provguard::Outcome::Approved &&
                evaluate(tx, snap, strict, {}, 0).outcome == provguard::Outcome::Suspicious,
            "swap probe does not separate the two catalogs");
  std::map<std::uint64_t, bool> strict_version;
  std::mutex mu;
  std::atomic<bool> stop{false};
  std::thread swapper([&] {
    for (int i = 1; !stop; ++i) {
      const bool st = i % 2 == 1;
      std::lock_guard lock(mu);
      strict_version[ev.install(st ? strict : lax)] = st;
    }
  });
  int mixed = 0, checked = 0;
  for (int i = 0; i < kSwapEvaluations; ++i) {
    const auto v = ev.evaluate(tx, snap, 0);
    std::lock_guard lock(mu);
    auto it = strict_version.find(v.catalog_version);
    if (it == strict_version.end()) continue;
    ++checked;
    const bool flagged = v.outcome == provguard::Outcome::Suspicious;
    if (flagged != it->second) ++mixed;
  }
  stop = true;
  swapper.join();
  o.require(mixed == 0, fmt::format("{} evaluations mixed catalog versions", mixed));
  o.require(checked > kSwapEvaluations / 2, fmt::format("only {} evaluations overlapped a swap", checked));
  return fmt::format("proposal {} committed by a second principal (v{} -> v{}); self and unauthorized confirms refused; "
                     "new rule flips the next verdict to unknown-issuer; {} concurrent evaluations each used one catalog",
                     id, old_version, gw.evaluator().catalog()->version, checked);
}

}  // namespace

int main(int argc, char** argv) {
  selected.insert(argv + 1, argv + argc);
  std::cout << "provguard acceptance\n";
  ScenarioResults scenarios;
  criterion("scenario-end-to-end", [&](Check& o) { return e2e(o, scenarios); });
  criterion("delay-invariance", [&](Check& o) { return delay_invariance(o, scenarios); });
  criterion("spike-at-injection", [&](Check& o) { return spike(o, scenarios); });
  criterion("provenance-feedback", provenance_feedback);
  criterion("ledger-tamper-detection", ledger_tamper);
  criterion("provenance-oracle", provenance_oracle);
  criterion("coap-codec", coap_codec);
  criterion("lifecycle-safety", lifecycle_safety);
  criterion("icontract-two-phase-update", icontract_update);
  std::cout << (failures == 0 ? "ALL PASS" : fmt::format("{} FAILED", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
