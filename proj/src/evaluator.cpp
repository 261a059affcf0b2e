#include "provguard/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace provguard {

std::string_view to_string(Outcome o) { return o == Outcome::Approved ? "Approved" : "Suspicious"; }

std::string_view to_string(Destination d) { return d == Destination::Executor ? "Executor" : "Verifier"; }

double Verdict::mean_read_micros() const {
  if (per_input_read_micros.empty()) return 0;
  return std::accumulate(per_input_read_micros.begin(), per_input_read_micros.end(), 0.0) /
         static_cast<double>(per_input_read_micros.size());
}

namespace {

using SteadyClock = std::chrono::steady_clock;

double micros_since(SteadyClock::time_point start) {
  return std::chrono::duration<double, std::micro>(SteadyClock::now() - start).count();
}

struct Tally {
  std::size_t legitimate = 0;
  std::size_t rejected = 0;
  std::size_t other = 0;
};

// One contextual input as the evaluator holds it after reading.
struct ContextInput {
  const ProvenanceEntry* entry = nullptr;
  const PhysicalReading* reading = nullptr;
};

std::string describe(const TemplateDescriptor& t) {
  return fmt::format("{}({}) on {}", to_string(t.kind), fmt::join(t.param_keys, ","), t.device_id);
}

// Second phase of context verification: explains a suspicious verdict to
// the human verifier by comparing the transaction against everything the
// snapshot knows about its device.
std::vector<std::string> verify_context(const Transaction& tx, const TemplateDescriptor& tmpl,
                                        const TemplateSignature& sig, const std::vector<ContextInput>& inputs,
                                        const ContextSnapshot& snapshot) {
  std::vector<std::string> findings;
  std::map<std::string, std::size_t> kinds_on_device;
  std::set<std::string> keys_on_device;
  std::size_t legit_on_device = 0;
  std::size_t same_rejected = 0;
  std::size_t same_pending = 0;
  std::set<std::string> devices_with_kind;
  std::vector<std::string> inconsistent;
  for (const auto& in : inputs) {
    if (!in.entry) continue;
    const auto& e = *in.entry;
    // The verifier is shown this context, so each entry is re-derived from
    // its descriptor before being trusted.
    if (template_signature(e.descriptor) != e.signature) inconsistent.push_back(e.tx_id);
    if (e.signature == sig) {
      if (is_rejection(e.status)) ++same_rejected;
      else if (!is_legitimizing(e.status) && e.tx_id != tx.tx_id) ++same_pending;
    }
    if (is_legitimizing(e.status) && e.descriptor.kind == tmpl.kind && e.descriptor.device_id != tmpl.device_id)
      devices_with_kind.insert(e.descriptor.device_id);
    if (e.descriptor.device_id != tmpl.device_id || !is_legitimizing(e.status)) continue;
    ++legit_on_device;
    ++kinds_on_device[std::string(to_string(e.descriptor.kind))];
    keys_on_device.insert(e.descriptor.param_keys.begin(), e.descriptor.param_keys.end());
  }

  findings.push_back(fmt::format("template {} [{}]", describe(tmpl), sig.hex().substr(0, 16)));
  std::vector<std::string> kind_summary;
  for (const auto& [kind, n] : kinds_on_device) kind_summary.push_back(fmt::format("{}x{}", kind, n));
  findings.push_back(fmt::format("device {} has {} legitimate provenance entries ({})", tmpl.device_id, legit_on_device,
                                 kind_summary.empty() ? "none" : fmt::format("{}", fmt::join(kind_summary, ", "))));
  if (!kinds_on_device.contains(std::string(to_string(tmpl.kind))))
    findings.push_back(fmt::format("{} never executed on {}", to_string(tmpl.kind), tmpl.device_id));
  std::vector<std::string> new_keys;
  for (const auto& k : tmpl.param_keys)
    if (!keys_on_device.contains(k)) new_keys.push_back(k);
  if (!new_keys.empty()) findings.push_back(fmt::format("parameters never seen on device: {}", fmt::join(new_keys, ",")));
  if (same_rejected > 0) findings.push_back(fmt::format("same template previously rejected {} time(s)", same_rejected));
  if (same_pending > 0) findings.push_back(fmt::format("same template awaiting decision {} time(s)", same_pending));
  if (!devices_with_kind.empty())
    findings.push_back(fmt::format("{} legitimately executed on: {}", to_string(tmpl.kind), fmt::join(devices_with_kind, ",")));
  if (!inconsistent.empty())
    findings.push_back(fmt::format("provenance entries with inconsistent signatures: {}", fmt::join(inconsistent, ",")));
  for (const auto& in : inputs)
    if (in.reading)
      findings.push_back(fmt::format("{} {} = {} (age {} ms)", to_string(in.reading->quantity), in.reading->source,
                                     in.reading->value, snapshot.built_at - in.reading->observed_at));
  return findings;
}

}  // namespace

Verdict evaluate(const Transaction& tx, const ContextSnapshot& snapshot, const Catalog& catalog,
                 const EvaluatorSettings& settings, Millis now) {
  if (tx.status != TxStatus::Mined)
    throw Error(ErrorCode::PreconditionViolated, "evaluate requires a Mined transaction, got " + std::string(to_string(tx.status)));

  Verdict v;
  v.tx_id = tx.tx_id;
  v.evaluated_at = now;
  v.catalog_version = catalog.version;

  // Read every contextual input individually.
  std::vector<ContextInput> inputs;
  inputs.reserve(snapshot.entry_count() + snapshot.physical.size());
  std::map<TemplateSignature, Tally> tallies;
  v.per_input_read_micros.reserve(inputs.capacity());
  for (const auto& group : snapshot.groups) {
    for (const auto& entry : group.entries) {
      const auto start = SteadyClock::now();
      auto& t = tallies[entry.signature];
      if (is_legitimizing(entry.status)) ++t.legitimate;
      else if (is_rejection(entry.status)) ++t.rejected;
      else ++t.other;
      inputs.push_back(ContextInput{&entry, nullptr});
      v.per_input_read_micros.push_back(micros_since(start));
    }
  }
  for (const auto& reading : snapshot.physical) {
    const auto start = SteadyClock::now();
    inputs.push_back(ContextInput{nullptr, &reading});
    v.per_input_read_micros.push_back(micros_since(start));
  }

  const auto analysis_start = SteadyClock::now();
  const TemplateDescriptor tmpl = describe_template(tx);
  const TemplateSignature sig = template_signature(tmpl);

  const bool seeded = std::find(snapshot.seeded_templates.begin(), snapshot.seeded_templates.end(), sig) !=
                      snapshot.seeded_templates.end();
  const auto tally = tallies.find(sig);
  const std::size_t legitimate = tally == tallies.end() ? 0 : tally->second.legitimate;
  if (!seeded && legitimate < std::max<std::size_t>(settings.min_provenance_count, 1))
    v.reasons.emplace_back(kReasonUnseenTemplate);

  if (now - snapshot.built_at > settings.max_snapshot_age) v.reasons.emplace_back(kReasonStaleContext);

  for (const auto& rule : catalog.rules)
    if (rule.enabled && !evaluate_condition(rule.predicate, tx, snapshot)) v.reasons.push_back(rule.on_fail_reason);

  if (!v.reasons.empty()) {
    v.outcome = Outcome::Suspicious;
    v.findings = verify_context(tx, tmpl, sig, inputs, snapshot);
  }
  v.analysis_micros = micros_since(analysis_start);
  return v;
}

std::vector<PolicyAction> apply_policies(PolicyTrigger trigger, const std::vector<Policy>& policies) {
  std::vector<PolicyAction> actions;
  for (const auto& p : policies)
    if (p.trigger == trigger) actions.push_back(p.action);
  if (trigger == PolicyTrigger::OnSuspicious &&
      std::find(actions.begin(), actions.end(), PolicyAction::EscalateToVerifier) == actions.end())
    actions.insert(actions.begin(), PolicyAction::EscalateToVerifier);
  return actions;
}

std::vector<PolicyAction> apply_policies(const Verdict& verdict, const std::vector<Policy>& policies) {
  return apply_policies(verdict.outcome == Outcome::Suspicious ? PolicyTrigger::OnSuspicious : PolicyTrigger::OnApproved,
                        policies);
}

Destination route(const Verdict& verdict, const Transaction& tx, Ledger& ledger) {
  if (verdict.tx_id != tx.tx_id) throw Error(ErrorCode::InvalidArgument, "verdict belongs to " + verdict.tx_id);
  if (verdict.outcome == Outcome::Approved) {
    ledger.transition(tx.tx_id, TxStatus::Approved, TxStatus::Mined);
    return Destination::Executor;
  }
  ledger.transition(tx.tx_id, TxStatus::Suspicious, TxStatus::Mined);
  return Destination::Verifier;
}

Evaluator::Evaluator(Catalog catalog, EvaluatorSettings settings)
    : catalog_(std::make_shared<const Catalog>(std::move(catalog))), settings_(settings) {}

std::shared_ptr<const Catalog> Evaluator::catalog() const {
  std::lock_guard lock(mu_);
  return catalog_;
}

std::uint64_t Evaluator::install(Catalog catalog) {
  std::lock_guard lock(mu_);
  catalog.version = std::max(catalog.version, catalog_->version + 1);
  catalog_ = std::make_shared<const Catalog>(std::move(catalog));
  return catalog_->version;
}

Verdict Evaluator::evaluate(const Transaction& tx, const ContextSnapshot& snapshot, Millis now) const {
  const auto pinned = catalog();
  return provguard::evaluate(tx, snapshot, *pinned, settings_, now);
}

}  // namespace provguard
