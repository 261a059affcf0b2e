#include "provguard/verifier.hpp"

#include <fmt/format.h>
#include <openssl/crypto.h>

namespace provguard {

std::string_view to_string(Decision d) { return d == Decision::Approve ? "approve" : "revoke"; }

std::optional<Decision> parse_decision(std::string_view s) {
  if (s == "approve" || s == "Approve") return Decision::Approve;
  if (s == "revoke" || s == "Revoke") return Decision::Revoke;
  return std::nullopt;
}

std::string_view to_string(PendingState s) {
  switch (s) {
    case PendingState::Awaiting: return "awaiting";
    case PendingState::Decided: return "decided";
    case PendingState::Expired: return "expired";
  }
  return "?";
}

std::string_view to_string(ProposalState s) {
  switch (s) {
    case ProposalState::Proposed: return "Proposed";
    case ProposalState::Committed: return "Committed";
    case ProposalState::Aborted: return "Aborted";
  }
  return "?";
}

SnapshotSummary SnapshotSummary::of(const ContextSnapshot& s) {
  return SnapshotSummary{s.groups.size(), s.entry_count(), s.physical, s.built_at};
}

PendingState PendingVerification::state() const {
  if (decision) return PendingState::Decided;
  if (expired) return PendingState::Expired;
  return PendingState::Awaiting;
}

nlohmann::json to_json(const PendingVerification& p) {
  nlohmann::json physical = nlohmann::json::array();
  for (const auto& r : p.snapshot.physical)
    physical.push_back({{"source", r.source}, {"quantity", to_string(r.quantity)}, {"value", r.value}, {"observed_at", r.observed_at}});
  nlohmann::json j = {
      {"pending_id", p.pending_id},
      {"tx_id", p.tx_id},
      {"tx", {{"device_id", p.tx.device_id}, {"kind", to_string(p.tx.kind)}, {"params", p.tx.params}, {"issuer", p.tx.issuer}}},
      {"reasons", p.reasons},
      {"findings", p.findings},
      {"snapshot", {{"groups", p.snapshot.groups}, {"entries", p.snapshot.entries}, {"physical", physical}, {"built_at", p.snapshot.built_at}}},
      {"enqueued_at", p.enqueued_at},
      {"ttl_ms", p.ttl ? nlohmann::json(*p.ttl) : nlohmann::json(nullptr)},
      {"state", to_string(p.state())},
      {"decision", nullptr},
  };
  if (p.decision)
    j["decision"] = {{"principal_id", p.decision->principal_id},
                     {"decision", to_string(p.decision->decision)},
                     {"decided_at", p.decision->decided_at}};
  return j;
}

nlohmann::json to_json(const ICUpdateProposal& p) {
  return {{"proposal_id", p.proposal_id},
          {"proposer", p.proposer},
          {"confirmer", p.confirmer ? nlohmann::json(*p.confirmer) : nlohmann::json(nullptr)},
          {"state", to_string(p.state)},
          {"proposed_at", p.proposed_at},
          {"rules", p.catalog.rules.size()},
          {"policies", p.catalog.policies.size()},
          {"installed_version", p.installed_version}};
}

Verifier::Verifier(Ledger& ledger, const Clock& clock, std::vector<TrustedPrincipal> principals,
                   std::optional<Millis> default_ttl, VerifierHooks hooks)
    : ledger_(ledger), clock_(clock), principals_(std::move(principals)), default_ttl_(default_ttl), hooks_(std::move(hooks)) {
  for (std::size_t i = 0; i < principals_.size(); ++i)
    for (std::size_t j = i + 1; j < principals_.size(); ++j)
      if (principals_[i].bearer_token == principals_[j].bearer_token)
        throw Error(ErrorCode::ConfigParse, "bearer tokens must be unique");
}

const TrustedPrincipal& Verifier::authenticate(std::string_view token) const {
  if (!token.empty()) {
    for (const auto& p : principals_)
      if (p.bearer_token.size() == token.size() && CRYPTO_memcmp(p.bearer_token.data(), token.data(), token.size()) == 0)
        return p;
  }
  throw Error(ErrorCode::Unauthorized, "unknown or missing bearer token");
}

std::string Verifier::enqueue(const Transaction& tx, const Verdict& verdict, SnapshotSummary summary) {
  if (verdict.outcome != Outcome::Suspicious || verdict.tx_id != tx.tx_id)
    throw Error(ErrorCode::PreconditionViolated, "only Suspicious verdicts can be queued for verification");
  if (ledger_.status_of(tx.tx_id) != TxStatus::Suspicious)
    throw Error(ErrorCode::PreconditionViolated, tx.tx_id + " is not in Suspicious status");
  std::lock_guard lock(mu_);
  if (by_tx_.contains(tx.tx_id)) throw Error(ErrorCode::DuplicatePending, tx.tx_id);
  PendingVerification p;
  p.pending_id = fmt::format("p-{:06}", next_pending_++);
  p.tx_id = tx.tx_id;
  p.tx = tx;
  p.tx.status = TxStatus::Suspicious;
  p.reasons = verdict.reasons;
  p.findings = verdict.findings;
  p.snapshot = std::move(summary);
  p.enqueued_at = clock_.now_ms();
  p.ttl = default_ttl_;
  by_tx_[p.tx_id] = p.pending_id;
  auto id = p.pending_id;
  pending_.emplace(id, std::move(p));
  return id;
}

void Verifier::expire_locked(PendingVerification& p) {
  p.expired = true;
  ledger_.transition(p.tx_id, TxStatus::Expired, TxStatus::Suspicious);
  ledger_.record_rejection(p.tx_id);
  p.tx.status = TxStatus::Expired;
}

DecisionOutcome Verifier::decide(const std::string& pending_id, std::string_view token, Decision decision) {
  const TrustedPrincipal& principal = authenticate(token);
  Transaction tx;
  bool newly_expired = false;
  {
    std::lock_guard lock(mu_);
    auto it = pending_.find(pending_id);
    if (it == pending_.end()) throw Error(ErrorCode::UnknownPending, pending_id);
    auto& p = it->second;
    if (p.decision) throw Error(ErrorCode::AlreadyDecided, pending_id + " was decided by " + p.decision->principal_id);
    if (p.expired) throw Error(ErrorCode::Expired, pending_id);
    const Millis now = clock_.now_ms();
    if (p.ttl && now - p.enqueued_at > *p.ttl) {
      expire_locked(p);
      newly_expired = true;
      tx = p.tx;
    } else {
      const TxStatus to = decision == Decision::Approve ? TxStatus::Approved : TxStatus::Rejected;
      ledger_.transition(p.tx_id, to, TxStatus::Suspicious);
      p.decision = DecisionRecord{principal.principal_id, decision, now};
      p.tx.status = to;
      tx = p.tx;
    }
  }
  if (newly_expired) {
    if (hooks_.on_closed) hooks_.on_closed(tx, PolicyTrigger::OnExpired);
    throw Error(ErrorCode::Expired, pending_id);
  }

  DecisionOutcome out{pending_id, tx.tx_id, decision, principal.principal_id, tx.status};
  if (decision == Decision::Approve) {
    if (hooks_.on_approved) hooks_.on_approved(tx);
  } else {
    record_rejection(tx);
    if (hooks_.on_closed) hooks_.on_closed(tx, PolicyTrigger::OnRejected);
  }
  out.status = ledger_.status_of(tx.tx_id).value_or(tx.status);
  return out;
}

void Verifier::record_rejection(const Transaction& tx) {
  if (!is_rejection(tx.status)) throw Error(ErrorCode::PreconditionViolated, tx.tx_id + " is not Rejected");
  ledger_.record_rejection(tx.tx_id);
}

std::vector<std::string> Verifier::expire_pending(Millis now) {
  std::vector<Transaction> closed;
  std::vector<std::string> ids;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, p] : pending_) {
      if (p.state() != PendingState::Awaiting || !p.ttl) continue;
      if (now - p.enqueued_at <= *p.ttl) continue;
      expire_locked(p);
      ids.push_back(id);
      closed.push_back(p.tx);
    }
  }
  if (hooks_.on_closed)
    for (const auto& tx : closed) hooks_.on_closed(tx, PolicyTrigger::OnExpired);
  return ids;
}

std::vector<PendingVerification> Verifier::list() const {
  std::lock_guard lock(mu_);
  std::vector<PendingVerification> out;
  for (const auto& [id, p] : pending_) out.push_back(p);
  return out;
}

std::optional<PendingVerification> Verifier::get(const std::string& pending_id) const {
  std::lock_guard lock(mu_);
  auto it = pending_.find(pending_id);
  if (it == pending_.end()) return std::nullopt;
  return it->second;
}

std::optional<PendingVerification> Verifier::find_by_tx(const std::string& tx_id) const {
  std::lock_guard lock(mu_);
  auto it = by_tx_.find(tx_id);
  if (it == by_tx_.end()) return std::nullopt;
  return pending_.at(it->second);
}

ICUpdateProposal Verifier::propose_icontract_update(const nlohmann::json& catalog, std::string_view token) {
  const auto& principal = authenticate(token);
  if (!principal.can_update_icontracts)
    throw Error(ErrorCode::Unauthorized, principal.principal_id + " may not update iContracts");
  ICUpdateProposal p;
  try {
    p.catalog = parse_catalog(catalog);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidCatalog, e.what());
  }
  p.proposer = principal.principal_id;
  p.proposed_at = clock_.now_ms();
  std::lock_guard lock(proposals_mu_);
  p.proposal_id = fmt::format("icp-{:04}", next_proposal_++);
  proposals_[p.proposal_id] = p;
  return p;
}

ICUpdateProposal Verifier::confirm_icontract_update(const std::string& proposal_id, std::string_view token) {
  const auto& principal = authenticate(token);
  std::lock_guard lock(proposals_mu_);
  auto it = proposals_.find(proposal_id);
  if (it == proposals_.end()) throw Error(ErrorCode::UnknownProposal, proposal_id);
  auto& p = it->second;
  if (p.state != ProposalState::Proposed) throw Error(ErrorCode::ProposalClosed, proposal_id + " is " + std::string(to_string(p.state)));
  if (!principal.can_update_icontracts)
    throw Error(ErrorCode::Unauthorized, principal.principal_id + " may not update iContracts");
  if (principal.principal_id == p.proposer) throw Error(ErrorCode::SelfConfirm, "confirmer must differ from proposer");
  p.confirmer = principal.principal_id;
  p.installed_version = hooks_.install_catalog ? hooks_.install_catalog(p.catalog) : p.catalog.version;
  p.state = ProposalState::Committed;
  return p;
}

ICUpdateProposal Verifier::abort_icontract_update(const std::string& proposal_id, std::string_view token) {
  const auto& principal = authenticate(token);
  std::lock_guard lock(proposals_mu_);
  auto it = proposals_.find(proposal_id);
  if (it == proposals_.end()) throw Error(ErrorCode::UnknownProposal, proposal_id);
  auto& p = it->second;
  if (p.state != ProposalState::Proposed) throw Error(ErrorCode::ProposalClosed, proposal_id);
  if (!principal.can_update_icontracts)
    throw Error(ErrorCode::Unauthorized, principal.principal_id + " may not update iContracts");
  p.state = ProposalState::Aborted;
  return p;
}

std::vector<ICUpdateProposal> Verifier::proposals() const {
  std::lock_guard lock(proposals_mu_);
  std::vector<ICUpdateProposal> out;
  for (const auto& [id, p] : proposals_) out.push_back(p);
  return out;
}

}  // namespace provguard
