#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "provguard/evaluator.hpp"
#include "provguard/ledger.hpp"
#include "provguard/rules.hpp"

namespace provguard {

struct TrustedPrincipal {
  std::string principal_id;
  std::string bearer_token;
  bool can_update_icontracts = false;
};

enum class Decision { Approve, Revoke };
std::string_view to_string(Decision d);
std::optional<Decision> parse_decision(std::string_view s);

struct SnapshotSummary {
  std::size_t groups = 0;
  std::size_t entries = 0;
  std::vector<PhysicalReading> physical;
  Millis built_at = 0;

  static SnapshotSummary of(const ContextSnapshot& s);
};

struct DecisionRecord {
  std::string principal_id;
  Decision decision = Decision::Approve;
  Millis decided_at = 0;
};

enum class PendingState { Awaiting, Decided, Expired };
std::string_view to_string(PendingState s);

struct PendingVerification {
  std::string pending_id;
  std::string tx_id;
  Transaction tx;
  std::vector<std::string> reasons;
  std::vector<std::string> findings;
  SnapshotSummary snapshot;
  Millis enqueued_at = 0;
  std::optional<Millis> ttl;  // nullopt: never expires
  std::optional<DecisionRecord> decision;
  bool expired = false;

  PendingState state() const;
};

nlohmann::json to_json(const PendingVerification& p);

struct DecisionOutcome {
  std::string pending_id;
  std::string tx_id;
  Decision decision = Decision::Approve;
  std::string principal_id;
  TxStatus status = TxStatus::Suspicious;  // after any forwarding
};

enum class ProposalState { Proposed, Committed, Aborted };
std::string_view to_string(ProposalState s);

struct ICUpdateProposal {
  std::string proposal_id;
  Catalog catalog;
  std::string proposer;
  std::optional<std::string> confirmer;
  ProposalState state = ProposalState::Proposed;
  Millis proposed_at = 0;
  std::uint64_t installed_version = 0;
};

nlohmann::json to_json(const ICUpdateProposal& p);

struct VerifierHooks {
  /// Receives transactions whose Approve decision was recorded.
  std::function<void(const Transaction&)> on_approved;
  /// Receives Rejected/Expired transactions after rejection feedback.
  std::function<void(const Transaction&, PolicyTrigger)> on_closed;
  /// Installs a committed catalog, returns its version.
  std::function<std::uint64_t(Catalog)> install_catalog;
};

/// Human side of the pipeline. Suspicious transactions wait here until a
/// trusted principal approves or revokes them; the first decision wins and
/// is immutable. Catalog updates need a proposer and a distinct confirmer,
/// both allowed to update.
class Verifier {
 public:
  Verifier(Ledger& ledger, const Clock& clock, std::vector<TrustedPrincipal> principals,
           std::optional<Millis> default_ttl = std::nullopt, VerifierHooks hooks = {});

  std::string enqueue(const Transaction& tx, const Verdict& verdict, SnapshotSummary summary);

  /// Throws Unauthorized, UnknownPending, AlreadyDecided, Expired.
  DecisionOutcome decide(const std::string& pending_id, std::string_view token, Decision decision);

  /// Feeds a Rejected/Expired transaction back into the ledger's provenance.
  void record_rejection(const Transaction& tx);

  std::vector<std::string> expire_pending(Millis now);

  std::vector<PendingVerification> list() const;
  std::optional<PendingVerification> get(const std::string& pending_id) const;
  std::optional<PendingVerification> find_by_tx(const std::string& tx_id) const;

  const TrustedPrincipal& authenticate(std::string_view token) const;

  /// Throws Unauthorized, InvalidCatalog.
  ICUpdateProposal propose_icontract_update(const nlohmann::json& catalog, std::string_view token);
  /// Throws Unauthorized, UnknownProposal, ProposalClosed, SelfConfirm.
  ICUpdateProposal confirm_icontract_update(const std::string& proposal_id, std::string_view token);
  ICUpdateProposal abort_icontract_update(const std::string& proposal_id, std::string_view token);
  std::vector<ICUpdateProposal> proposals() const;

 private:
  void expire_locked(PendingVerification& p);

  Ledger& ledger_;
  const Clock& clock_;
  std::vector<TrustedPrincipal> principals_;
  std::optional<Millis> default_ttl_;
  VerifierHooks hooks_;

  mutable std::mutex mu_;
  std::map<std::string, PendingVerification> pending_;
  std::map<std::string, std::string> by_tx_;
  std::uint64_t next_pending_ = 1;

  mutable std::mutex proposals_mu_;
  std::map<std::string, ICUpdateProposal> proposals_;
  std::uint64_t next_proposal_ = 1;
};

}  // namespace provguard
