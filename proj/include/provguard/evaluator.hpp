#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "provguard/context.hpp"
#include "provguard/ledger.hpp"
#include "provguard/rules.hpp"

namespace provguard {

inline constexpr std::string_view kReasonUnseenTemplate = "unseen-template";
inline constexpr std::string_view kReasonStaleContext = "stale-context";

enum class Outcome { Approved, Suspicious };
std::string_view to_string(Outcome o);

struct EvaluatorSettings {
  Millis max_snapshot_age = 10'000;
  /// How many legitimizing provenance entries a template needs.
  std::size_t min_provenance_count = 1;
};

struct Verdict {
  std::string tx_id;
  Outcome outcome = Outcome::Approved;
  std::vector<std::string> reasons;  // empty iff Approved
  /// Second-phase context verification notes, produced only when suspicious.
  std::vector<std::string> findings;
  Millis evaluated_at = 0;
  std::uint64_t catalog_version = 0;

  // Timing, excluded from equality.
  std::vector<double> per_input_read_micros;
  double analysis_micros = 0;

  double mean_read_micros() const;
  bool same_decision(const Verdict& o) const {
    return tx_id == o.tx_id && outcome == o.outcome && reasons == o.reasons && findings == o.findings &&
           evaluated_at == o.evaluated_at && catalog_version == o.catalog_version;
  }
};

/// Pure in its arguments apart from the timing fields. Requires tx.status ==
/// Mined.
///
/// Suspicious iff any of:
///  - the transaction's template has fewer than min_provenance_count
///    legitimizing (Approved/Executed) provenance entries and is not seeded;
///  - now - snapshot.built_at > max_snapshot_age;
///  - an enabled rule's predicate does not hold.
Verdict evaluate(const Transaction& tx, const ContextSnapshot& snapshot, const Catalog& catalog,
                 const EvaluatorSettings& settings, Millis now);

/// Actions of every policy whose trigger matches, in registration order.
/// A Suspicious outcome always includes EscalateToVerifier.
std::vector<PolicyAction> apply_policies(const Verdict& verdict, const std::vector<Policy>& policies);
std::vector<PolicyAction> apply_policies(PolicyTrigger trigger, const std::vector<Policy>& policies);

enum class Destination { Executor, Verifier };
std::string_view to_string(Destination d);

/// Mined->Approved (Executor) or Mined->Suspicious (Verifier) in the
/// ledger's lifecycle store. Throws StatusConflict if already routed.
Destination route(const Verdict& verdict, const Transaction& tx, Ledger& ledger);

/// Holds the active catalog. Each evaluation pins one catalog version for
/// its whole duration; install() swaps atomically for later evaluations.
class Evaluator {
 public:
  Evaluator(Catalog catalog, EvaluatorSettings settings);

  Verdict evaluate(const Transaction& tx, const ContextSnapshot& snapshot, Millis now) const;
  std::shared_ptr<const Catalog> catalog() const;
  /// Assigns the next version number and returns it.
  std::uint64_t install(Catalog catalog);
  const EvaluatorSettings& settings() const { return settings_; }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const Catalog> catalog_;
  EvaluatorSettings settings_;
};

}  // namespace provguard
