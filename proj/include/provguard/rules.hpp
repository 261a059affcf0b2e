#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "provguard/context.hpp"
#include "provguard/transaction.hpp"

namespace provguard {

// Condition grammar (JSON):
//
//   {"all": [c, ...]}   {"any": [c, ...]}   {"not": c}   {"const": bool}
//   {"eq"|"ne"|"lt"|"le"|"gt"|"ge": [operand, operand]}
//   {"in": [operand, operand]}        left value is a member of right list
//   {"exists": operand}
//
// Operands: strings beginning with '$' name a field, any other JSON scalar
// or array is a literal. Fields:
//
//   $tx.tx_id  $tx.device_id  $tx.kind  $tx.issuer  $tx.param.<key>
//   $physical.<quantity>          value of the newest reading of that quantity
//   $physical.newest_age_ms       built_at minus the newest non-datetime reading
//   $context.registered_devices   list
//   $context.sensor_count  $context.provenance_count

struct Operand {
  enum class Kind { Field, String, Number, List };
  Kind kind = Kind::String;
  std::string text;  // field path or string literal
  double number = 0;
  std::vector<std::string> list;
};

struct Condition {
  enum class Op { All, Any, Not, Const, Eq, Ne, Lt, Le, Gt, Ge, In, Exists };
  Op op = Op::Const;
  bool constant = true;
  std::vector<Condition> children;
  std::vector<Operand> operands;
};

/// Parses and validates a condition tree. Throws ConfigParse.
Condition parse_condition(const nlohmann::json& j);
nlohmann::json to_json(const Condition& c);

/// Total and side-effect free.
bool evaluate_condition(const Condition& c, const Transaction& tx, const ContextSnapshot& snapshot);

struct Rule {
  std::string rule_id;
  std::string description;
  bool enabled = true;
  Condition predicate;  // must hold for the transaction to pass
  std::string on_fail_reason;
};

enum class PolicyTrigger { OnSuspicious, OnApproved, OnRejected, OnExpired };
enum class PolicyAction { Quarantine, Notify, Log, EscalateToVerifier };

std::string_view to_string(PolicyTrigger t);
std::string_view to_string(PolicyAction a);

struct Policy {
  std::string policy_id;
  PolicyTrigger trigger = PolicyTrigger::OnSuspicious;
  PolicyAction action = PolicyAction::Log;
};

struct Catalog {
  std::uint64_t version = 1;
  std::vector<Rule> rules;
  std::vector<Policy> policies;
};

/// Throws ConfigParse on any schema violation, unknown key or duplicate id.
Catalog parse_catalog(const nlohmann::json& j);
nlohmann::json to_json(const Catalog& c);

/// The built-in catalog: unknown-protocol, delayed-streaming,
/// unregistered-device and unauthorized-kind-for-issuer rules plus the
/// default escalate/log policies.
const nlohmann::json& default_catalog_json();

/// Loads the built-in catalog, or the file at `path` when non-empty.
Catalog load_rule_catalog(const std::string& path = {});

}  // namespace provguard
