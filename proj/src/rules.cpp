#include "provguard/rules.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>

namespace provguard {

namespace {

using nlohmann::json;

[[noreturn]] void parse_error(const std::string& what) { throw Error(ErrorCode::ConfigParse, what); }

constexpr std::pair<std::string_view, Condition::Op> kOps[] = {
    {"all", Condition::Op::All}, {"any", Condition::Op::Any}, {"not", Condition::Op::Not},
    {"const", Condition::Op::Const}, {"eq", Condition::Op::Eq}, {"ne", Condition::Op::Ne},
    {"lt", Condition::Op::Lt}, {"le", Condition::Op::Le}, {"gt", Condition::Op::Gt},
    {"ge", Condition::Op::Ge}, {"in", Condition::Op::In}, {"exists", Condition::Op::Exists},
};

std::string_view op_name(Condition::Op op) {
  for (const auto& [name, o] : kOps)
    if (o == op) return name;
  return "?";
}

bool valid_field(const std::string& path) {
  static const std::set<std::string> fixed = {
      "tx.tx_id", "tx.device_id", "tx.kind", "tx.issuer", "physical.newest_age_ms",
      "context.registered_devices", "context.sensor_count", "context.provenance_count"};
  if (fixed.contains(path)) return true;
  if (path.starts_with("tx.param.") && path.size() > 9) return true;
  if (path.starts_with("physical.")) return parse_quantity(path.substr(9)).has_value();
  return false;
}

Operand parse_operand(const json& j) {
  Operand o;
  if (j.is_string()) {
    auto s = j.get<std::string>();
    if (s.starts_with('$')) {
      o.kind = Operand::Kind::Field;
      o.text = s.substr(1);
      if (!valid_field(o.text)) parse_error("unknown field $" + o.text);
    } else {
      o.kind = Operand::Kind::String;
      o.text = std::move(s);
    }
  } else if (j.is_number()) {
    o.kind = Operand::Kind::Number;
    o.number = j.get<double>();
  } else if (j.is_array()) {
    o.kind = Operand::Kind::List;
    for (const auto& e : j) {
      if (!e.is_string()) parse_error("list literals hold strings only");
      o.list.push_back(e.get<std::string>());
    }
  } else {
    parse_error("operand must be a string, number or array");
  }
  return o;
}

json operand_json(const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::Field: return "$" + o.text;
    case Operand::Kind::String: return o.text;
    case Operand::Kind::Number: return o.number;
    case Operand::Kind::List: return o.list;
  }
  return nullptr;
}

// Resolved operand value; monostate means absent.
using Value = std::variant<std::monostate, std::string, double, std::vector<std::string>>;

std::optional<double> as_number(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* s = std::get_if<std::string>(&v)) {
    const char* begin = s->c_str();
    char* end = nullptr;
    const double d = std::strtod(begin, &end);
    if (end != begin) return d;
  }
  return std::nullopt;
}

const PhysicalReading* newest(const ContextSnapshot& s, std::optional<Quantity> q) {
  const PhysicalReading* best = nullptr;
  for (const auto& r : s.physical) {
    if (q ? r.quantity != *q : r.quantity == Quantity::Datetime) continue;
    if (!best || r.observed_at > best->observed_at) best = &r;
  }
  return best;
}

Value resolve(const Operand& o, const Transaction& tx, const ContextSnapshot& s) {
  switch (o.kind) {
    case Operand::Kind::String: return o.text;
    case Operand::Kind::Number: return o.number;
    case Operand::Kind::List: return o.list;
    case Operand::Kind::Field: break;
  }
  const std::string& f = o.text;
  if (f == "tx.tx_id") return tx.tx_id;
  if (f == "tx.device_id") return tx.device_id;
  if (f == "tx.kind") return std::string(to_string(tx.kind));
  if (f == "tx.issuer") return tx.issuer;
  if (f.starts_with("tx.param.")) {
    auto it = tx.params.find(f.substr(9));
    if (it == tx.params.end()) return std::monostate{};
    return it->second;
  }
  if (f == "physical.newest_age_ms") {
    const auto* r = newest(s, std::nullopt);
    if (!r) return std::monostate{};
    return static_cast<double>(s.built_at - r->observed_at);
  }
  if (f.starts_with("physical.")) {
    const auto* r = newest(s, parse_quantity(f.substr(9)));
    if (!r) return std::monostate{};
    return r->value;
  }
  if (f == "context.registered_devices") return s.registered_devices;
  if (f == "context.sensor_count") return static_cast<double>(s.registered_sensors);
  if (f == "context.provenance_count") return static_cast<double>(s.entry_count());
  return std::monostate{};
}

bool is_numeric_literal(const Operand& o) { return o.kind == Operand::Kind::Number; }

bool compare(Condition::Op op, const Operand& lo, const Operand& ro, const Value& l, const Value& r) {
  if (std::holds_alternative<std::monostate>(l) || std::holds_alternative<std::monostate>(r))
    return op == Condition::Op::Ne && !(std::holds_alternative<std::monostate>(l) && std::holds_alternative<std::monostate>(r));
  const bool numeric = op != Condition::Op::Eq && op != Condition::Op::Ne
                           ? true
                           : is_numeric_literal(lo) || is_numeric_literal(ro) ||
                                 (std::holds_alternative<double>(l) && std::holds_alternative<double>(r));
  if (numeric) {
    const auto a = as_number(l);
    const auto b = as_number(r);
    if (!a || !b) return op == Condition::Op::Ne;
    switch (op) {
      case Condition::Op::Eq: return *a == *b;
      case Condition::Op::Ne: return *a != *b;
      case Condition::Op::Lt: return *a < *b;
      case Condition::Op::Le: return *a <= *b;
      case Condition::Op::Gt: return *a > *b;
      case Condition::Op::Ge: return *a >= *b;
      default: return false;
    }
  }
  const bool equal = l == r;
  return op == Condition::Op::Eq ? equal : !equal;
}

}  // namespace

Condition parse_condition(const json& j) {
  if (!j.is_object() || j.size() != 1) parse_error("condition must be an object with exactly one operator");
  const auto& [key, arg] = *j.items().begin();
  Condition c;
  auto found = std::find_if(std::begin(kOps), std::end(kOps), [&](const auto& p) { return p.first == key; });
  if (found == std::end(kOps)) parse_error("unknown operator '" + key + "'");
  c.op = found->second;
  switch (c.op) {
    case Condition::Op::All:
    case Condition::Op::Any:
      if (!arg.is_array()) parse_error(key + " takes an array of conditions");
      for (const auto& child : arg) c.children.push_back(parse_condition(child));
      break;
    case Condition::Op::Not: c.children.push_back(parse_condition(arg)); break;
    case Condition::Op::Const:
      if (!arg.is_boolean()) parse_error("const takes a boolean");
      c.constant = arg.get<bool>();
      break;
    case Condition::Op::Exists:
      c.operands.push_back(parse_operand(arg));
      if (c.operands[0].kind != Operand::Kind::Field) parse_error("exists takes a field");
      break;
    default:
      if (!arg.is_array() || arg.size() != 2) parse_error(key + " takes [operand, operand]");
      c.operands.push_back(parse_operand(arg[0]));
      c.operands.push_back(parse_operand(arg[1]));
      break;
  }
  return c;
}

json to_json(const Condition& c) {
  const std::string key(op_name(c.op));
  switch (c.op) {
    case Condition::Op::All:
    case Condition::Op::Any: {
      json children = json::array();
      for (const auto& child : c.children) children.push_back(to_json(child));
      return {{key, children}};
    }
    case Condition::Op::Not: return {{key, to_json(c.children.at(0))}};
    case Condition::Op::Const: return {{key, c.constant}};
    case Condition::Op::Exists: return {{key, operand_json(c.operands.at(0))}};
    default: return {{key, json::array({operand_json(c.operands.at(0)), operand_json(c.operands.at(1))})}};
  }
}

bool evaluate_condition(const Condition& c, const Transaction& tx, const ContextSnapshot& s) {
  switch (c.op) {
    case Condition::Op::All:
      return std::all_of(c.children.begin(), c.children.end(), [&](const Condition& ch) { return evaluate_condition(ch, tx, s); });
    case Condition::Op::Any:
      return std::any_of(c.children.begin(), c.children.end(), [&](const Condition& ch) { return evaluate_condition(ch, tx, s); });
    case Condition::Op::Not: return !evaluate_condition(c.children.at(0), tx, s);
    case Condition::Op::Const: return c.constant;
    case Condition::Op::Exists: return !std::holds_alternative<std::monostate>(resolve(c.operands[0], tx, s));
    case Condition::Op::In: {
      const Value l = resolve(c.operands[0], tx, s);
      const Value r = resolve(c.operands[1], tx, s);
      const auto* needle = std::get_if<std::string>(&l);
      const auto* hay = std::get_if<std::vector<std::string>>(&r);
      return needle && hay && std::find(hay->begin(), hay->end(), *needle) != hay->end();
    }
    default: {
      const Value l = resolve(c.operands[0], tx, s);
      const Value r = resolve(c.operands[1], tx, s);
      return compare(c.op, c.operands[0], c.operands[1], l, r);
    }
  }
}

std::string_view to_string(PolicyTrigger t) {
  switch (t) {
    case PolicyTrigger::OnSuspicious: return "OnSuspicious";
    case PolicyTrigger::OnApproved: return "OnApproved";
    case PolicyTrigger::OnRejected: return "OnRejected";
    case PolicyTrigger::OnExpired: return "OnExpired";
  }
  return "?";
}

std::string_view to_string(PolicyAction a) {
  switch (a) {
    case PolicyAction::Quarantine: return "Quarantine";
    case PolicyAction::Notify: return "Notify";
    case PolicyAction::Log: return "Log";
    case PolicyAction::EscalateToVerifier: return "EscalateToVerifier";
  }
  return "?";
}

namespace {

template <typename E, std::size_t N>
E parse_enum(const json& j, const E (&values)[N], const char* what) {
  if (!j.is_string()) parse_error(std::string(what) + " must be a string");
  const auto s = j.get<std::string>();
  for (auto v : values)
    if (to_string(v) == s) return v;
  parse_error(std::string("unknown ") + what + " '" + s + "'");
}

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      parse_error("unknown key '" + key + "' in " + where);
}

const json& required(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) parse_error(std::string("missing '") + key + "' in " + where);
  return *it;
}

}  // namespace

Catalog parse_catalog(const json& j) {
  if (!j.is_object()) parse_error("catalog must be an object");
  reject_unknown_keys(j, {"version", "rules", "policies"}, "catalog");
  Catalog c;
  if (auto it = j.find("version"); it != j.end()) {
    if (!it->is_number_unsigned()) parse_error("version must be a non-negative integer");
    c.version = it->get<std::uint64_t>();
  }
  std::set<std::string> ids;
  try {
    for (const auto& r : required(j, "rules", "catalog")) {
      if (!r.is_object()) parse_error("rule must be an object");
      reject_unknown_keys(r, {"rule_id", "description", "enabled", "predicate", "on_fail_reason"}, "rule");
      Rule rule;
      rule.rule_id = required(r, "rule_id", "rule").get<std::string>();
      rule.description = r.value("description", "");
      rule.enabled = r.value("enabled", true);
      rule.predicate = parse_condition(required(r, "predicate", "rule " + rule.rule_id));
      rule.on_fail_reason = r.value("on_fail_reason", rule.rule_id);
      if (rule.rule_id.empty() || !ids.insert("rule:" + rule.rule_id).second)
        parse_error("empty or duplicate rule_id '" + rule.rule_id + "'");
      c.rules.push_back(std::move(rule));
    }
    constexpr PolicyTrigger triggers[] = {PolicyTrigger::OnSuspicious, PolicyTrigger::OnApproved,
                                          PolicyTrigger::OnRejected, PolicyTrigger::OnExpired};
    constexpr PolicyAction actions[] = {PolicyAction::Quarantine, PolicyAction::Notify, PolicyAction::Log,
                                        PolicyAction::EscalateToVerifier};
    if (auto it = j.find("policies"); it != j.end()) {
      for (const auto& p : *it) {
        if (!p.is_object()) parse_error("policy must be an object");
        reject_unknown_keys(p, {"policy_id", "trigger", "action"}, "policy");
        Policy policy;
        policy.policy_id = required(p, "policy_id", "policy").get<std::string>();
        policy.trigger = parse_enum(required(p, "trigger", "policy"), triggers, "trigger");
        policy.action = parse_enum(required(p, "action", "policy"), actions, "action");
        if (policy.policy_id.empty() || !ids.insert("policy:" + policy.policy_id).second)
          parse_error("empty or duplicate policy_id '" + policy.policy_id + "'");
        c.policies.push_back(std::move(policy));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    parse_error(e.what());
  }
  return c;
}

json to_json(const Catalog& c) {
  json rules = json::array();
  for (const auto& r : c.rules)
    rules.push_back({{"rule_id", r.rule_id},
                     {"description", r.description},
                     {"enabled", r.enabled},
                     {"predicate", to_json(r.predicate)},
                     {"on_fail_reason", r.on_fail_reason}});
  json policies = json::array();
  for (const auto& p : c.policies)
    policies.push_back({{"policy_id", p.policy_id}, {"trigger", to_string(p.trigger)}, {"action", to_string(p.action)}});
  return {{"version", c.version}, {"rules", rules}, {"policies", policies}};
}

const json& default_catalog_json() {
  static const json catalog = json::parse(R"({
  "version": 1,
  "rules": [
    {
      "rule_id": "unknown-protocol",
      "description": "Execution of communication protocols that are not registered",
      "enabled": true,
      "predicate": {"any": [{"not": {"exists": "$tx.param.proto"}},
                            {"in": ["$tx.param.proto", ["coap", "http"]]}]},
      "on_fail_reason": "unknown-protocol"
    },
    {
      "rule_id": "delayed-streaming",
      "description": "Sensor data arriving later than 2 s",
      "enabled": true,
      "predicate": {"any": [{"eq": ["$context.sensor_count", 0]},
                            {"le": ["$physical.newest_age_ms", 2000]}]},
      "on_fail_reason": "delayed-streaming"
    },
    {
      "rule_id": "unregistered-device",
      "description": "Target device is not part of the registered fleet",
      "enabled": true,
      "predicate": {"in": ["$tx.device_id", "$context.registered_devices"]},
      "on_fail_reason": "unregistered-device"
    },
    {
      "rule_id": "unauthorized-kind-for-issuer",
      "description": "Firmware and actuator operations require a maintainer issuer",
      "enabled": true,
      "predicate": {"any": [{"in": ["$tx.kind", ["Read", "ConfigUpdate"]]},
                            {"in": ["$tx.issuer", ["maintainer"]]}]},
      "on_fail_reason": "unauthorized-kind-for-issuer"
    }
  ],
  "policies": [
    {"policy_id": "escalate-suspicious", "trigger": "OnSuspicious", "action": "EscalateToVerifier"},
    {"policy_id": "log-suspicious", "trigger": "OnSuspicious", "action": "Log"},
    {"policy_id": "log-approved", "trigger": "OnApproved", "action": "Log"},
    {"policy_id": "log-rejected", "trigger": "OnRejected", "action": "Log"},
    {"policy_id": "log-expired", "trigger": "OnExpired", "action": "Log"}
  ]
})");
  return catalog;
}

Catalog load_rule_catalog(const std::string& path) {
  if (path.empty()) return parse_catalog(default_catalog_json());
  std::ifstream in(path);
  if (!in) parse_error("cannot open catalog file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    parse_error(e.what());
  }
  return parse_catalog(j);
}

}  // namespace provguard
