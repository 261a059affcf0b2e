#include "provguard/http_api.hpp"

#include <httplib.h>

#include <thread>

namespace provguard {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownDeviceKindCombination:
    case ErrorCode::ConfigParse:
    case ErrorCode::InvalidCatalog:
    case ErrorCode::TokenTooLong:
    case ErrorCode::OptionTooLong:
    case ErrorCode::Truncated:
    case ErrorCode::BadVersion:
    case ErrorCode::ReservedTKL:
    case ErrorCode::PayloadMarkerWithoutPayload:
    case ErrorCode::MalformedOption:
    case ErrorCode::UnsupportedKind: return 400;
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::SelfConfirm:
    case ErrorCode::NotApproved: return 403;
    case ErrorCode::UnknownTransaction:
    case ErrorCode::UnknownPending:
    case ErrorCode::UnknownProposal:
    case ErrorCode::UnknownDevice: return 404;
    case ErrorCode::DuplicateTxId:
    case ErrorCode::DuplicatePending:
    case ErrorCode::DuplicateDevice:
    case ErrorCode::StatusConflict:
    case ErrorCode::AlreadyDecided:
    case ErrorCode::ProposalClosed:
    case ErrorCode::MiningModeAuto:
    case ErrorCode::EmptyPool:
    case ErrorCode::Expired:
    case ErrorCode::PreconditionViolated: return 409;
    case ErrorCode::LedgerUnavailable:
    case ErrorCode::Timeout:
    case ErrorCode::TransportError: return 503;
    case ErrorCode::ScenarioAssertionFailed:
    case ErrorCode::EmptyRecords: return 500;
  }
  return 500;
}

json error_body(ErrorCode code, std::string_view message) {
  return {{"error", {{"code", error_code_name(code)}, {"message", message}}}};
}

json to_json(const Transaction& tx) {
  return {{"tx_id", tx.tx_id},
          {"device_id", tx.device_id},
          {"kind", to_string(tx.kind)},
          {"params", tx.params},
          {"issuer", tx.issuer},
          {"submitted_at", tx.submitted_at},
          {"status", to_string(tx.status)}};
}

json to_json(const LocatedTx& tx) {
  json j = to_json(tx.tx);
  j["block_index"] = tx.block_index;
  return j;
}

json to_json(const Block& b) {
  json txs = json::array();
  for (const auto& tx : b.transactions) txs.push_back(tx.tx_id);
  return {{"index", b.index},
          {"prev_hash", to_hex(b.prev_hash)},
          {"nonce", b.nonce},
          {"difficulty", b.difficulty},
          {"miner_id", b.miner_id},
          {"timestamp", b.timestamp},
          {"hash", to_hex(b.hash)},
          {"transactions", txs}};
}

json to_json(const ValidationReport& r) {
  return {{"valid", r.valid},
          {"first_bad_index", r.first_bad_index ? json(*r.first_bad_index) : json(nullptr)},
          {"reason", to_string(r.reason)},
          {"detail", r.detail}};
}

Transaction transaction_from_json(const json& j) {
  auto bad = [](const std::string& m) { return Error(ErrorCode::InvalidArgument, m); };
  if (!j.is_object()) throw bad("transaction must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (key != "tx_id" && key != "device_id" && key != "kind" && key != "params" && key != "issuer" && key != "submitted_at")
      throw bad("unknown key '" + key + "'");
  Transaction tx;
  auto str = [&](const char* key) -> std::string {
    if (!j.contains(key)) return {};
    if (!j[key].is_string()) throw bad(std::string(key) + " must be a string");
    return j[key].get<std::string>();
  };
  tx.tx_id = str("tx_id");
  tx.device_id = str("device_id");
  tx.issuer = str("issuer");
  const auto kind = parse_kind(str("kind"));
  if (!kind) throw bad("kind must be one of Read, ConfigUpdate, FirmwareUpdate, ActuatorCommand");
  tx.kind = *kind;
  if (j.contains("params")) {
    if (!j["params"].is_object()) throw bad("params must be an object of strings");
    for (const auto& [k, v] : j["params"].items()) {
      if (!v.is_string()) throw bad("param " + k + " must be a string");
      tx.params[k] = v.get<std::string>();
    }
  }
  if (j.contains("submitted_at")) {
    if (!j["submitted_at"].is_number_integer()) throw bad("submitted_at must be an integer");
    tx.submitted_at = j["submitted_at"].get<Millis>();
  }
  return tx;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, std::string_view message, std::optional<int> status = {}) {
  send_json(res, status.value_or(http_status(code)), error_body(code, message));
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("request body is not JSON: ") + e.what());
  }
}

std::string bearer_token(const httplib::Request& req) {
  const auto header = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0) return {};
  return header.substr(prefix.size());
}

std::optional<std::string> query(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

}  // namespace

struct HttpApi::Impl {
  Gateway& gw;
  httplib::Server server;
  std::thread thread;

  explicit Impl(Gateway& g) : gw(g) { routes(); }

  // Runs a handler, translating module errors into the error body.
  template <typename F>
  auto guarded(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e.code(), e.what());
      }
    };
  }

  // Authenticates first so an unknown token is 401 and a known one that
  // lacks the right is 403.
  const TrustedPrincipal& principal(const httplib::Request& req) const {
    return gw.verifier().authenticate(bearer_token(req));
  }

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string message = "unexpected failure";
      try {
        if (ep) std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        message = e.what();
      } catch (...) {
      }
      send_json(res, 500, {{"error", {{"code", "Internal"}, {"message", message}}}});
    });
    server.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    });
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });

    server.Post("/transactions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto id = gw.submit(transaction_from_json(parse_body(req)));
      send_json(res, 202, {{"tx_id", id}, {"status", "Submitted"}});
    }));

    server.Get("/transactions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      TxFilter f;
      if (auto s = query(req, "status")) {
        f.status = parse_status(*s);
        if (!f.status) throw Error(ErrorCode::InvalidArgument, "unknown status " + *s);
      }
      if (auto k = query(req, "kind")) {
        f.kind = parse_kind(*k);
        if (!f.kind) throw Error(ErrorCode::InvalidArgument, "unknown kind " + *k);
      }
      if (auto d = query(req, "device_id")) f.device_id = *d;
      if (auto b = query(req, "since_block")) {
        try {
          std::size_t used = 0;
          f.since_block = std::stoull(*b, &used);
          if (used != b->size()) throw std::invalid_argument(*b);
        } catch (const std::exception&) {
          throw Error(ErrorCode::InvalidArgument, "since_block must be an integer");
        }
      }
      json out = json::array();
      for (const auto& tx : gw.ledger().read_transactions(f)) out.push_back(to_json(tx));
      send_json(res, 200, out);
    }));

    server.Get("/transactions/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto& id = req.path_params.at("id");
      auto tx = gw.ledger().find(id);
      if (!tx) {
        for (auto& p : gw.ledger().pending())
          if (p.tx_id == id) tx = p;
      }
      if (!tx) throw Error(ErrorCode::UnknownTransaction, id);
      json j = to_json(*tx);
      if (auto p = gw.verifier().find_by_tx(id)) j["pending_id"] = p->pending_id;
      send_json(res, 200, j);
    }));

    server.Post("/mine", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto report = gw.mine_now();
      send_json(res, 200, {{"block_index", report.block_index ? json(*report.block_index) : json(nullptr)},
                           {"hash", report.block_hash},
                           {"report", to_json(report)}});
    }));

    server.Get("/chain", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto chain = gw.ledger().chain();
      json blocks = json::array();
      for (const auto& b : chain.blocks) blocks.push_back(to_json(b));
      send_json(res, 200, {{"height", chain.blocks.size()}, {"blocks", blocks}});
    }));

    server.Get("/chain/validate", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, to_json(gw.ledger().validate(gw.config().difficulty)));
    }));

    server.Get("/context", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, to_json(gw.current_context()));
    }));

    server.Get("/pending", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto state = query(req, "state");
      json out = json::array();
      for (const auto& p : gw.verifier().list())
        if (!state || to_string(p.state()) == *state) out.push_back(to_json(p));
      send_json(res, 200, out);
    }));

    server.Post("/pending/:id/decision", guarded([this](const httplib::Request& req, httplib::Response& res) {
      principal(req);
      const json body = parse_body(req);
      if (!body.contains("decision") || !body["decision"].is_string())
        throw Error(ErrorCode::InvalidArgument, "body must be {\"decision\": \"approve\"|\"revoke\"}");
      const auto decision = parse_decision(body["decision"].get<std::string>());
      if (!decision) throw Error(ErrorCode::InvalidArgument, "decision must be approve or revoke");
      const auto out = gw.decide(req.path_params.at("id"), bearer_token(req), *decision);
      send_json(res, 200, {{"pending_id", out.pending_id},
                           {"tx_id", out.tx_id},
                           {"decision", to_string(out.decision)},
                           {"principal_id", out.principal_id},
                           {"status", to_string(out.status)}});
    }));

    server.Get("/icontracts", guarded([this](const httplib::Request&, httplib::Response& res) {
      json proposals = json::array();
      for (const auto& p : gw.verifier().proposals()) proposals.push_back(to_json(p));
      send_json(res, 200, {{"active", to_json(*gw.evaluator().catalog())}, {"proposals", proposals}});
    }));

    auto forbidden_if_unauthorized = [](httplib::Response& res, const Error& e) {
      send_error(res, e.code(), e.what(), e.code() == ErrorCode::Unauthorized ? std::optional<int>(403) : std::nullopt);
    };

    server.Post("/icontracts/proposals", guarded([this, forbidden_if_unauthorized](const httplib::Request& req, httplib::Response& res) {
      principal(req);
      const json body = parse_body(req);
      const json& catalog = body.contains("catalog") ? body["catalog"] : body;
      try {
        send_json(res, 201, to_json(gw.verifier().propose_icontract_update(catalog, bearer_token(req))));
      } catch (const Error& e) {
        forbidden_if_unauthorized(res, e);
      }
    }));

    server.Post("/icontracts/proposals/:id/confirm", guarded([this, forbidden_if_unauthorized](const httplib::Request& req, httplib::Response& res) {
      principal(req);
      try {
        send_json(res, 200, to_json(gw.verifier().confirm_icontract_update(req.path_params.at("id"), bearer_token(req))));
      } catch (const Error& e) {
        forbidden_if_unauthorized(res, e);
      }
    }));

    server.Post("/icontracts/proposals/:id/abort", guarded([this, forbidden_if_unauthorized](const httplib::Request& req, httplib::Response& res) {
      principal(req);
      try {
        send_json(res, 200, to_json(gw.verifier().abort_icontract_update(req.path_params.at("id"), bearer_token(req))));
      } catch (const Error& e) {
        forbidden_if_unauthorized(res, e);
      }
    }));

    server.Get("/devices", guarded([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& d : gw.executor().list_devices())
        out.push_back({{"device_id", d.device_id},
                       {"unit", to_string(d.unit)},
                       {"truth_celsius", d.truth_celsius},
                       {"reading", gw.executor().sense(d.device_id).value_or("")},
                       {"protocols", d.protocols}});
      send_json(res, 200, out);
    }));

    server.Get("/metrics", guarded([this](const httplib::Request&, httplib::Response& res) {
      json j = gw.metrics().to_json();
      j["ledger"] = {{"height", gw.ledger().height()}, {"pool", gw.ledger().pending_count()}};
      j["executor"] = {{"executed", gw.executor().executed_count()}, {"refused", gw.executor().refused_count()}};
      j["catalog_version"] = gw.evaluator().catalog()->version;
      send_json(res, 200, j);
    }));

    if (!gw.config().static_dir.empty() && !server.set_mount_point("/", gw.config().static_dir))
      throw Error(ErrorCode::ConfigParse, "static_dir does not exist: " + gw.config().static_dir);
  }
};

HttpApi::HttpApi(Gateway& gateway) : impl_(std::make_unique<Impl>(gateway)) {}

HttpApi::~HttpApi() { stop(); }

std::uint16_t HttpApi::start(const std::string& host, std::uint16_t port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::TransportError, "cannot bind " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::TransportError, "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return static_cast<std::uint16_t>(bound);
}

void HttpApi::listen(const std::string& host, std::uint16_t port) {
  if (!impl_->server.listen(host, port))
    throw Error(ErrorCode::TransportError, "cannot listen on " + host + ":" + std::to_string(port));
}

void HttpApi::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace provguard
