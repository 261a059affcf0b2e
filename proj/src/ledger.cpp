#include "provguard/ledger.hpp"

#include <algorithm>
#include <unordered_set>

#include "provguard/canonical.hpp"
#include "provguard/sha256.hpp"

namespace provguard {

namespace {

void write_header_prefix(canonical::Writer& w, const Block& b) {
  w.u64(b.index);
  w.digest(b.prev_hash);
}

void write_header_suffix(canonical::Writer& w, const Block& b) {
  w.u32(b.difficulty);
  w.str(b.miner_id);
  w.u32(static_cast<std::uint32_t>(b.transactions.size()));
  for (const auto& tx : b.transactions) canonical::write_transaction(w, tx);
  w.u64(static_cast<std::uint64_t>(b.timestamp));
}

Block read_block(canonical::Reader& r) {
  Block b;
  b.index = r.u64();
  b.prev_hash = r.digest();
  b.nonce = r.u64();
  b.difficulty = r.u32();
  b.miner_id = r.str();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) b.transactions.push_back(canonical::read_transaction(r));
  b.timestamp = static_cast<Millis>(r.u64());
  b.hash = r.digest();
  return b;
}

ValidationReport fail(std::size_t index, ValidationFailure reason, std::string detail) {
  return ValidationReport{false, index, reason, std::move(detail)};
}

}  // namespace

Bytes block_preimage(const Block& b) {
  canonical::Writer w;
  write_header_prefix(w, b);
  w.u64(b.nonce);
  write_header_suffix(w, b);
  return std::move(w).take();
}

Digest compute_block_hash(const Block& b) { return sha256(block_preimage(b)); }

Block seal_block(Block b) {
  canonical::Writer prefix;
  write_header_prefix(prefix, b);
  canonical::Writer suffix;
  write_header_suffix(suffix, b);

  Sha256 base;
  base.update(prefix.bytes());
  for (std::uint64_t nonce = 0;; ++nonce) {
    canonical::Writer n;
    n.u64(nonce);
    Sha256 h = base;
    h.update(n.bytes());
    h.update(suffix.bytes());
    Digest d = h.finish();
    if (leading_zero_bits(d) >= b.difficulty) {
      b.nonce = nonce;
      b.hash = d;
      return b;
    }
  }
}

Chain Chain::with_genesis(Millis timestamp) {
  Block genesis;
  genesis.index = 0;
  genesis.miner_id = "genesis";
  genesis.timestamp = timestamp;
  genesis.hash = compute_block_hash(genesis);
  return Chain{{std::move(genesis)}};
}

std::string_view to_string(ValidationFailure f) {
  switch (f) {
    case ValidationFailure::None: return "none";
    case ValidationFailure::Malformed: return "malformed";
    case ValidationFailure::HashMismatch: return "hash-mismatch";
    case ValidationFailure::Difficulty: return "difficulty";
    case ValidationFailure::Linkage: return "linkage";
    case ValidationFailure::Genesis: return "genesis";
    case ValidationFailure::DuplicateTx: return "duplicate-tx";
  }
  return "?";
}

ValidationReport validate_chain(const Chain& chain, std::uint32_t min_difficulty) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < chain.blocks.size(); ++i) {
    const Block& b = chain.blocks[i];
    if (compute_block_hash(b) != b.hash) return fail(i, ValidationFailure::HashMismatch, "stored hash differs from recomputed digest");
    if (leading_zero_bits(b.hash) < b.difficulty)
      return fail(i, ValidationFailure::Difficulty, "hash does not meet declared difficulty");
    if (i == 0) {
      if (b.index != 0 || b.prev_hash != Digest{} || !b.transactions.empty())
        return fail(i, ValidationFailure::Genesis, "genesis must be index 0 with zero prev_hash and no transactions");
    } else {
      if (b.difficulty < min_difficulty)
        return fail(i, ValidationFailure::Difficulty, "declared difficulty below consortium floor");
      const Block& prev = chain.blocks[i - 1];
      if (b.index != prev.index + 1 || b.prev_hash != prev.hash)
        return fail(i, ValidationFailure::Linkage, "block does not link to its predecessor");
    }
    for (const auto& tx : b.transactions)
      if (!seen.insert(tx.tx_id).second) return fail(i, ValidationFailure::DuplicateTx, "tx_id repeated: " + tx.tx_id);
  }
  if (chain.blocks.empty()) return fail(0, ValidationFailure::Genesis, "chain has no genesis block");
  return {};
}

Bytes encode_chain(const Chain& chain, std::vector<std::pair<std::size_t, std::size_t>>* ranges) {
  canonical::Writer w;
  w.u32(static_cast<std::uint32_t>(chain.blocks.size()));
  for (const auto& b : chain.blocks) {
    const std::size_t begin = w.size();
    write_header_prefix(w, b);
    w.u64(b.nonce);
    write_header_suffix(w, b);
    w.digest(b.hash);
    if (ranges) ranges->emplace_back(begin, w.size());
  }
  return std::move(w).take();
}

Chain decode_chain(std::span<const std::uint8_t> bytes) {
  canonical::Reader r(bytes);
  const std::uint32_t n = r.u32();
  Chain chain;
  for (std::uint32_t i = 0; i < n; ++i) chain.blocks.push_back(read_block(r));
  if (!r.at_end()) throw Error(ErrorCode::InvalidArgument, "trailing bytes after last block");
  return chain;
}

ValidationReport validate_encoded_chain(std::span<const std::uint8_t> bytes, std::uint32_t min_difficulty) {
  canonical::Reader r(bytes);
  Chain chain;
  std::uint32_t declared = 0;
  try {
    declared = r.u32();
  } catch (const Error& e) {
    return fail(0, ValidationFailure::Malformed, e.what());
  }
  std::optional<ValidationReport> parse_failure;
  for (std::uint32_t i = 0; i < declared; ++i) {
    try {
      chain.blocks.push_back(read_block(r));
    } catch (const Error& e) {
      parse_failure = fail(i, ValidationFailure::Malformed, e.what());
      break;
    }
  }
  if (!parse_failure && !r.at_end())
    parse_failure = fail(chain.blocks.size(), ValidationFailure::Malformed, "trailing bytes after last block");

  if (parse_failure) {
    // Blocks parsed before the failure may already be invalid.
    if (!chain.blocks.empty()) {
      auto prefix = validate_chain(chain, min_difficulty);
      if (!prefix.valid) return prefix;
    }
    return *parse_failure;
  }
  return validate_chain(chain, min_difficulty);
}

Ledger::Ledger(const Clock& clock, Options options)
    : clock_(clock), chain_(Chain::with_genesis(options.genesis_timestamp)) {}

std::string Ledger::submit_transaction(Transaction tx) {
  if (tx.device_id.empty())
    throw Error(ErrorCode::UnknownDeviceKindCombination, "transaction has empty device_id");
  if (tx.tx_id.empty()) throw Error(ErrorCode::InvalidArgument, "transaction has empty tx_id");
  if (tx.status != TxStatus::Submitted)
    throw Error(ErrorCode::PreconditionViolated, "only Submitted transactions may enter the pool");
  std::unique_lock lock(mu_);
  if (status_.contains(tx.tx_id)) throw Error(ErrorCode::DuplicateTxId, tx.tx_id);
  status_.emplace(tx.tx_id, TxStatus::Submitted);
  std::string id = tx.tx_id;
  pool_.push_back(std::move(tx));
  return id;
}

Block Ledger::mine_block(const std::string& miner_id, std::uint32_t difficulty) {
  std::lock_guard mining(mine_mu_);
  Block candidate;
  {
    std::shared_lock lock(mu_);
    if (pool_.empty()) throw Error(ErrorCode::EmptyPool, "no pending transactions to mine");
    const Block& tip = chain_.blocks.back();
    candidate.index = tip.index + 1;
    candidate.prev_hash = tip.hash;
    candidate.transactions.assign(pool_.begin(), pool_.end());
  }
  candidate.difficulty = difficulty;
  candidate.miner_id = miner_id;
  candidate.timestamp = clock_.now_ms();
  for (auto& tx : candidate.transactions) tx.status = TxStatus::Mined;

  // Sealing runs outside the state lock; mine_mu_ keeps the tip stable and
  // new submissions only ever append behind the snapshot taken above.
  Block sealed = seal_block(std::move(candidate));

  std::unique_lock lock(mu_);
  const std::size_t block_pos = chain_.blocks.size();
  for (std::size_t i = 0; i < sealed.transactions.size(); ++i) {
    const auto& id = sealed.transactions[i].tx_id;
    status_[id] = TxStatus::Mined;
    located_[id] = Location{block_pos, i};
  }
  pool_.erase(pool_.begin(), pool_.begin() + static_cast<std::ptrdiff_t>(sealed.transactions.size()));
  chain_.blocks.push_back(sealed);
  return sealed;
}

ValidationReport Ledger::validate(std::uint32_t min_difficulty) const {
  std::shared_lock lock(mu_);
  return validate_chain(chain_, min_difficulty);
}

Chain Ledger::chain() const {
  std::shared_lock lock(mu_);
  return chain_;
}

std::size_t Ledger::height() const {
  std::shared_lock lock(mu_);
  return chain_.blocks.size();
}

std::size_t Ledger::pending_count() const {
  std::shared_lock lock(mu_);
  return pool_.size();
}

std::vector<Transaction> Ledger::pending() const {
  std::shared_lock lock(mu_);
  return {pool_.begin(), pool_.end()};
}

std::vector<LocatedTx> Ledger::read_transactions(const TxFilter& filter) const {
  std::shared_lock lock(mu_);
  std::vector<LocatedTx> out;
  for (const auto& b : chain_.blocks) {
    if (filter.since_block && b.index < *filter.since_block) continue;
    for (const auto& tx : b.transactions) {
      const TxStatus st = status_.at(tx.tx_id);
      if (filter.status && st != *filter.status) continue;
      if (filter.kind && tx.kind != *filter.kind) continue;
      if (filter.device_id && tx.device_id != *filter.device_id) continue;
      LocatedTx row{tx, b.index};
      row.tx.status = st;
      out.push_back(std::move(row));
    }
  }
  return out;
}

std::vector<LocatedTx> Ledger::recent_transactions(std::size_t window) const {
  std::shared_lock lock(mu_);
  std::vector<LocatedTx> out;
  for (auto b = chain_.blocks.rbegin(); b != chain_.blocks.rend() && out.size() < window; ++b) {
    for (auto tx = b->transactions.rbegin(); tx != b->transactions.rend() && out.size() < window; ++tx) {
      LocatedTx row{*tx, b->index};
      row.tx.status = status_.at(tx->tx_id);
      out.push_back(std::move(row));
    }
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::optional<Transaction> Ledger::find(const std::string& tx_id) const {
  std::shared_lock lock(mu_);
  auto st = status_.find(tx_id);
  if (st == status_.end()) return std::nullopt;
  if (auto loc = located_.find(tx_id); loc != located_.end()) {
    Transaction tx = chain_.blocks[loc->second.block].transactions[loc->second.position];
    tx.status = st->second;
    return tx;
  }
  for (const auto& tx : pool_)
    if (tx.tx_id == tx_id) return tx;
  return std::nullopt;
}

std::optional<TxStatus> Ledger::status_of(const std::string& tx_id) const {
  std::shared_lock lock(mu_);
  auto it = status_.find(tx_id);
  if (it == status_.end()) return std::nullopt;
  return it->second;
}

void Ledger::transition(const std::string& tx_id, TxStatus to, std::optional<TxStatus> expected) {
  std::unique_lock lock(mu_);
  auto it = status_.find(tx_id);
  if (it == status_.end()) throw Error(ErrorCode::UnknownTransaction, tx_id);
  const TxStatus from = it->second;
  if (expected && from != *expected)
    throw Error(ErrorCode::StatusConflict,
                tx_id + " is " + std::string(to_string(from)) + ", expected " + std::string(to_string(*expected)));
  // Submitted->Mined happens only inside mine_block.
  if (from == TxStatus::Submitted || !is_valid_transition(from, to))
    throw Error(ErrorCode::StatusConflict,
                tx_id + ": no edge " + std::string(to_string(from)) + " -> " + std::string(to_string(to)));
  it->second = to;
}

void Ledger::record_rejection(const std::string& tx_id) {
  std::unique_lock lock(mu_);
  auto it = status_.find(tx_id);
  if (it == status_.end()) throw Error(ErrorCode::UnknownTransaction, tx_id);
  if (!is_rejection(it->second))
    throw Error(ErrorCode::PreconditionViolated, tx_id + " is not Rejected/Expired");
  const auto loc = located_.at(tx_id);
  rejections_.push_back(RejectionRecord{tx_id, chain_.blocks[loc.block].index, it->second, clock_.now_ms()});
}

std::vector<RejectionRecord> Ledger::rejections() const {
  std::shared_lock lock(mu_);
  return rejections_;
}

}  // namespace provguard
