#pragma once

#include <deque>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "provguard/common.hpp"
#include "provguard/transaction.hpp"

namespace provguard {

struct Block {
  std::uint64_t index = 0;
  Digest prev_hash{};
  std::uint64_t nonce = 0;
  std::uint32_t difficulty = 0;
  std::string miner_id;
  std::vector<Transaction> transactions;
  Millis timestamp = 0;
  Digest hash{};
};

/// Bytes covered by the block hash: index, prev_hash, nonce, difficulty,
/// miner_id, transactions, timestamp.
Bytes block_preimage(const Block& b);
Digest compute_block_hash(const Block& b);

/// Deterministic proof-of-work: scans nonces upward from 0 and returns the
/// first block whose hash has at least `b.difficulty` leading zero bits.
Block seal_block(Block b);

struct Chain {
  std::vector<Block> blocks;

  static Chain with_genesis(Millis timestamp);
};

enum class ValidationFailure { None, Malformed, HashMismatch, Difficulty, Linkage, Genesis, DuplicateTx };

std::string_view to_string(ValidationFailure f);

struct ValidationReport {
  bool valid = true;
  std::optional<std::size_t> first_bad_index;
  ValidationFailure reason = ValidationFailure::None;
  std::string detail;
};

/// `min_difficulty` rejects blocks whose declared difficulty is below the
/// consortium floor, so a rewritten chain cannot be re-sealed at zero cost.
ValidationReport validate_chain(const Chain& chain, std::uint32_t min_difficulty = 0);

/// Wire form of a chain: u32 block count, then for each block its preimage
/// fields followed by the 32-byte stored hash. `ranges`, when given, receives
/// the [begin, end) byte span of each block.
Bytes encode_chain(const Chain& chain, std::vector<std::pair<std::size_t, std::size_t>>* ranges = nullptr);
Chain decode_chain(std::span<const std::uint8_t> bytes);

/// Parses and validates in one pass. A parse failure inside block j is
/// reported as Malformed at j unless an earlier block already fails.
ValidationReport validate_encoded_chain(std::span<const std::uint8_t> bytes, std::uint32_t min_difficulty = 0);

struct TxFilter {
  std::optional<TxStatus> status;
  std::optional<TxKind> kind;
  std::optional<std::string> device_id;
  std::optional<std::uint64_t> since_block;
};

struct LocatedTx {
  Transaction tx;
  std::uint64_t block_index = 0;
};

struct RejectionRecord {
  std::string tx_id;
  std::uint64_t block_index = 0;
  TxStatus status = TxStatus::Rejected;
  Millis recorded_at = 0;
};

/// Embedded consortium chain plus the transaction lifecycle store.
///
/// Block contents are immutable once appended; the live status of every
/// transaction is tracked alongside and only moves along legal lifecycle
/// edges. Writers (submit, mine append, transitions) are serialized; readers
/// only ever observe fully appended blocks.
class Ledger {
 public:
  struct Options {
    Millis genesis_timestamp = 0;
  };

  explicit Ledger(const Clock& clock) : Ledger(clock, Options{}) {}
  Ledger(const Clock& clock, Options options);

  std::string submit_transaction(Transaction tx);
  Block mine_block(const std::string& miner_id, std::uint32_t difficulty);

  ValidationReport validate(std::uint32_t min_difficulty = 0) const;
  Chain chain() const;
  std::size_t height() const;
  std::size_t pending_count() const;
  std::vector<Transaction> pending() const;

  std::vector<LocatedTx> read_transactions(const TxFilter& filter) const;
  /// The most recent `window` mined transactions, in chain order.
  std::vector<LocatedTx> recent_transactions(std::size_t window) const;

  std::optional<Transaction> find(const std::string& tx_id) const;
  std::optional<TxStatus> status_of(const std::string& tx_id) const;

  /// Moves a transaction along one lifecycle edge. Throws StatusConflict when
  /// the edge does not exist from the current status, or when `expected` is
  /// given and does not match.
  void transition(const std::string& tx_id, TxStatus to, std::optional<TxStatus> expected = std::nullopt);

  /// Appends a Rejected/Expired transaction to the provenance feedback log.
  void record_rejection(const std::string& tx_id);
  std::vector<RejectionRecord> rejections() const;

 private:
  struct Location {
    std::size_t block;
    std::size_t position;
  };

  const Clock& clock_;
  mutable std::shared_mutex mu_;
  std::mutex mine_mu_;
  Chain chain_;
  std::deque<Transaction> pool_;
  std::unordered_map<std::string, TxStatus> status_;
  std::unordered_map<std::string, Location> located_;
  std::vector<RejectionRecord> rejections_;
};

}  // namespace provguard
