#include <doctest.h>

#include <random>
#include <set>

#include "provguard/canonical.hpp"
#include "provguard/ledger.hpp"
#include "provguard/sha256.hpp"

using namespace provguard;

namespace {

Transaction make_tx(const std::string& id, const std::string& device = "sensor-1", TxKind kind = TxKind::Read,
                    ParamMap params = {}) {
  Transaction tx;
  tx.tx_id = id;
  tx.device_id = device;
  tx.kind = kind;
  tx.params = std::move(params);
  tx.issuer = "operator";
  tx.submitted_at = 1000;
  return tx;
}

std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
  static const std::string alphabet = "abcXYZ019%&=._- \xc3\xa9";
  std::string s(rng() % (max_len + 1), ' ');
  for (auto& c : s) c = alphabet[rng() % alphabet.size()];
  return s;
}

// Oracle: hash every nonce from zero and stop at the first that qualifies.
std::uint64_t linear_scan_nonce(Block b) {
  for (std::uint64_t nonce = 0;; ++nonce) {
    b.nonce = nonce;
    if (leading_zero_bits(compute_block_hash(b)) >= b.difficulty) return nonce;
  }
}

Chain five_block_chain(std::uint64_t seed) {
  ManualClock clock(1'700'000'000'000);
  Ledger ledger(clock);
  std::mt19937_64 rng(seed);
  int n = 0;
  for (int b = 0; b < 4; ++b) {
    const int txs = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < txs; ++i) {
      auto tx = make_tx("t" + std::to_string(n++), "sensor-" + std::to_string(rng() % 3));
      if (rng() % 2) tx.params["unit"] = "celsius";
      ledger.submit_transaction(tx);
    }
    clock.advance(1000);
    ledger.mine_block("miner-" + std::to_string(b % 2), 8);
  }
  return ledger.chain();
}

}  // namespace

TEST_SUITE("ledger") {

TEST_CASE("canonical writer is big-endian and length-prefixed") {
  canonical::Writer w;
  w.u32(0x01020304);
  w.u64(0x0A0B0C0D0E0F1011ULL);
  w.str("ab");
  const Bytes expected{0x01, 0x02, 0x03, 0x04, 0x0A, 0x0B, 0x0C, 0x0D, 0x0E, 0x0F, 0x10, 0x11, 0x00, 0x00, 0x00, 0x02, 'a', 'b'};
  CHECK(w.bytes() == expected);

  canonical::Reader r(w.bytes());
  CHECK(r.u32() == 0x01020304u);
  CHECK(r.u64() == 0x0A0B0C0D0E0F1011ULL);
  CHECK(r.str() == "ab");
  CHECK(r.at_end());
  CHECK_THROWS_AS(r.u8(), Error);
}

TEST_CASE("canonical reader rejects a string length past the end") {
  const Bytes bytes{0x00, 0x00, 0x00, 0x09, 'x'};
  canonical::Reader r(bytes);
  try {
    r.str();
    FAIL("expected Truncated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Truncated);
  }
}

TEST_CASE("transaction encoding round-trips and ignores status") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 300; ++i) {
    Transaction tx = make_tx(random_text(rng, 12), random_text(rng, 8), static_cast<TxKind>(rng() % 4));
    for (int k = 0; k < static_cast<int>(rng() % 4); ++k) tx.params[random_text(rng, 6)] = random_text(rng, 10);
    tx.submitted_at = static_cast<Millis>(rng() >> 1);

    canonical::Writer w1, w2;
    canonical::write_transaction(w1, tx);
    Transaction other = tx;
    other.status = TxStatus::Executed;
    canonical::write_transaction(w2, other);
    CHECK(w1.bytes() == w2.bytes());

    canonical::Reader r(w1.bytes());
    Transaction back = canonical::read_transaction(r);
    back.status = tx.status;
    CHECK(back == tx);
  }
}

TEST_CASE("parameter text form round-trips through escapes") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    ParamMap p;
    for (int k = 0; k < static_cast<int>(rng() % 5); ++k) p[random_text(rng, 6)] = random_text(rng, 10);
    CHECK(parse_params(serialize_params(p)) == p);
  }
  CHECK(serialize_params({{"unit", "fahrenheit"}}) == "unit=fahrenheit");
  CHECK(serialize_params({{"b", "1"}, {"a", "x&y"}}) == "a=x%26y&b=1");
  CHECK_THROWS_AS(parse_params("a=%zz"), Error);
}

TEST_CASE("sha256 matches the FIPS 180-2 test vector") {
  const std::string abc = "abc";
  const auto d = sha256(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()));
  CHECK(to_hex(d) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(digest_from_hex(to_hex(d)) == d);
}

TEST_CASE("leading_zero_bits agrees with a bit-by-bit count") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    Digest d{};
    const auto zero_bytes = rng() % 33;
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = j < zero_bytes ? 0 : static_cast<std::uint8_t>(rng());
    unsigned expected = 0;
    for (unsigned bit = 0; bit < 256; ++bit) {
      if (d[bit / 8] & (0x80 >> (bit % 8))) break;
      ++expected;
    }
    CHECK(leading_zero_bits(d) == expected);
  }
}

TEST_CASE("seal_block finds the same nonce as a linear scan") {
  for (std::uint32_t difficulty : {0u, 1u, 4u, 8u, 10u}) {
    Block b;
    b.index = 3;
    b.prev_hash[0] = 0xAB;
    b.difficulty = difficulty;
    b.miner_id = "miner-a";
    b.transactions = {make_tx("x1"), make_tx("x2", "sensor-2", TxKind::ConfigUpdate, {{"unit", "fahrenheit"}})};
    b.timestamp = 42;
    const Block sealed = seal_block(b);
    CHECK(sealed.nonce == linear_scan_nonce(b));
    CHECK(sealed.hash == compute_block_hash(sealed));
    CHECK(leading_zero_bits(sealed.hash) >= difficulty);
  }
}

TEST_CASE("block preimage follows the documented field order") {
  Block b;
  b.index = 1;
  b.nonce = 2;
  b.difficulty = 3;
  b.miner_id = "m";
  b.timestamp = 4;
  canonical::Writer w;
  w.u64(1);
  w.digest(Digest{});
  w.u64(2);
  w.u32(3);
  w.str("m");
  w.u32(0);
  w.u64(4);
  CHECK(block_preimage(b) == w.bytes());
}

TEST_CASE("genesis block is fixed by its timestamp") {
  const auto a = Chain::with_genesis(0);
  const auto b = Chain::with_genesis(0);
  REQUIRE(a.blocks.size() == 1);
  CHECK(a.blocks[0].hash == b.blocks[0].hash);
  CHECK(a.blocks[0].index == 0);
  CHECK(a.blocks[0].prev_hash == Digest{});
  CHECK(validate_chain(a).valid);
  CHECK(Chain::with_genesis(1).blocks[0].hash != a.blocks[0].hash);
}

TEST_CASE("submit validates and rejects duplicates") {
  ManualClock clock(5);
  Ledger ledger(clock);
  CHECK(ledger.submit_transaction(make_tx("a")) == "a");
  CHECK(ledger.status_of("a") == TxStatus::Submitted);
  CHECK(ledger.pending_count() == 1);

  auto expect = [&](Transaction tx, ErrorCode code) {
    try {
      ledger.submit_transaction(std::move(tx));
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  expect(make_tx("a"), ErrorCode::DuplicateTxId);
  expect(make_tx("b", ""), ErrorCode::UnknownDeviceKindCombination);
  expect(make_tx(""), ErrorCode::InvalidArgument);
  auto mined = make_tx("c");
  mined.status = TxStatus::Mined;
  expect(mined, ErrorCode::PreconditionViolated);
}

TEST_CASE("mining drains the pool into one valid block") {
  ManualClock clock(100);
  Ledger ledger(clock);
  CHECK_THROWS_AS(ledger.mine_block("m", 8), Error);
  for (int i = 0; i < 5; ++i) ledger.submit_transaction(make_tx("t" + std::to_string(i)));
  const Block b = ledger.mine_block("miner-a", 8);
  CHECK(b.index == 1);
  CHECK(b.transactions.size() == 5);
  CHECK(b.timestamp == 100);
  CHECK(leading_zero_bits(b.hash) >= 8);
  CHECK(ledger.pending_count() == 0);
  CHECK(ledger.height() == 2);
  for (const auto& tx : b.transactions) CHECK(ledger.status_of(tx.tx_id) == TxStatus::Mined);
  CHECK(ledger.validate(8).valid);
  // A second submission of a mined id is still a duplicate.
  CHECK_THROWS_AS(ledger.submit_transaction(make_tx("t0")), Error);
}

TEST_CASE("lifecycle transitions follow exactly the allowed edges") {
  const std::set<std::pair<TxStatus, TxStatus>> edges{
      {TxStatus::Submitted, TxStatus::Mined},   {TxStatus::Mined, TxStatus::Approved},
      {TxStatus::Mined, TxStatus::Suspicious},  {TxStatus::Suspicious, TxStatus::Approved},
      {TxStatus::Suspicious, TxStatus::Rejected}, {TxStatus::Suspicious, TxStatus::Expired},
      {TxStatus::Approved, TxStatus::Executed}};
  const TxStatus all[] = {TxStatus::Submitted, TxStatus::Mined,    TxStatus::Approved, TxStatus::Suspicious,
                          TxStatus::Executed,  TxStatus::Rejected, TxStatus::Expired};
  for (auto from : all)
    for (auto to : all) CHECK(is_valid_transition(from, to) == edges.contains({from, to}));

  ManualClock clock;
  Ledger ledger(clock);
  ledger.submit_transaction(make_tx("a"));
  CHECK_THROWS_AS(ledger.transition("a", TxStatus::Mined), Error);  // only mining does that
  ledger.mine_block("m", 0);
  CHECK_THROWS_AS(ledger.transition("a", TxStatus::Executed), Error);
  CHECK_THROWS_AS(ledger.transition("a", TxStatus::Approved, TxStatus::Suspicious), Error);
  ledger.transition("a", TxStatus::Suspicious, TxStatus::Mined);
  CHECK_THROWS_AS(ledger.record_rejection("a"), Error);
  ledger.transition("a", TxStatus::Rejected);
  ledger.record_rejection("a");
  REQUIRE(ledger.rejections().size() == 1);
  CHECK(ledger.rejections()[0].block_index == 1);
  CHECK_THROWS_AS(ledger.transition("nope", TxStatus::Approved), Error);
}

TEST_CASE("read_transactions filters by status, kind, device and block") {
  ManualClock clock;
  Ledger ledger(clock);
  ledger.submit_transaction(make_tx("r1"));
  ledger.submit_transaction(make_tx("r2", "sensor-2"));
  ledger.mine_block("m", 0);
  ledger.submit_transaction(make_tx("c1", "sensor-1", TxKind::ConfigUpdate, {{"unit", "fahrenheit"}}));
  ledger.mine_block("m", 0);
  ledger.transition("c1", TxStatus::Suspicious);
  ledger.transition("c1", TxStatus::Rejected);

  CHECK(ledger.read_transactions({}).size() == 3);
  const auto rejected = ledger.read_transactions(TxFilter{TxStatus::Rejected, {}, {}, {}});
  REQUIRE(rejected.size() == 1);
  CHECK(rejected[0].tx.tx_id == "c1");
  CHECK(rejected[0].tx.status == TxStatus::Rejected);
  CHECK(rejected[0].block_index == 2);
  CHECK(ledger.read_transactions(TxFilter{{}, TxKind::ConfigUpdate, {}, {}}).size() == 1);
  CHECK(ledger.read_transactions(TxFilter{{}, {}, std::string("sensor-2"), {}}).size() == 1);
  CHECK(ledger.read_transactions(TxFilter{{}, {}, {}, 2}).size() == 1);

  const auto recent = ledger.recent_transactions(2);
  REQUIRE(recent.size() == 2);
  CHECK(recent[0].tx.tx_id == "r2");
  CHECK(recent[1].tx.tx_id == "c1");
  CHECK(ledger.find("r1")->status == TxStatus::Mined);
}

TEST_CASE("validation names the failing block and reason") {
  Chain chain = five_block_chain(1);
  REQUIRE(chain.blocks.size() == 5);
  CHECK(validate_chain(chain, 8).valid);

  SUBCASE("edited transaction") {
    chain.blocks[2].transactions[0].device_id = "intruder";
    auto r = validate_chain(chain);
    CHECK_FALSE(r.valid);
    CHECK(r.first_bad_index == 2);
    CHECK(r.reason == ValidationFailure::HashMismatch);
  }
  SUBCASE("re-sealed block breaks the next link") {
    chain.blocks[2].transactions[0].device_id = "intruder";
    chain.blocks[2] = seal_block(chain.blocks[2]);
    auto r = validate_chain(chain);
    CHECK(r.first_bad_index == 3);
    CHECK(r.reason == ValidationFailure::Linkage);
  }
  SUBCASE("re-sealed chain below the difficulty floor") {
    for (std::size_t i = 1; i < chain.blocks.size(); ++i) {
      chain.blocks[i].difficulty = 0;
      chain.blocks[i].prev_hash = chain.blocks[i - 1].hash;
      chain.blocks[i] = seal_block(chain.blocks[i]);
    }
    CHECK(validate_chain(chain).valid);
    auto r = validate_chain(chain, 8);
    CHECK(r.first_bad_index == 1);
    CHECK(r.reason == ValidationFailure::Difficulty);
  }
  SUBCASE("duplicate transaction id across blocks") {
    chain.blocks[3].transactions.push_back(chain.blocks[1].transactions[0]);
    for (std::size_t i = 3; i < chain.blocks.size(); ++i) {
      if (i > 3) chain.blocks[i].prev_hash = chain.blocks[i - 1].hash;
      chain.blocks[i] = seal_block(chain.blocks[i]);
    }
    auto r = validate_chain(chain);
    CHECK(r.first_bad_index == 3);
    CHECK(r.reason == ValidationFailure::DuplicateTx);
  }
}

TEST_CASE("encoded chain round-trips and reports block ranges") {
  const Chain chain = five_block_chain(2);
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  const Bytes bytes = encode_chain(chain, &ranges);
  REQUIRE(ranges.size() == 5);
  CHECK(ranges.front().first == 4);
  CHECK(ranges.back().second == bytes.size());
  for (std::size_t i = 1; i < ranges.size(); ++i) CHECK(ranges[i].first == ranges[i - 1].second);

  const Chain back = decode_chain(bytes);
  REQUIRE(back.blocks.size() == chain.blocks.size());
  for (std::size_t i = 0; i < back.blocks.size(); ++i) CHECK(back.blocks[i].hash == chain.blocks[i].hash);
  CHECK(encode_chain(back) == bytes);
  CHECK(validate_encoded_chain(bytes, 8).valid);

  Bytes truncated(bytes.begin(), bytes.end() - 1);
  auto r = validate_encoded_chain(truncated);
  CHECK_FALSE(r.valid);
  CHECK(r.first_bad_index == 4);
}

TEST_CASE("byte flips anywhere in an encoded chain are detected at their block") {
  const Chain chain = five_block_chain(9);
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  const Bytes clean = encode_chain(chain, &ranges);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    Bytes bytes = clean;
    const std::size_t pos = rng() % bytes.size();
    bytes[pos] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    const auto r = validate_encoded_chain(bytes, 8);
    CHECK_FALSE(r.valid);
    for (std::size_t b = 0; b < ranges.size(); ++b)
      if (pos >= ranges[b].first && pos < ranges[b].second) CHECK(r.first_bad_index == b);
  }
}

}  // TEST_SUITE
