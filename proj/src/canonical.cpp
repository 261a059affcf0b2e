#include "provguard/canonical.hpp"

#include <limits>

namespace provguard::canonical {

void Writer::u32(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void Writer::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void Writer::str(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint32_t>::max())
    throw Error(ErrorCode::InvalidArgument, "string too long for canonical form");
  u32(static_cast<std::uint32_t>(s.size()));
  out_.insert(out_.end(), s.begin(), s.end());
}

void Reader::need(std::size_t n) const {
  if (in_.size() - pos_ < n) throw Error(ErrorCode::Truncated, "canonical record ends early");
}

std::uint8_t Reader::u8() {
  need(1);
  return in_[pos_++];
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | in_[pos_++];
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_++];
  return v;
}

std::string Reader::str() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
  pos_ += n;
  return s;
}

Digest Reader::digest() {
  need(32);
  Digest d{};
  for (auto& b : d) b = in_[pos_++];
  return d;
}

void write_transaction(Writer& w, const Transaction& tx) {
  w.str(tx.tx_id);
  w.str(tx.device_id);
  w.u8(static_cast<std::uint8_t>(tx.kind));
  w.u32(static_cast<std::uint32_t>(tx.params.size()));
  for (const auto& [key, value] : tx.params) {
    w.str(key);
    w.str(value);
  }
  w.str(tx.issuer);
  w.u64(static_cast<std::uint64_t>(tx.submitted_at));
}

Transaction read_transaction(Reader& r) {
  Transaction tx;
  tx.tx_id = r.str();
  tx.device_id = r.str();
  const auto kind = r.u8();
  if (kind > static_cast<std::uint8_t>(TxKind::ActuatorCommand))
    throw Error(ErrorCode::InvalidArgument, "unknown transaction kind byte");
  tx.kind = static_cast<TxKind>(kind);
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto key = r.str();
    auto value = r.str();
    // Canonical form is strictly key-sorted with no duplicates.
    if (!tx.params.empty() && !(tx.params.rbegin()->first < key))
      throw Error(ErrorCode::InvalidArgument, "params not in canonical order");
    tx.params.emplace(std::move(key), std::move(value));
  }
  tx.issuer = r.str();
  tx.submitted_at = static_cast<Millis>(r.u64());
  tx.status = TxStatus::Mined;
  return tx;
}

}  // namespace provguard::canonical
