#pragma once

// Canonical binary serialization shared by block hashing, template
// signatures and the chain wire format.
//
//   u8 / u32 / u64 : big-endian fixed width
//   string         : u32 byte length, then UTF-8 bytes
//   digest         : 32 raw bytes
//   list           : u32 element count, then elements
//
// See docs/canonical-serialization.md for the field order of each record.

#include <span>
#include <string>
#include <string_view>

#include "provguard/common.hpp"
#include "provguard/transaction.hpp"

namespace provguard::canonical {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void str(std::string_view s);
  void digest(const Digest& d) { out_.insert(out_.end(), d.begin(), d.end()); }

  const Bytes& bytes() const& { return out_; }
  Bytes take() && { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  Bytes out_;
};

/// Bounds-checked reader; every accessor throws Error{Truncated} rather
/// than reading past the end.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::string str();
  Digest digest();

  std::size_t position() const { return pos_; }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

/// Transaction fields in hashing order. Status is deliberately absent: it
/// changes after mining and lives in the ledger's lifecycle store.
void write_transaction(Writer& w, const Transaction& tx);
Transaction read_transaction(Reader& r);

}  // namespace provguard::canonical
