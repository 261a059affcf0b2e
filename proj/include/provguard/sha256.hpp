#pragma once

#include <memory>
#include <span>

#include "provguard/common.hpp"

namespace provguard {

/// Incremental SHA-256 backed by OpenSSL's EVP interface. Copyable, so a
/// hashed prefix can be reused across many suffixes.
class Sha256 {
 public:
  Sha256();
  Sha256(const Sha256& other);
  Sha256& operator=(const Sha256& other);
  Sha256(Sha256&&) noexcept = default;
  Sha256& operator=(Sha256&&) noexcept = default;
  ~Sha256();

  Sha256& update(std::span<const std::uint8_t> data);
  Digest finish();

 private:
  struct CtxDeleter {
    void operator()(void* ctx) const;
  };
  std::unique_ptr<void, CtxDeleter> ctx_;
};

Digest sha256(std::span<const std::uint8_t> data);

/// Number of leading zero bits in a digest, 0..256.
unsigned leading_zero_bits(const Digest& d);

}  // namespace provguard
