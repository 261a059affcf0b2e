#include "provguard/sha256.hpp"

#include <bit>
#include <openssl/evp.h>

namespace provguard {

namespace {

EVP_MD_CTX* as_ctx(void* p) { return static_cast<EVP_MD_CTX*>(p); }

}  // namespace

void Sha256::CtxDeleter::operator()(void* ctx) const { EVP_MD_CTX_free(as_ctx(ctx)); }

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(as_ctx(ctx_.get()), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("EVP sha256 init failed");
}

Sha256::Sha256(const Sha256& other) : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_MD_CTX_copy_ex(as_ctx(ctx_.get()), as_ctx(other.ctx_.get())) != 1)
    throw std::runtime_error("EVP sha256 copy failed");
}

Sha256& Sha256::operator=(const Sha256& other) {
  if (this != &other) {
    Sha256 tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

Sha256::~Sha256() = default;

Sha256& Sha256::update(std::span<const std::uint8_t> data) {
  if (EVP_DigestUpdate(as_ctx(ctx_.get()), data.data(), data.size()) != 1)
    throw std::runtime_error("EVP sha256 update failed");
  return *this;
}

Digest Sha256::finish() {
  Digest out{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(as_ctx(ctx_.get()), out.data(), &len) != 1 || len != out.size())
    throw std::runtime_error("EVP sha256 final failed");
  return out;
}

Digest sha256(std::span<const std::uint8_t> data) { return Sha256{}.update(data).finish(); }

unsigned leading_zero_bits(const Digest& d) {
  unsigned bits = 0;
  for (auto b : d) {
    if (b == 0) {
      bits += 8;
      continue;
    }
    bits += static_cast<unsigned>(std::countl_zero(b));
    break;
  }
  return bits;
}

}  // namespace provguard
