#include "gvf/common/auth.hpp"

#include <openssl/crypto.h>

#include "gvf/common/digest.hpp"

namespace gvf {

TokenAuthority::TokenAuthority(std::string secret, std::string service_subject)
    : secret_(std::move(secret)), service_subject_(std::move(service_subject)) {}

std::string TokenAuthority::token_for(std::string_view subject) const {
  Sha256 h;
  h.update(secret_);
  h.update(subject);
  return h.finish_hex();
}

bool TokenAuthority::verify(std::string_view subject, std::string_view token) const {
  std::string expected = token_for(subject);
  return token.size() == expected.size() && CRYPTO_memcmp(token.data(), expected.data(), expected.size()) == 0;
}

}  // namespace gvf
