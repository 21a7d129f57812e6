#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace gvf {

// Certificate stand-in: a subject proves itself with
// token = sha256_hex(deployment_secret || subject). Every daemon of a
// federation shares the secret, so any of them can verify any caller.
class TokenAuthority {
 public:
  TokenAuthority(std::string secret, std::string service_subject);

  std::string token_for(std::string_view subject) const;
  bool verify(std::string_view subject, std::string_view token) const;
  const std::string& service_subject() const { return service_subject_; }
  bool is_service(std::string_view subject) const { return subject == service_subject_; }

 private:
  std::string secret_;
  std::string service_subject_;
};

inline constexpr std::string_view kDefaultServiceSubject = "/CN=gvf-service";

}  // namespace gvf
