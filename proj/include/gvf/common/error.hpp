#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gvf {

// Error constants shared by every service and carried verbatim on the wire.
enum class ErrorCode {
  perm,
  noent,
  exists,
  nospace,
  pinned,
  badreq,
  unavail,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view text);

// Process exit status used by the CLI for each error constant.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace gvf
