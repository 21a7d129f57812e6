#include "gvf/common/error.hpp"

#include <array>
#include <utility>

namespace gvf {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 7> kNames{{
    {ErrorCode::perm, "E_PERM"},
    {ErrorCode::noent, "E_NOENT"},
    {ErrorCode::exists, "E_EXISTS"},
    {ErrorCode::nospace, "E_NOSPACE"},
    {ErrorCode::pinned, "E_PINNED"},
    {ErrorCode::badreq, "E_BADREQ"},
    {ErrorCode::unavail, "E_UNAVAIL"},
}};

}  // namespace

std::string_view to_string(ErrorCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "E_BADREQ";
}

std::optional<ErrorCode> parse_error_code(std::string_view text) {
  for (const auto& [c, name] : kNames) {
    if (name == text) return c;
  }
  return std::nullopt;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::perm: return 3;
    case ErrorCode::noent: return 4;
    case ErrorCode::exists: return 5;
    case ErrorCode::nospace: return 6;
    case ErrorCode::pinned: return 7;
    case ErrorCode::badreq: return 8;
    case ErrorCode::unavail: return 9;
  }
  return 8;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace gvf
