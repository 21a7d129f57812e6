#include "gvf/rls/types.hpp"

#include <charconv>

#include "gvf/common/digest.hpp"
#include "gvf/common/error.hpp"

namespace gvf::rls {

namespace {

constexpr std::string_view kScheme = "srm://";

bool is_host_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' || c == '-' ||
         c == '_';
}

void check_authority(std::string_view a) {
  auto colon = a.rfind(':');
  if (colon == std::string_view::npos || colon == 0) fail(ErrorCode::badreq, "surl authority needs host:port");
  for (char c : a.substr(0, colon)) {
    if (!is_host_char(c)) fail(ErrorCode::badreq, "bad character in surl host");
  }
  auto port = a.substr(colon + 1);
  unsigned value = 0;
  auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (port.empty() || ec != std::errc() || p != port.data() + port.size() || value > 65535) {
    fail(ErrorCode::badreq, "bad surl port");
  }
}

}  // namespace

bool Guid::is_valid(std::string_view text) { return is_lower_hex(text, 32); }

Guid Guid::parse(std::string_view text) {
  if (!is_valid(text)) fail(ErrorCode::badreq, "guid must be 32 lowercase hex chars");
  return Guid(std::string(text));
}

bool is_site_id(std::string_view text) {
  if (text.empty() || text == "." || text == "..") return false;
  for (char c : text) {
    if (!is_host_char(c)) return false;
  }
  return true;
}

Surl::Surl(std::string authority, std::string site_id, mcat::DataName dataname)
    : authority_(std::move(authority)), site_id_(std::move(site_id)), dataname_(std::move(dataname)) {
  check_authority(authority_);
  if (!is_site_id(site_id_)) fail(ErrorCode::badreq, "bad site id in surl");
}

Surl Surl::parse(std::string_view text) {
  if (text.substr(0, kScheme.size()) != kScheme) fail(ErrorCode::badreq, "surl must start with srm://");
  auto rest = text.substr(kScheme.size());
  auto slash = rest.find('/');
  if (slash == std::string_view::npos) fail(ErrorCode::badreq, "surl has no path");
  auto authority = rest.substr(0, slash);
  auto path = rest.substr(slash + 1);
  auto site_end = path.find('/');
  if (site_end == std::string_view::npos) fail(ErrorCode::badreq, "surl path has no dataname");
  auto site = path.substr(0, site_end);
  auto name = mcat::DataName::parse(path.substr(site_end));
  return Surl(std::string(authority), std::string(site), std::move(name));
}

bool Surl::is_valid(std::string_view text) {
  try {
    parse(text);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::string Surl::str() const {
  return std::string(kScheme) + authority_ + "/" + site_id_ + dataname_.value();
}

}  // namespace gvf::rls
