#pragma once

#include <string>
#include <string_view>
#include <set>

#include "gvf/mcat/types.hpp"

namespace gvf::rls {

// 128-bit identifier rendered as 32 lowercase hex characters.
class Guid {
 public:
  Guid() = default;
  static Guid parse(std::string_view text);
  static bool is_valid(std::string_view text);

  const std::string& value() const { return value_; }
  auto operator<=>(const Guid&) const = default;

 private:
  explicit Guid(std::string value) : value_(std::move(value)) {}
  std::string value_;
};

// srm://<host>:<port>/<site_id>/<dataname without its leading slash>
class Surl {
 public:
  Surl() = default;
  Surl(std::string authority, std::string site_id, mcat::DataName dataname);
  static Surl parse(std::string_view text);
  static bool is_valid(std::string_view text);

  const std::string& authority() const { return authority_; }
  const std::string& site_id() const { return site_id_; }
  const mcat::DataName& dataname() const { return dataname_; }
  std::string str() const;

  auto operator<=>(const Surl& other) const { return str() <=> other.str(); }
  bool operator==(const Surl& other) const { return str() == other.str(); }

 private:
  std::string authority_;
  std::string site_id_;
  mcat::DataName dataname_;
};

// A GUID and the SURLs it resolves to. There is deliberately nowhere to put
// an owner, a subject or a permission.
struct Mapping {
  Guid guid;
  std::set<std::string> surls;
};

bool is_site_id(std::string_view text);

}  // namespace gvf::rls
