#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gvf {

using Json = nlohmann::json;

enum class SiteRole { master, server };

struct VaultConfig {
  std::string vault_id;
  std::string site_id;
  std::string root_dir;
  std::uint64_t capacity = 0;
  std::string listen;
};

struct SiteConfig {
  std::string site_id;
  SiteRole role = SiteRole::server;
  std::string listen;
  std::string data_dir;
  // Catalog directory; only meaningful for the master site.
  std::string mcat_dir;
  std::vector<std::string> local_vaults;
  std::map<std::string, std::string> subject_map;
  bool auto_map = false;
  bool journal_fsync = false;
};

struct RlsConfig {
  std::string listen;
  std::string data_dir;
  bool admin_only = false;
  bool journal_fsync = false;
};

enum class DriverKind { staged, direct };

struct GatewayConfig {
  std::string listen;
  // cache-http endpoint; empty disables the HTTP server.
  std::string http_listen;
  std::string site_id;
  // Site whose broker the drivers talk to.
  std::string broker_site;
  std::string cache_dir;
  std::uint64_t cache_capacity_bytes = 0;
  DriverKind driver = DriverKind::staged;
  bool driver_remote = false;
  std::string driver_listen;
  std::uint64_t turl_lifetime = 3600;
  // host:port written into SURLs; defaults to listen.
  std::string surl_authority;
};

struct SyncConfig {
  std::string state_dir;
  std::size_t page_size = 256;
};

struct FederationConfig {
  std::string secret;
  std::string service_subject;
  std::string clock = "logical";
  std::vector<SiteConfig> sites;
  std::vector<VaultConfig> vaults;
  RlsConfig rls;
  std::optional<GatewayConfig> gateway;
  SyncConfig sync;

  const SiteConfig& master() const;
  const SiteConfig& site(const std::string& site_id) const;
  const VaultConfig& vault(const std::string& vault_id) const;
  std::string surl_authority() const;

  // Throws E_BADREQ describing the first violated invariant.
  void validate() const;

  static FederationConfig from_json(const Json& j);
  Json to_json() const;
  static FederationConfig load(const std::string& path);
  void save(const std::string& path) const;
};

std::string_view to_string(DriverKind kind);
DriverKind parse_driver_kind(std::string_view text);

// --config value if given, else $GVF_CONFIG; E_BADREQ when neither is set.
std::string resolve_config_path(const std::optional<std::string>& flag);

}  // namespace gvf
