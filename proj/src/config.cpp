#include "gvf/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "gvf/common/auth.hpp"
#include "gvf/common/error.hpp"

namespace gvf {

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

}  // namespace

std::string_view to_string(DriverKind kind) { return kind == DriverKind::staged ? "staged" : "direct"; }

DriverKind parse_driver_kind(std::string_view text) {
  if (text == "staged") return DriverKind::staged;
  if (text == "direct") return DriverKind::direct;
  fail(ErrorCode::badreq, "unknown driver '" + std::string(text) + "'");
}

const SiteConfig& FederationConfig::master() const {
  for (const auto& s : sites) {
    if (s.role == SiteRole::master) return s;
  }
  fail(ErrorCode::badreq, "federation has no master site");
}

const SiteConfig& FederationConfig::site(const std::string& site_id) const {
  for (const auto& s : sites) {
    if (s.site_id == site_id) return s;
  }
  fail(ErrorCode::badreq, "unknown site '" + site_id + "'");
}

const VaultConfig& FederationConfig::vault(const std::string& vault_id) const {
  for (const auto& v : vaults) {
    if (v.vault_id == vault_id) return v;
  }
  fail(ErrorCode::noent, "unknown vault '" + vault_id + "'");
}

std::string FederationConfig::surl_authority() const {
  if (!gateway) return "localhost:0";
  return gateway->surl_authority.empty() ? gateway->listen : gateway->surl_authority;
}

void FederationConfig::validate() const {
  if (secret.empty()) fail(ErrorCode::badreq, "secret must be set");
  int masters = 0;
  std::set<std::string> site_ids;
  for (const auto& s : sites) {
    if (s.site_id.empty()) fail(ErrorCode::badreq, "site without site_id");
    if (!site_ids.insert(s.site_id).second) fail(ErrorCode::badreq, "duplicate site " + s.site_id);
    if (s.role == SiteRole::master) ++masters;
    if (s.listen.empty()) fail(ErrorCode::badreq, "site " + s.site_id + " has no listen address");
  }
  if (masters != 1) fail(ErrorCode::badreq, "exactly one master site is required");
  std::set<std::string> vault_ids;
  for (const auto& v : vaults) {
    if (!vault_ids.insert(v.vault_id).second) fail(ErrorCode::badreq, "duplicate vault " + v.vault_id);
    if (!site_ids.contains(v.site_id)) fail(ErrorCode::badreq, "vault " + v.vault_id + " names unknown site");
    if (v.capacity == 0) fail(ErrorCode::badreq, "vault " + v.vault_id + " needs capacity > 0");
    if (v.root_dir.empty() || v.listen.empty()) fail(ErrorCode::badreq, "vault " + v.vault_id + " incomplete");
  }
  for (const auto& s : sites) {
    for (const auto& id : s.local_vaults) {
      if (!vault_ids.contains(id) || vault(id).site_id != s.site_id) {
        fail(ErrorCode::badreq, "site " + s.site_id + " lists vault " + id + " it does not host");
      }
    }
  }
  if (gateway) {
    if (gateway->cache_capacity_bytes == 0) fail(ErrorCode::badreq, "gateway cache capacity must be > 0");
    if (!site_ids.contains(gateway->broker_site)) fail(ErrorCode::badreq, "gateway broker_site unknown");
    if (gateway->driver_remote && gateway->driver_listen.empty()) {
      fail(ErrorCode::badreq, "driver_remote requires driver_listen");
    }
  }
}

FederationConfig FederationConfig::from_json(const Json& j) {
  FederationConfig c;
  try {
    c.secret = get_or<std::string>(j, "secret", "");
    c.service_subject = get_or<std::string>(j, "service_subject", std::string(kDefaultServiceSubject));
    c.clock = get_or<std::string>(j, "clock", "logical");
    for (const auto& s : j.value("sites", Json::array())) {
      SiteConfig sc;
      sc.site_id = s.at("site_id").get<std::string>();
      auto role = get_or<std::string>(s, "role", "server");
      if (role != "master" && role != "server") fail(ErrorCode::badreq, "site role must be master or server");
      sc.role = role == "master" ? SiteRole::master : SiteRole::server;
      sc.listen = get_or<std::string>(s, "listen", "");
      sc.data_dir = get_or<std::string>(s, "data_dir", "");
      sc.mcat_dir = get_or<std::string>(s, "mcat_dir", sc.data_dir.empty() ? "" : sc.data_dir + "/mcat");
      sc.local_vaults = get_or<std::vector<std::string>>(s, "local_vaults", {});
      sc.subject_map = get_or<std::map<std::string, std::string>>(s, "subject_map", {});
      sc.auto_map = get_or<bool>(s, "auto_map", false);
      sc.journal_fsync = get_or<bool>(s, "journal_fsync", false);
      c.sites.push_back(std::move(sc));
    }
    for (const auto& v : j.value("vaults", Json::array())) {
      VaultConfig vc;
      vc.vault_id = v.at("vault_id").get<std::string>();
      vc.site_id = v.at("site_id").get<std::string>();
      vc.root_dir = get_or<std::string>(v, "root_dir", "");
      vc.capacity = get_or<std::uint64_t>(v, "capacity", 0);
      vc.listen = get_or<std::string>(v, "listen", "");
      c.vaults.push_back(std::move(vc));
    }
    if (auto it = j.find("rls"); it != j.end()) {
      c.rls.listen = get_or<std::string>(*it, "listen", "");
      c.rls.data_dir = get_or<std::string>(*it, "data_dir", "");
      c.rls.admin_only = get_or<bool>(*it, "rls_admin_only", false);
      c.rls.journal_fsync = get_or<bool>(*it, "journal_fsync", false);
    }
    if (auto it = j.find("gateway"); it != j.end() && !it->is_null()) {
      GatewayConfig g;
      g.listen = get_or<std::string>(*it, "listen", "");
      g.http_listen = get_or<std::string>(*it, "http_listen", "");
      g.site_id = get_or<std::string>(*it, "site_id", "");
      g.broker_site = get_or<std::string>(*it, "broker_site", g.site_id);
      g.cache_dir = get_or<std::string>(*it, "cache_dir", "");
      g.cache_capacity_bytes = get_or<std::uint64_t>(*it, "cache_capacity_bytes", 0);
      g.driver = parse_driver_kind(get_or<std::string>(*it, "driver", "staged"));
      g.driver_remote = get_or<bool>(*it, "driver_remote", false);
      g.driver_listen = get_or<std::string>(*it, "driver_listen", "");
      g.turl_lifetime = get_or<std::uint64_t>(*it, "turl_lifetime", 3600);
      g.surl_authority = get_or<std::string>(*it, "surl_authority", "");
      c.gateway = std::move(g);
    }
    if (auto it = j.find("sync"); it != j.end()) {
      c.sync.state_dir = get_or<std::string>(*it, "state_dir", "");
      c.sync.page_size = get_or<std::size_t>(*it, "page_size", 256);
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::badreq, std::string("config: ") + e.what());
  }
  return c;
}

Json FederationConfig::to_json() const {
  Json j;
  j["secret"] = secret;
  j["service_subject"] = service_subject;
  j["clock"] = clock;
  j["sites"] = Json::array();
  for (const auto& s : sites) {
    j["sites"].push_back({{"site_id", s.site_id},
                          {"role", s.role == SiteRole::master ? "master" : "server"},
                          {"listen", s.listen},
                          {"data_dir", s.data_dir},
                          {"mcat_dir", s.mcat_dir},
                          {"local_vaults", s.local_vaults},
                          {"subject_map", s.subject_map},
                          {"auto_map", s.auto_map},
                          {"journal_fsync", s.journal_fsync}});
  }
  j["vaults"] = Json::array();
  for (const auto& v : vaults) {
    j["vaults"].push_back({{"vault_id", v.vault_id},
                           {"site_id", v.site_id},
                           {"root_dir", v.root_dir},
                           {"capacity", v.capacity},
                           {"listen", v.listen}});
  }
  j["rls"] = {{"listen", rls.listen},
              {"data_dir", rls.data_dir},
              {"rls_admin_only", rls.admin_only},
              {"journal_fsync", rls.journal_fsync}};
  if (gateway) {
    j["gateway"] = {{"listen", gateway->listen},
                    {"http_listen", gateway->http_listen},
                    {"site_id", gateway->site_id},
                    {"broker_site", gateway->broker_site},
                    {"cache_dir", gateway->cache_dir},
                    {"cache_capacity_bytes", gateway->cache_capacity_bytes},
                    {"driver", std::string(to_string(gateway->driver))},
                    {"driver_remote", gateway->driver_remote},
                    {"driver_listen", gateway->driver_listen},
                    {"turl_lifetime", gateway->turl_lifetime},
                    {"surl_authority", gateway->surl_authority}};
  }
  j["sync"] = {{"state_dir", sync.state_dir}, {"page_size", sync.page_size}};
  return j;
}

FederationConfig FederationConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::badreq, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::badreq, "config " + path + ": " + e.what());
  }
  auto c = from_json(j);
  c.validate();
  return c;
}

void FederationConfig::save(const std::string& path) const {
  std::ofstream out(path);
  out << to_json().dump(2) << "\n";
  if (!out) fail(ErrorCode::unavail, "cannot write config " + path);
}

std::string resolve_config_path(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("GVF_CONFIG"); env != nullptr && *env != '\0') return env;
  fail(ErrorCode::badreq, "no config: pass --config <path> or set GVF_CONFIG");
}

}  // namespace gvf
