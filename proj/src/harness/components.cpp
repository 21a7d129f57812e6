#include "gvf/harness/components.hpp"

#include "gvf/mcat/catalog.hpp"

namespace gvf::harness {

TokenAuthority authority_for(const FederationConfig& cfg) {
  return TokenAuthority(cfg.secret, cfg.service_subject);
}

wire::Auth service_auth(const FederationConfig& cfg) { return auth_for(cfg, cfg.service_subject); }

wire::Auth auth_for(const FederationConfig& cfg, const std::string& subject) {
  return wire::Auth{subject, authority_for(cfg).token_for(subject)};
}

Node make_vault_node(const FederationConfig& cfg, const std::string& vault_id) {
  const auto& v = cfg.vault(vault_id);
  auto store = std::make_shared<vault::BlobStore>(v.root_dir, v.capacity);
  return Node{v.listen, std::make_shared<vault::VaultService>(store, authority_for(cfg)), nullptr, nullptr, ""};
}

Node make_rls_node(const FederationConfig& cfg) {
  auto catalog = std::make_shared<rls::RlsCatalog>(rls::RlsOptions{cfg.rls.data_dir, cfg.rls.journal_fsync, 1024});
  return Node{cfg.rls.listen, std::make_shared<rls::RlsService>(catalog, authority_for(cfg), cfg.rls.admin_only),
              nullptr, nullptr, ""};
}

Node make_site_node(const FederationConfig& cfg, const std::string& site_id, wire::Connector connect) {
  const auto& site = cfg.site(site_id);
  std::shared_ptr<mcat::Catalog> catalog;
  if (site.role == SiteRole::master) {
    catalog = std::make_shared<mcat::Catalog>(mcat::CatalogOptions{site.mcat_dir, site.journal_fsync, 1024});
  }
  auto b = std::make_shared<broker::Broker>(cfg, site_id, std::move(connect), catalog);
  return Node{site.listen, b, nullptr, nullptr, ""};
}

Node make_driver_node(const FederationConfig& cfg, wire::Connector connect) {
  if (!cfg.gateway) fail(ErrorCode::badreq, "no gateway configured");
  const auto& g = *cfg.gateway;
  auto driver = srm::make_driver(g.driver, std::move(connect), cfg.site(g.broker_site).listen, service_auth(cfg));
  return Node{g.driver_listen, std::make_shared<srm::DriverServer>(driver, authority_for(cfg)), nullptr, nullptr, ""};
}

Node make_gateway_node(const FederationConfig& cfg, wire::Connector connect) {
  if (!cfg.gateway) fail(ErrorCode::badreq, "no gateway configured");
  const auto& g = *cfg.gateway;
  std::shared_ptr<srm::DriverBoundary> driver;
  if (g.driver_remote) {
    driver = std::make_shared<srm::RemoteDriver>(connect(g.driver_listen), service_auth(cfg));
  } else {
    driver = srm::make_driver(g.driver, connect, cfg.site(g.broker_site).listen, service_auth(cfg));
  }
  auto clock = std::make_shared<Clock>(Clock::parse_mode(cfg.clock));
  auto cache = std::make_shared<srm::StagingCache>(g.cache_dir, g.cache_capacity_bytes, *clock);
  srm::GatewayOptions opts;
  opts.turl_authority = g.http_listen.empty() ? g.listen : g.http_listen;
  opts.turl_lifetime = g.turl_lifetime;
  opts.token_secret = cfg.secret;
  auto gateway = std::make_shared<srm::Gateway>(opts, driver, cache, *clock);
  return Node{g.listen, std::make_shared<srm::GatewayService>(gateway, authority_for(cfg)), clock, gateway,
              g.http_listen};
}

}  // namespace gvf::harness
