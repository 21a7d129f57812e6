#pragma once

#include <memory>
#include <string>

#include "gvf/broker/broker.hpp"
#include "gvf/common/clock.hpp"
#include "gvf/config.hpp"
#include "gvf/rls/service.hpp"
#include "gvf/srm/service.hpp"
#include "gvf/vault/vault_service.hpp"
#include "gvf/wire/channel.hpp"

namespace gvf::harness {

TokenAuthority authority_for(const FederationConfig& cfg);
wire::Auth service_auth(const FederationConfig& cfg);
wire::Auth auth_for(const FederationConfig& cfg, const std::string& subject);

// One daemon's worth of state, ready to be bound to an address or served
// over TCP. Rebuilding a node from the same config recovers it from disk.
struct Node {
  std::string addr;
  std::shared_ptr<wire::Handler> handler;
  // Gateway nodes only.
  std::shared_ptr<Clock> clock;
  std::shared_ptr<srm::Gateway> gateway;
  std::string http_addr;
};

Node make_vault_node(const FederationConfig& cfg, const std::string& vault_id);
Node make_rls_node(const FederationConfig& cfg);
// The master site's node also owns the catalog.
Node make_site_node(const FederationConfig& cfg, const std::string& site_id, wire::Connector connect);
// Broker-backed driver of the configured kind, served on driver_listen.
Node make_driver_node(const FederationConfig& cfg, wire::Connector connect);
Node make_gateway_node(const FederationConfig& cfg, wire::Connector connect);

}  // namespace gvf::harness
