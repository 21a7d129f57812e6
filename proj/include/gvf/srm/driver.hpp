#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gvf/broker/broker.hpp"
#include "gvf/wire/channel.hpp"

namespace gvf::srm {

inline constexpr const char* kProtoCacheHttp = "cache-http";
inline constexpr const char* kProtoVaultStream = "vault-stream";

struct Fetched {
  std::string bytes;
  std::string digest;
  std::string site_id;
};

struct DirectLocation {
  std::string vault_addr;
  std::string blob_id;
  std::string site_id;
  std::uint64_t size = 0;
  std::string digest;
};

// What the gateway core needs from the storage behind it. Every call names
// the grid subject it acts for; the broker enforces that subject's ACL.
class DriverBoundary {
 public:
  virtual ~DriverBoundary() = default;

  virtual std::string kind() const = 0;
  virtual mcat::CatalogEntry stat(const std::string& subject, const mcat::DataName& name) = 0;
  virtual bool check(const std::string& subject, const mcat::DataName& name, mcat::Perm mode) = 0;
  // Copies the file out of the broker. The caller places it in the cache.
  virtual Fetched fetch_to_cache(const std::string& subject, const mcat::DataName& name) = 0;
  virtual mcat::CatalogEntry store_from_cache(const std::string& subject, const mcat::DataName& name,
                                              const std::string& bytes) = 0;
  // True when a request offering these protocols can be served from a
  // replica without a cache copy.
  virtual bool serves_direct(const std::vector<std::string>& protocols) = 0;
  virtual DirectLocation fetch_direct(const std::string& subject, const mcat::DataName& name) = 0;
  virtual std::vector<broker::ListedEntry> list(const std::string& subject, const std::string& prefix) = 0;
};

// Talks to one site broker with the service identity, impersonating the
// requesting subject on each call.
class BrokerDriver : public DriverBoundary {
 public:
  BrokerDriver(wire::Connector connect, std::string broker_addr, wire::Auth service_auth);

  mcat::CatalogEntry stat(const std::string& subject, const mcat::DataName& name) override;
  bool check(const std::string& subject, const mcat::DataName& name, mcat::Perm mode) override;
  Fetched fetch_to_cache(const std::string& subject, const mcat::DataName& name) override;
  mcat::CatalogEntry store_from_cache(const std::string& subject, const mcat::DataName& name,
                                      const std::string& bytes) override;
  std::vector<broker::ListedEntry> list(const std::string& subject, const std::string& prefix) override;

 protected:
  wire::Reply call(const std::string& op, const std::string& subject, wire::Json args,
                   std::optional<std::string> body = std::nullopt);

 private:
  wire::Connector connect_;
  std::string broker_addr_;
  wire::Auth auth_;
};

// Every get goes through the cache, whether or not a replica sits next to
// the gateway.
class StagedDriver : public BrokerDriver {
 public:
  using BrokerDriver::BrokerDriver;
  std::string kind() const override { return "staged"; }
  bool serves_direct(const std::vector<std::string>& protocols) override;
  DirectLocation fetch_direct(const std::string& subject, const mcat::DataName& name) override;
};

// Hands out vault:// locations when the client speaks vault-stream and falls
// back to a staging copy otherwise.
class DirectDriver : public BrokerDriver {
 public:
  using BrokerDriver::BrokerDriver;
  std::string kind() const override { return "direct"; }
  bool serves_direct(const std::vector<std::string>& protocols) override;
  DirectLocation fetch_direct(const std::string& subject, const mcat::DataName& name) override;
};

std::shared_ptr<DriverBoundary> make_driver(DriverKind kind, wire::Connector connect, std::string broker_addr,
                                            wire::Auth service_auth);

// Out-of-process binding of the boundary: drv.* ops, service subject only.
class DriverServer : public wire::Handler {
 public:
  DriverServer(std::shared_ptr<DriverBoundary> driver, TokenAuthority authority);
  wire::Message handle(const wire::Message& request) override;

 private:
  std::shared_ptr<DriverBoundary> driver_;
  TokenAuthority authority_;
};

class RemoteDriver : public DriverBoundary {
 public:
  RemoteDriver(std::shared_ptr<wire::Channel> channel, wire::Auth service_auth);

  std::string kind() const override;
  mcat::CatalogEntry stat(const std::string& subject, const mcat::DataName& name) override;
  bool check(const std::string& subject, const mcat::DataName& name, mcat::Perm mode) override;
  Fetched fetch_to_cache(const std::string& subject, const mcat::DataName& name) override;
  mcat::CatalogEntry store_from_cache(const std::string& subject, const mcat::DataName& name,
                                      const std::string& bytes) override;
  bool serves_direct(const std::vector<std::string>& protocols) override;
  DirectLocation fetch_direct(const std::string& subject, const mcat::DataName& name) override;
  std::vector<broker::ListedEntry> list(const std::string& subject, const std::string& prefix) override;

 private:
  wire::Reply call(const std::string& op, wire::Json args, std::optional<std::string> body = std::nullopt);

  std::shared_ptr<wire::Channel> channel_;
  wire::Auth auth_;
};

}  // namespace gvf::srm
