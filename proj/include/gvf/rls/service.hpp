#pragma once

#include <memory>
#include <optional>

#include "gvf/common/auth.hpp"
#include "gvf/rls/catalog.hpp"
#include "gvf/wire/channel.hpp"

namespace gvf::rls {

// rls.lookup_guid, rls.lookup_surl and rls.list take no credentials at all.
// rls.publish and rls.unpublish need an authenticated subject, or the service
// subject when admin_only is set.
class RlsService : public wire::Handler {
 public:
  RlsService(std::shared_ptr<RlsCatalog> catalog, TokenAuthority authority, bool admin_only);
  wire::Message handle(const wire::Message& request) override;

  RlsCatalog& catalog() { return *catalog_; }

 private:
  std::shared_ptr<RlsCatalog> catalog_;
  TokenAuthority authority_;
  bool admin_only_;
};

class RlsClient {
 public:
  RlsClient(std::shared_ptr<wire::Channel> channel, std::optional<wire::Auth> auth);

  bool publish(const Guid& guid, const Surl& surl);
  bool unpublish(const Guid& guid, const Surl& surl);
  std::set<std::string> lookup_guid(const Guid& guid);
  Guid lookup_surl(const Surl& surl);
  MappingPage list_all(const std::string& cursor, std::size_t page_size);

 private:
  std::shared_ptr<wire::Channel> channel_;
  std::optional<wire::Auth> auth_;
};

}  // namespace gvf::rls
