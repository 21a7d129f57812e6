#pragma once

#include <memory>
#include <string>
#include <thread>

#include "gvf/common/auth.hpp"
#include "gvf/srm/gateway.hpp"

namespace httplib {
class Server;
}

namespace gvf::srm {

// srm.* ops for authenticated subjects, plus the transfer ops srm.fetch and
// srm.upload (bearer token, no subject), srm.done, srm.metrics and
// clock.advance.
class GatewayService : public wire::Handler {
 public:
  GatewayService(std::shared_ptr<Gateway> gateway, TokenAuthority authority);
  wire::Message handle(const wire::Message& request) override;

 private:
  std::shared_ptr<Gateway> gateway_;
  TokenAuthority authority_;
};

// cache-http: GET /t/<token> downloads, PUT /t/<token> uploads.
class CacheHttpServer {
 public:
  CacheHttpServer(std::shared_ptr<Gateway> gateway, const std::string& listen_addr);
  ~CacheHttpServer();
  CacheHttpServer(const CacheHttpServer&) = delete;
  CacheHttpServer& operator=(const CacheHttpServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  std::shared_ptr<Gateway> gateway_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::uint16_t port_ = 0;
};

// Client side of cache-http.
std::string http_get_turl(const std::string& turl);
wire::Json http_put_turl(const std::string& turl, const std::string& bytes);

}  // namespace gvf::srm
