#include "gvf/srm/service.hpp"

#include <httplib.h>

namespace gvf::srm {

using wire::Json;
using wire::Message;

namespace {

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::noent: return 404;
    case ErrorCode::perm: return 403;
    case ErrorCode::nospace: return 507;
    case ErrorCode::unavail: return 503;
    default: return 400;
  }
}

struct CacheTurl {
  std::string host;
  int port = 0;
  std::string token;
};

CacheTurl parse_cache_turl(const std::string& turl) {
  constexpr std::string_view scheme = "cache://";
  if (turl.rfind(scheme, 0) != 0) fail(ErrorCode::badreq, "not a cache:// turl: " + turl);
  auto rest = turl.substr(scheme.size());
  auto slash = rest.find('/');
  if (slash == std::string::npos) fail(ErrorCode::badreq, "turl has no token");
  auto hp = wire::parse_host_port(rest.substr(0, slash));
  return CacheTurl{hp.host, hp.port, rest.substr(slash + 1)};
}

}  // namespace

GatewayService::GatewayService(std::shared_ptr<Gateway> gateway, TokenAuthority authority)
    : gateway_(std::move(gateway)), authority_(std::move(authority)) {}

Message GatewayService::handle(const Message& request) {
  return wire::guarded(request, [&]() -> Message {
    const std::string op = wire::op_of(request);
    const Json& args = wire::args_of(request);
    auto protocols = [&] {
      return args.value("protocols", std::vector<std::string>{kProtoCacheHttp});
    };

    if (op == "sys.ping") return wire::ok_reply(request, {{"service", "gateway"}, {"driver", gateway_->driver().kind()}});
    if (op == "srm.fetch") {
      return wire::ok_reply(request, Json::object(), gateway_->fetch(wire::arg_string(args, "token")));
    }
    if (op == "srm.upload") {
      if (!request.body) fail(ErrorCode::badreq, "srm.upload needs a body");
      return wire::ok_reply(request,
                            {{"request", to_json(gateway_->upload(wire::arg_string(args, "token"), *request.body))}});
    }
    if (op == "srm.metrics") return wire::ok_reply(request, to_json(gateway_->metrics()));

    const std::string subject = wire::authenticated_subject(request, authority_);
    if (op == "srm.get") {
      return wire::ok_reply(request,
                            {{"request", to_json(gateway_->srm_get(subject, wire::arg_string(args, "surl"), protocols()))}});
    }
    if (op == "srm.put") {
      auto r = gateway_->srm_put(subject, wire::arg_string(args, "surl"), protocols(),
                                 wire::arg_opt_u64(args, "size_hint").value_or(0),
                                 wire::arg_opt_string(args, "reservation").value_or(""));
      return wire::ok_reply(request, {{"request", to_json(r)}});
    }
    if (op == "srm.pin") {
      auto p = gateway_->srm_pin(subject, wire::arg_string(args, "surl"), wire::arg_u64(args, "lifetime"));
      return wire::ok_reply(request, to_json(p));
    }
    if (op == "srm.unpin") {
      gateway_->srm_unpin(subject, wire::arg_string(args, "token"));
      return wire::ok_reply(request, Json::object());
    }
    if (op == "srm.reserve") {
      return wire::ok_reply(
          request, to_json(gateway_->srm_reserve(subject, wire::arg_u64(args, "bytes"), wire::arg_u64(args, "lifetime"))));
    }
    if (op == "srm.release") {
      gateway_->srm_release(subject, wire::arg_string(args, "token"));
      return wire::ok_reply(request, Json::object());
    }
    if (op == "srm.status") {
      return wire::ok_reply(request, {{"request", to_json(gateway_->srm_status(wire::arg_string(args, "request_id")))}});
    }
    if (op == "srm.ls") {
      Json arr = Json::array();
      for (const auto& e : gateway_->srm_ls(subject, wire::arg_opt_string(args, "prefix").value_or("/"))) {
        arr.push_back(broker::to_json(e));
      }
      return wire::ok_reply(request, {{"entries", arr}});
    }
    if (op == "srm.done") {
      return wire::ok_reply(request,
                            {{"request", to_json(gateway_->finish_direct(subject, wire::arg_string(args, "request_id")))}});
    }
    if (op == "clock.advance") {
      return wire::ok_reply(request, {{"now", gateway_->clock().advance(wire::arg_u64(args, "ticks"))}});
    }
    fail(ErrorCode::badreq, "unknown op " + op);
  });
}

CacheHttpServer::CacheHttpServer(std::shared_ptr<Gateway> gateway, const std::string& listen_addr)
    : gateway_(std::move(gateway)), server_(std::make_unique<httplib::Server>()) {
  auto respond_error = [](httplib::Response& res, const Error& e) {
    res.status = http_status_for(e.code());
    res.set_content(Json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump(), "application/json");
  };
  server_->Get(R"(/t/([0-9a-f]+))", [this, respond_error](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(gateway_->fetch(req.matches[1]), "application/octet-stream");
      res.status = 200;
    } catch (const Error& e) {
      respond_error(res, e);
    }
  });
  server_->Put(R"(/t/([0-9a-f]+))", [this, respond_error](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(to_json(gateway_->upload(req.matches[1], req.body)).dump(), "application/json");
      res.status = 200;
    } catch (const Error& e) {
      respond_error(res, e);
    }
  });
  auto hp = wire::parse_host_port(listen_addr);
  std::string host = hp.host == "*" ? "0.0.0.0" : hp.host;
  if (hp.port == 0) {
    int port = server_->bind_to_any_port(host);
    if (port < 0) fail(ErrorCode::unavail, "cannot bind cache-http on " + listen_addr);
    port_ = static_cast<std::uint16_t>(port);
  } else {
    if (!server_->bind_to_port(host, hp.port)) fail(ErrorCode::unavail, "cannot bind cache-http on " + listen_addr);
    port_ = hp.port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
}

CacheHttpServer::~CacheHttpServer() { stop(); }

void CacheHttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string http_get_turl(const std::string& turl) {
  auto t = parse_cache_turl(turl);
  httplib::Client client(t.host, t.port);
  client.set_read_timeout(60, 0);
  auto res = client.Get("/t/" + t.token);
  if (!res) fail(ErrorCode::unavail, "cache-http unreachable for " + turl);
  if (res->status == 200) return res->body;
  auto j = Json::parse(res->body, nullptr, false);
  auto code = j.is_object() ? parse_error_code(j.value("error", "E_UNAVAIL")).value_or(ErrorCode::unavail)
                            : ErrorCode::unavail;
  fail(code, "cache-http GET returned " + std::to_string(res->status));
}

Json http_put_turl(const std::string& turl, const std::string& bytes) {
  auto t = parse_cache_turl(turl);
  httplib::Client client(t.host, t.port);
  client.set_read_timeout(60, 0);
  auto res = client.Put("/t/" + t.token, bytes, "application/octet-stream");
  if (!res) fail(ErrorCode::unavail, "cache-http unreachable for " + turl);
  auto j = Json::parse(res->body, nullptr, false);
  if (res->status == 200 && j.is_object()) return j;
  auto code = j.is_object() ? parse_error_code(j.value("error", "E_UNAVAIL")).value_or(ErrorCode::unavail)
                            : ErrorCode::unavail;
  fail(code, "cache-http PUT returned " + std::to_string(res->status));
}

}  // namespace gvf::srm
