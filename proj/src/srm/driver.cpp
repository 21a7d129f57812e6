#include "gvf/srm/driver.hpp"

#include <algorithm>

namespace gvf::srm {

using wire::Json;
using wire::Message;

namespace {

broker::ListedEntry listed_from_json(const Json& j) {
  broker::ListedEntry e;
  e.entry = j.at("entry").get<mcat::CatalogEntry>();
  e.readable = j.at("readable").get<bool>();
  e.writable = j.at("writable").get<bool>();
  e.deletable = j.at("deletable").get<bool>();
  return e;
}

Json location_to_json(const DirectLocation& d) {
  return Json{{"vault_addr", d.vault_addr}, {"blob_id", d.blob_id}, {"site_id", d.site_id}, {"size", d.size},
              {"digest", d.digest}};
}

DirectLocation location_from_json(const Json& j) {
  return DirectLocation{j.at("vault_addr"), j.at("blob_id"), j.at("site_id"), j.at("size"), j.at("digest")};
}

}  // namespace

BrokerDriver::BrokerDriver(wire::Connector connect, std::string broker_addr, wire::Auth service_auth)
    : connect_(std::move(connect)), broker_addr_(std::move(broker_addr)), auth_(std::move(service_auth)) {}

wire::Reply BrokerDriver::call(const std::string& op, const std::string& subject, Json args,
                               std::optional<std::string> body) {
  args["as"] = subject;
  return wire::call(*connect_(broker_addr_), op, std::move(args), auth_, std::move(body));
}

mcat::CatalogEntry BrokerDriver::stat(const std::string& subject, const mcat::DataName& name) {
  return call("srb.stat", subject, {{"dataname", name.value()}}).result.at("entry").get<mcat::CatalogEntry>();
}

bool BrokerDriver::check(const std::string& subject, const mcat::DataName& name, mcat::Perm mode) {
  return call("srb.check", subject, {{"dataname", name.value()}, {"mode", std::string(mcat::to_string(mode))}})
      .result.at("allow")
      .get<bool>();
}

Fetched BrokerDriver::fetch_to_cache(const std::string& subject, const mcat::DataName& name) {
  auto r = call("srb.get", subject, {{"dataname", name.value()}});
  if (!r.body) fail(ErrorCode::unavail, "broker returned no data for " + name.value());
  return Fetched{std::move(*r.body), r.result.at("entry").at("digest").get<std::string>(),
                 r.result.at("site_id").get<std::string>()};
}

mcat::CatalogEntry BrokerDriver::store_from_cache(const std::string& subject, const mcat::DataName& name,
                                                  const std::string& bytes) {
  return call("srb.put", subject, {{"dataname", name.value()}}, bytes).result.at("entry").get<mcat::CatalogEntry>();
}

std::vector<broker::ListedEntry> BrokerDriver::list(const std::string& subject, const std::string& prefix) {
  std::vector<broker::ListedEntry> out;
  const auto reply = call("srb.ls", subject, {{"prefix", prefix}});
  for (const auto& j : reply.result.at("entries")) {
    out.push_back(listed_from_json(j));
  }
  return out;
}

bool StagedDriver::serves_direct(const std::vector<std::string>&) { return false; }

DirectLocation StagedDriver::fetch_direct(const std::string&, const mcat::DataName&) {
  fail(ErrorCode::badreq, "the staged driver serves every get through the cache");
}

bool DirectDriver::serves_direct(const std::vector<std::string>& protocols) {
  return std::find(protocols.begin(), protocols.end(), kProtoVaultStream) != protocols.end();
}

DirectLocation DirectDriver::fetch_direct(const std::string& subject, const mcat::DataName& name) {
  auto r = call("srb.locate", subject, {{"dataname", name.value()}}).result;
  auto entry = r.at("entry").get<mcat::CatalogEntry>();
  auto replica = r.at("replica").get<mcat::Replica>();
  return DirectLocation{r.at("vault_addr").get<std::string>(), replica.blob_id, replica.site_id, entry.size,
                        entry.digest};
}

std::shared_ptr<DriverBoundary> make_driver(DriverKind kind, wire::Connector connect, std::string broker_addr,
                                            wire::Auth service_auth) {
  if (kind == DriverKind::direct) {
    return std::make_shared<DirectDriver>(std::move(connect), std::move(broker_addr), std::move(service_auth));
  }
  return std::make_shared<StagedDriver>(std::move(connect), std::move(broker_addr), std::move(service_auth));
}

DriverServer::DriverServer(std::shared_ptr<DriverBoundary> driver, TokenAuthority authority)
    : driver_(std::move(driver)), authority_(std::move(authority)) {}

Message DriverServer::handle(const Message& request) {
  return wire::guarded(request, [&]() -> Message {
    const std::string op = wire::op_of(request);
    const Json& args = wire::args_of(request);
    if (op == "sys.ping") return wire::ok_reply(request, {{"service", "driver"}, {"kind", driver_->kind()}});
    if (!authority_.is_service(wire::authenticated_subject(request, authority_))) {
      fail(ErrorCode::perm, "the driver boundary only serves the gateway");
    }
    auto subject = [&] { return wire::arg_string(args, "subject"); };
    auto name = [&] { return mcat::DataName::parse(wire::arg_string(args, "dataname")); };

    if (op == "drv.kind") return wire::ok_reply(request, {{"kind", driver_->kind()}});
    if (op == "drv.stat") return wire::ok_reply(request, {{"entry", driver_->stat(subject(), name())}});
    if (op == "drv.check") {
      bool allow = driver_->check(subject(), name(), mcat::parse_perm(wire::arg_string(args, "mode")));
      return wire::ok_reply(request, {{"allow", allow}});
    }
    if (op == "drv.fetch") {
      auto f = driver_->fetch_to_cache(subject(), name());
      return wire::ok_reply(request, {{"digest", f.digest}, {"site_id", f.site_id}}, std::move(f.bytes));
    }
    if (op == "drv.store") {
      if (!request.body) fail(ErrorCode::badreq, "drv.store needs a body");
      return wire::ok_reply(request, {{"entry", driver_->store_from_cache(subject(), name(), *request.body)}});
    }
    if (op == "drv.serves_direct") {
      return wire::ok_reply(request,
                            {{"direct", driver_->serves_direct(args.at("protocols").get<std::vector<std::string>>())}});
    }
    if (op == "drv.fetch_direct") return wire::ok_reply(request, location_to_json(driver_->fetch_direct(subject(), name())));
    if (op == "drv.list") {
      Json arr = Json::array();
      for (const auto& e : driver_->list(subject(), wire::arg_string(args, "prefix"))) arr.push_back(broker::to_json(e));
      return wire::ok_reply(request, {{"entries", arr}});
    }
    fail(ErrorCode::badreq, "unknown op " + op);
  });
}

RemoteDriver::RemoteDriver(std::shared_ptr<wire::Channel> channel, wire::Auth service_auth)
    : channel_(std::move(channel)), auth_(std::move(service_auth)) {}

wire::Reply RemoteDriver::call(const std::string& op, Json args, std::optional<std::string> body) {
  return wire::call(*channel_, op, std::move(args), auth_, std::move(body));
}

std::string RemoteDriver::kind() const {
  return wire::call(*channel_, "drv.kind", Json::object(), auth_).result.at("kind").get<std::string>();
}

mcat::CatalogEntry RemoteDriver::stat(const std::string& subject, const mcat::DataName& name) {
  return call("drv.stat", {{"subject", subject}, {"dataname", name.value()}}).result.at("entry").get<mcat::CatalogEntry>();
}

bool RemoteDriver::check(const std::string& subject, const mcat::DataName& name, mcat::Perm mode) {
  return call("drv.check", {{"subject", subject}, {"dataname", name.value()}, {"mode", std::string(mcat::to_string(mode))}})
      .result.at("allow")
      .get<bool>();
}

Fetched RemoteDriver::fetch_to_cache(const std::string& subject, const mcat::DataName& name) {
  auto r = call("drv.fetch", {{"subject", subject}, {"dataname", name.value()}});
  return Fetched{r.body.value_or(""), r.result.at("digest").get<std::string>(), r.result.at("site_id").get<std::string>()};
}

mcat::CatalogEntry RemoteDriver::store_from_cache(const std::string& subject, const mcat::DataName& name,
                                                  const std::string& bytes) {
  return call("drv.store", {{"subject", subject}, {"dataname", name.value()}}, bytes)
      .result.at("entry")
      .get<mcat::CatalogEntry>();
}

bool RemoteDriver::serves_direct(const std::vector<std::string>& protocols) {
  return call("drv.serves_direct", {{"protocols", protocols}}).result.at("direct").get<bool>();
}

DirectLocation RemoteDriver::fetch_direct(const std::string& subject, const mcat::DataName& name) {
  return location_from_json(call("drv.fetch_direct", {{"subject", subject}, {"dataname", name.value()}}).result);
}

std::vector<broker::ListedEntry> RemoteDriver::list(const std::string& subject, const std::string& prefix) {
  std::vector<broker::ListedEntry> out;
  const auto reply = call("drv.list", {{"subject", subject}, {"prefix", prefix}});
  for (const auto& j : reply.result.at("entries")) {
    out.push_back(listed_from_json(j));
  }
  return out;
}

}  // namespace gvf::srm
