#include "gvf/rls/service.hpp"

namespace gvf::rls {

using wire::Json;
using wire::Message;

RlsService::RlsService(std::shared_ptr<RlsCatalog> catalog, TokenAuthority authority, bool admin_only)
    : catalog_(std::move(catalog)), authority_(std::move(authority)), admin_only_(admin_only) {}

Message RlsService::handle(const Message& request) {
  return wire::guarded(request, [&]() -> Message {
    const std::string op = wire::op_of(request);
    const Json& args = wire::args_of(request);
    auto guid = [&] { return Guid::parse(wire::arg_string(args, "guid")); };
    auto surl = [&] { return Surl::parse(wire::arg_string(args, "surl")); };

    if (op == "sys.ping") return wire::ok_reply(request, {{"service", "rls"}});
    if (op == "rls.lookup_guid") return wire::ok_reply(request, {{"surls", catalog_->lookup_guid(guid())}});
    if (op == "rls.lookup_surl") return wire::ok_reply(request, {{"guid", catalog_->lookup_surl(surl()).value()}});
    if (op == "rls.list") {
      auto page = catalog_->list_all(wire::arg_opt_string(args, "cursor").value_or(""),
                                     wire::arg_opt_u64(args, "page_size").value_or(256));
      Json arr = Json::array();
      for (const auto& m : page.mappings) arr.push_back({{"guid", m.guid.value()}, {"surls", m.surls}});
      return wire::ok_reply(request, {{"mappings", arr}, {"next_cursor", page.next_cursor}});
    }

    if (op == "rls.publish" || op == "rls.unpublish") {
      std::string subject = wire::authenticated_subject(request, authority_);
      if (admin_only_ && !authority_.is_service(subject)) fail(ErrorCode::perm, op + " is restricted to the service");
      if (op == "rls.publish") return wire::ok_reply(request, {{"changed", catalog_->publish(guid(), surl())}});
      return wire::ok_reply(request, {{"already_absent", !catalog_->unpublish(guid(), surl())}});
    }
    fail(ErrorCode::badreq, "unknown op " + op);
  });
}

RlsClient::RlsClient(std::shared_ptr<wire::Channel> channel, std::optional<wire::Auth> auth)
    : channel_(std::move(channel)), auth_(std::move(auth)) {}

bool RlsClient::publish(const Guid& guid, const Surl& surl) {
  return wire::call(*channel_, "rls.publish", {{"guid", guid.value()}, {"surl", surl.str()}}, auth_)
      .result.at("changed")
      .get<bool>();
}

bool RlsClient::unpublish(const Guid& guid, const Surl& surl) {
  return !wire::call(*channel_, "rls.unpublish", {{"guid", guid.value()}, {"surl", surl.str()}}, auth_)
              .result.at("already_absent")
              .get<bool>();
}

std::set<std::string> RlsClient::lookup_guid(const Guid& guid) {
  return wire::call(*channel_, "rls.lookup_guid", {{"guid", guid.value()}}, std::nullopt)
      .result.at("surls")
      .get<std::set<std::string>>();
}

Guid RlsClient::lookup_surl(const Surl& surl) {
  return Guid::parse(
      wire::call(*channel_, "rls.lookup_surl", {{"surl", surl.str()}}, std::nullopt).result.at("guid").get<std::string>());
}

MappingPage RlsClient::list_all(const std::string& cursor, std::size_t page_size) {
  auto r = wire::call(*channel_, "rls.list", {{"cursor", cursor}, {"page_size", page_size}}, std::nullopt).result;
  MappingPage page;
  for (const auto& m : r.at("mappings")) {
    page.mappings.push_back(Mapping{Guid::parse(m.at("guid").get<std::string>()), m.at("surls").get<std::set<std::string>>()});
  }
  page.next_cursor = r.at("next_cursor").get<std::string>();
  return page;
}

}  // namespace gvf::rls
