#include "gvf/vault/vault_service.hpp"

namespace gvf::vault {

using wire::Json;
using wire::Message;

VaultService::VaultService(std::shared_ptr<BlobStore> store, TokenAuthority authority)
    : store_(std::move(store)), authority_(std::move(authority)) {}

Message VaultService::handle(const Message& request) {
  return wire::guarded(request, [&]() -> Message {
    const std::string op = wire::op_of(request);
    const Json& args = wire::args_of(request);
    if (op == "sys.ping") return wire::ok_reply(request, {{"service", "vault"}});

    std::string subject = wire::authenticated_subject(request, authority_);
    auto require_service = [&] {
      if (!authority_.is_service(subject)) throw Error(ErrorCode::perm, op + " is reserved for the service subject");
    };

    if (op == "blob.write") {
      require_service();
      if (!request.body) throw Error(ErrorCode::badreq, "blob.write needs a body");
      auto res = store_->write_blob(*request.body, wire::arg_string(args, "digest"));
      return wire::ok_reply(request, {{"blob_id", res.blob_id}, {"created", res.created}});
    }
    if (op == "blob.read") {
      std::optional<ByteRange> range;
      auto begin = wire::arg_opt_u64(args, "begin");
      auto end = wire::arg_opt_u64(args, "end");
      if (begin || end) {
        auto st = store_->stat_blob(wire::arg_string(args, "blob_id"));
        range = ByteRange{begin.value_or(0), end.value_or(st.size)};
      }
      return wire::ok_reply(request, {{"blob_id", wire::arg_string(args, "blob_id")}},
                            store_->read_blob(wire::arg_string(args, "blob_id"), range));
    }
    if (op == "blob.delete") {
      require_service();
      bool absent = store_->delete_blob(wire::arg_string(args, "blob_id"));
      return wire::ok_reply(request, {{"already_absent", absent}});
    }
    if (op == "blob.stat") {
      auto st = store_->stat_blob(wire::arg_string(args, "blob_id"));
      return wire::ok_reply(request, {{"size", st.size}, {"digest", st.digest}});
    }
    if (op == "blob.usage") {
      auto u = store_->usage();
      return wire::ok_reply(request, {{"used_bytes", u.used_bytes}, {"capacity", u.capacity}, {"blobs", u.blobs}});
    }
    throw Error(ErrorCode::badreq, "unknown op " + op);
  });
}

VaultClient::VaultClient(std::shared_ptr<wire::Channel> channel, wire::Auth auth)
    : channel_(std::move(channel)), auth_(std::move(auth)) {}

WriteResult VaultClient::write(const std::string& bytes, const std::string& digest) {
  auto r = wire::call(*channel_, "blob.write", {{"digest", digest}}, auth_, bytes);
  return {r.result.at("blob_id").get<std::string>(), r.result.at("created").get<bool>()};
}

std::string VaultClient::read(const std::string& blob_id, std::optional<ByteRange> range) {
  Json args{{"blob_id", blob_id}};
  if (range) {
    args["begin"] = range->begin;
    args["end"] = range->end;
  }
  auto r = wire::call(*channel_, "blob.read", args, auth_);
  return r.body.value_or(std::string());
}

bool VaultClient::remove(const std::string& blob_id) {
  auto r = wire::call(*channel_, "blob.delete", {{"blob_id", blob_id}}, auth_);
  return r.result.at("already_absent").get<bool>();
}

BlobStat VaultClient::stat(const std::string& blob_id) {
  auto r = wire::call(*channel_, "blob.stat", {{"blob_id", blob_id}}, auth_);
  return {r.result.at("size").get<std::uint64_t>(), r.result.at("digest").get<std::string>()};
}

Usage VaultClient::usage() {
  auto r = wire::call(*channel_, "blob.usage", Json::object(), auth_);
  return {r.result.at("used_bytes").get<std::uint64_t>(), r.result.at("capacity").get<std::uint64_t>(),
          r.result.value("blobs", std::size_t{0})};
}

}  // namespace gvf::vault
