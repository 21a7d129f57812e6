#include "gvf/broker/catalog_access.hpp"

namespace gvf::broker {

using wire::Json;

std::string NameLocks::acquire(const std::string& name, std::chrono::milliseconds wait) {
  std::unique_lock lock(mu_);
  auto deadline = std::chrono::steady_clock::now() + wait;
  for (;;) {
    auto now = std::chrono::steady_clock::now();
    auto it = held_.find(name);
    if (it == held_.end() || it->second.expires <= now) {
      std::string id = "lease-" + std::to_string(++counter_);
      held_[name] = Held{id, now + lease_};
      return id;
    }
    auto until = std::min(deadline, it->second.expires);
    if (now >= deadline) throw Error(ErrorCode::unavail, "dataname is locked: " + name);
    cv_.wait_until(lock, until);
  }
}

void NameLocks::release(const std::string& name, const std::string& lease_id) {
  {
    std::lock_guard lock(mu_);
    auto it = held_.find(name);
    if (it == held_.end() || it->second.lease_id != lease_id) return;
    held_.erase(it);
  }
  cv_.notify_all();
}

LocalCatalogAccess::LocalCatalogAccess(std::shared_ptr<mcat::Catalog> catalog, std::shared_ptr<NameLocks> locks)
    : catalog_(std::move(catalog)), locks_(std::move(locks)) {}

std::optional<CatalogEntry> LocalCatalogAccess::find(const DataName& name) { return catalog_->find(name); }

CatalogEntry LocalCatalogAccess::register_entry(const Subject& subject, const std::string& owner_name,
                                                const DataName& name, std::uint64_t size, const std::string& digest,
                                                const mcat::Replica& replica) {
  return catalog_->register_entry(subject, owner_name, name, size, digest, replica);
}

CatalogEntry LocalCatalogAccess::update_content(const Subject& subject, const DataName& name, std::uint64_t size,
                                                const std::string& digest, const mcat::Replica& replica) {
  return catalog_->update_content(subject, name, size, digest, replica);
}

CatalogEntry LocalCatalogAccess::set_acl(const Subject& subject, const DataName& name, const mcat::Grants& grants) {
  return catalog_->set_acl(subject, name, grants);
}

CatalogEntry LocalCatalogAccess::add_replica(const DataName& name, const mcat::Replica& replica) {
  return catalog_->add_replica(name, replica);
}

CatalogEntry LocalCatalogAccess::set_replica_state(const DataName& name, const std::string& vault_id,
                                                   mcat::ReplicaState state) {
  return catalog_->set_replica_state(name, vault_id, state);
}

void LocalCatalogAccess::remove(const Subject& subject, const DataName& name) { catalog_->remove(subject, name); }

std::vector<CatalogEntry> LocalCatalogAccess::list(const std::string& prefix) { return catalog_->list(prefix); }

mcat::ChangePage LocalCatalogAccess::changes_since(std::uint64_t cursor, std::size_t limit) {
  return catalog_->changes_since(cursor, limit);
}

std::size_t LocalCatalogAccess::blob_refs(const std::string& vault_id, const std::string& blob_id) {
  return catalog_->blob_refs(vault_id, blob_id);
}

std::string LocalCatalogAccess::lock(const DataName& name) {
  return locks_->acquire(name.value(), std::chrono::seconds(30));
}

void LocalCatalogAccess::unlock(const DataName& name, const std::string& lease_id) {
  locks_->release(name.value(), lease_id);
}

RemoteCatalogAccess::RemoteCatalogAccess(std::shared_ptr<wire::Channel> master, wire::Auth service_auth)
    : master_(std::move(master)), auth_(std::move(service_auth)) {}

Json RemoteCatalogAccess::call(const std::string& op, Json args) {
  return wire::call(*master_, op, std::move(args), auth_).result;
}

std::optional<CatalogEntry> RemoteCatalogAccess::find(const DataName& name) {
  auto r = call("mcat.lookup", {{"dataname", name.value()}});
  if (r.value("found", false)) return r.at("entry").get<CatalogEntry>();
  return std::nullopt;
}

CatalogEntry RemoteCatalogAccess::register_entry(const Subject& subject, const std::string& owner_name,
                                                 const DataName& name, std::uint64_t size, const std::string& digest,
                                                 const mcat::Replica& replica) {
  return call("mcat.register", {{"subject", subject.value()},
                                {"owner_name", owner_name},
                                {"dataname", name.value()},
                                {"size", size},
                                {"digest", digest},
                                {"replica", replica}})
      .at("entry")
      .get<CatalogEntry>();
}

CatalogEntry RemoteCatalogAccess::update_content(const Subject& subject, const DataName& name, std::uint64_t size,
                                                 const std::string& digest, const mcat::Replica& replica) {
  return call("mcat.update_content", {{"subject", subject.value()},
                                      {"dataname", name.value()},
                                      {"size", size},
                                      {"digest", digest},
                                      {"replica", replica}})
      .at("entry")
      .get<CatalogEntry>();
}

CatalogEntry RemoteCatalogAccess::set_acl(const Subject& subject, const DataName& name, const mcat::Grants& grants) {
  return call("mcat.set_acl",
              {{"subject", subject.value()}, {"dataname", name.value()}, {"grants", mcat::grants_to_json(grants)}})
      .at("entry")
      .get<CatalogEntry>();
}

CatalogEntry RemoteCatalogAccess::add_replica(const DataName& name, const mcat::Replica& replica) {
  return call("mcat.add_replica", {{"dataname", name.value()}, {"replica", replica}}).at("entry").get<CatalogEntry>();
}

CatalogEntry RemoteCatalogAccess::set_replica_state(const DataName& name, const std::string& vault_id,
                                                    mcat::ReplicaState state) {
  return call("mcat.set_replica_state",
              {{"dataname", name.value()}, {"vault_id", vault_id}, {"state", std::string(mcat::to_string(state))}})
      .at("entry")
      .get<CatalogEntry>();
}

void RemoteCatalogAccess::remove(const Subject& subject, const DataName& name) {
  call("mcat.delete", {{"subject", subject.value()}, {"dataname", name.value()}});
}

std::vector<CatalogEntry> RemoteCatalogAccess::list(const std::string& prefix) {
  return call("mcat.list", {{"prefix", prefix}}).at("entries").get<std::vector<CatalogEntry>>();
}

mcat::ChangePage RemoteCatalogAccess::changes_since(std::uint64_t cursor, std::size_t limit) {
  auto r = call("mcat.changes_since", {{"cursor", cursor}, {"limit", limit}});
  mcat::ChangePage page;
  page.events = r.at("events").get<std::vector<mcat::Event>>();
  page.new_cursor = r.at("new_cursor").get<std::uint64_t>();
  return page;
}

std::size_t RemoteCatalogAccess::blob_refs(const std::string& vault_id, const std::string& blob_id) {
  return call("mcat.blob_refs", {{"vault_id", vault_id}, {"blob_id", blob_id}}).at("refs").get<std::size_t>();
}

std::string RemoteCatalogAccess::lock(const DataName& name) {
  return call("mcat.lock", {{"dataname", name.value()}}).at("lease").get<std::string>();
}

void RemoteCatalogAccess::unlock(const DataName& name, const std::string& lease_id) {
  call("mcat.unlock", {{"dataname", name.value()}, {"lease", lease_id}});
}

Json handle_mcat_op(CatalogAccess& catalog, const std::string& op, const Json& args) {
  auto name = [&] { return DataName::parse(wire::arg_string(args, "dataname")); };
  auto subject = [&] { return Subject(wire::arg_string(args, "subject")); };
  auto entry_result = [](const CatalogEntry& e) { return Json{{"entry", e}}; };

  if (op == "mcat.lookup") {
    auto e = catalog.find(name());
    if (!e) return Json{{"found", false}};
    return Json{{"found", true}, {"entry", *e}};
  }
  if (op == "mcat.register") {
    return entry_result(catalog.register_entry(subject(), wire::arg_string(args, "owner_name"), name(),
                                               wire::arg_u64(args, "size"), wire::arg_string(args, "digest"),
                                               args.at("replica").get<mcat::Replica>()));
  }
  if (op == "mcat.update_content") {
    return entry_result(catalog.update_content(subject(), name(), wire::arg_u64(args, "size"),
                                               wire::arg_string(args, "digest"),
                                               args.at("replica").get<mcat::Replica>()));
  }
  if (op == "mcat.set_acl") {
    return entry_result(catalog.set_acl(subject(), name(), mcat::grants_from_json(args.value("grants", Json()))));
  }
  if (op == "mcat.add_replica") {
    return entry_result(catalog.add_replica(name(), args.at("replica").get<mcat::Replica>()));
  }
  if (op == "mcat.set_replica_state") {
    return entry_result(catalog.set_replica_state(name(), wire::arg_string(args, "vault_id"),
                                                  mcat::parse_replica_state(wire::arg_string(args, "state"))));
  }
  if (op == "mcat.delete") {
    catalog.remove(subject(), name());
    return Json::object();
  }
  if (op == "mcat.list") {
    return Json{{"entries", catalog.list(wire::arg_opt_string(args, "prefix").value_or("/"))}};
  }
  if (op == "mcat.changes_since") {
    auto page = catalog.changes_since(wire::arg_u64(args, "cursor"),
                                      wire::arg_opt_u64(args, "limit").value_or(std::numeric_limits<std::size_t>::max()));
    return Json{{"events", page.events}, {"new_cursor", page.new_cursor}};
  }
  if (op == "mcat.blob_refs") {
    return Json{{"refs", catalog.blob_refs(wire::arg_string(args, "vault_id"), wire::arg_string(args, "blob_id"))}};
  }
  if (op == "mcat.lock") return Json{{"lease", catalog.lock(name())}};
  if (op == "mcat.unlock") {
    catalog.unlock(name(), wire::arg_string(args, "lease"));
    return Json::object();
  }
  throw Error(ErrorCode::badreq, "unknown op " + op);
}

}  // namespace gvf::broker
