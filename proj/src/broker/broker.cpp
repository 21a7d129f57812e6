#include "gvf/broker/broker.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "gvf/common/digest.hpp"
#include "gvf/common/framing.hpp"

namespace gvf::broker {

namespace fs = std::filesystem;
using mcat::Perm;
using mcat::Replica;
using mcat::ReplicaState;
using wire::Json;
using wire::Message;

namespace {

// Holds the master's per-name lock for one broker operation.
class NameLease {
 public:
  NameLease(CatalogAccess& access, const DataName& name) : access_(access), name_(name), id_(access.lock(name)) {}
  ~NameLease() {
    try {
      access_.unlock(name_, id_);
    } catch (...) {
    }
  }
  NameLease(const NameLease&) = delete;
  NameLease& operator=(const NameLease&) = delete;

 private:
  CatalogAccess& access_;
  const DataName& name_;
  std::string id_;
};

}  // namespace

std::vector<Replica> rank_replicas(const CatalogEntry& entry, const std::string& requester_site,
                                   const std::string& master_site) {
  std::vector<Replica> online;
  for (const auto& r : entry.replicas) {
    if (r.state == ReplicaState::online) online.push_back(r);
  }
  auto tier = [&](const Replica& r) {
    if (r.site_id == requester_site) return 0;
    if (r.site_id == master_site) return 1;
    return 2;
  };
  std::sort(online.begin(), online.end(), [&](const Replica& a, const Replica& b) {
    int ta = tier(a);
    int tb = tier(b);
    if (ta != tb) return ta < tb;
    return a.vault_id < b.vault_id;
  });
  return online;
}

Replica replica_select(const CatalogEntry& entry, const std::string& requester_site, const std::string& master_site) {
  auto ranked = rank_replicas(entry, requester_site, master_site);
  if (ranked.empty()) fail(ErrorCode::unavail, "no online replica of " + entry.dataname.value());
  return ranked.front();
}

std::string derive_local_name(std::string_view subject) {
  auto cn = subject.rfind("CN=");
  std::string_view base = cn == std::string_view::npos ? subject : subject.substr(cn + 3);
  std::string out;
  for (char c : base) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' || c == '_' ||
              c == '-';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "user_" + sha256_hex(subject).substr(0, 8);
  return out;
}

Broker::Broker(FederationConfig federation, std::string site_id, wire::Connector connect,
               std::shared_ptr<mcat::Catalog> catalog)
    : federation_(std::move(federation)),
      site_(federation_.site(site_id)),
      master_site_(federation_.master().site_id),
      connect_(std::move(connect)),
      authority_(federation_.secret, federation_.service_subject),
      catalog_(std::move(catalog)) {
  service_auth_ = wire::Auth{federation_.service_subject, authority_.token_for(federation_.service_subject)};
  if (site_.role == SiteRole::master) {
    if (!catalog_) fail(ErrorCode::badreq, "master site needs a catalog");
    access_ = std::make_unique<LocalCatalogAccess>(catalog_, std::make_shared<NameLocks>());
  } else {
    access_ = std::make_unique<RemoteCatalogAccess>(connect_(federation_.master().listen), service_auth_);
  }
  subject_map_ = site_.subject_map;

  if (!site_.data_dir.empty()) {
    fs::create_directories(site_.data_dir);
    if (auto saved = read_frame_file((fs::path(site_.data_dir) / "users").string())) {
      for (auto& [subject, user] : Json::parse(*saved).get<std::map<std::string, std::string>>()) {
        subject_map_.emplace(subject, user);
      }
    }
    if (auto saved = read_frame_file((fs::path(site_.data_dir) / "pending").string())) {
      for (const auto& p : Json::parse(*saved)) {
        pending_.push_back({p.at("vault_id"), p.at("blob_id"), p.at("dataname")});
      }
    }
    std::ifstream in(fs::path(site_.data_dir) / "orphans.log");
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      auto j = Json::parse(line, nullptr, false);
      if (j.is_discarded()) continue;
      orphans_.push_back({j.value("vault_id", ""), j.value("blob_id", ""), j.value("dataname", ""),
                          j.value("reason", "")});
    }
  }
}

Session Broker::authenticate(const std::string& subject, const std::string& token) {
  if (!mcat::Subject::is_valid(subject)) fail(ErrorCode::badreq, "invalid subject");
  if (!authority_.verify(subject, token)) fail(ErrorCode::perm, "bad proof token for " + subject);
  return session_as(subject);
}

Session Broker::session_as(const std::string& subject) {
  Session s;
  s.subject = Subject(subject);
  s.authenticated = true;
  if (authority_.is_service(subject)) {
    s.local_user = "gvf-service";
    return s;
  }
  {
    std::shared_lock lock(users_mu_);
    if (auto it = subject_map_.find(subject); it != subject_map_.end()) {
      s.local_user = it->second;
      return s;
    }
  }
  if (!site_.auto_map) fail(ErrorCode::badreq, "unknown subject " + subject);
  std::unique_lock lock(users_mu_);
  auto [it, added] = subject_map_.emplace(subject, derive_local_name(subject));
  if (added) save_users_locked();
  s.local_user = it->second;
  return s;
}

void Broker::mkuser(const Session& admin, const std::string& subject, const std::string& local_user) {
  if (!admin.authenticated || !authority_.is_service(admin.subject.value())) {
    fail(ErrorCode::perm, "mkuser requires the service subject");
  }
  if (!mcat::Subject::is_valid(subject) || local_user.empty()) fail(ErrorCode::badreq, "bad mkuser arguments");
  std::unique_lock lock(users_mu_);
  subject_map_[subject] = local_user;
  save_users_locked();
}

void Broker::save_users_locked() {
  if (site_.data_dir.empty()) return;
  write_frame_file_atomic((fs::path(site_.data_dir) / "users").string(), Json(subject_map_).dump());
}

vault::VaultClient Broker::vault_client(const std::string& vault_id) {
  const auto& v = federation_.vault(vault_id);
  return vault::VaultClient(connect_(v.listen), service_auth_);
}

std::string Broker::read_replica_bytes(const CatalogEntry& entry, Replica* served_from) {
  auto ranked = rank_replicas(entry, site_.site_id, master_site_);
  if (ranked.empty()) fail(ErrorCode::unavail, "no online replica of " + entry.dataname.value());
  for (const auto& r : ranked) {
    try {
      std::string bytes = vault_client(r.vault_id).read(r.blob_id);
      if (sha256_hex(bytes) != entry.digest) continue;
      if (served_from) *served_from = r;
      return bytes;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::unavail && e.code() != ErrorCode::noent) throw;
    }
  }
  fail(ErrorCode::unavail, "every replica of " + entry.dataname.value() + " is unreachable");
}

void Broker::record_orphan(OrphanRecord rec) {
  std::lock_guard lock(log_mu_);
  if (!site_.data_dir.empty()) {
    std::ofstream out(fs::path(site_.data_dir) / "orphans.log", std::ios::app);
    out << Json{{"vault_id", rec.vault_id}, {"blob_id", rec.blob_id}, {"dataname", rec.dataname},
                {"reason", rec.reason}}
               .dump()
        << "\n";
  }
  orphans_.push_back(std::move(rec));
}

Broker::BlobHold::BlobHold(Broker& broker, std::string vault_id, std::string blob_id)
    : broker_(&broker), key_(std::move(vault_id), std::move(blob_id)) {
  std::lock_guard lock(broker_->log_mu_);
  broker_->holds_[key_]++;
}

void Broker::BlobHold::release() {
  if (broker_ == nullptr) return;
  std::lock_guard lock(broker_->log_mu_);
  auto it = broker_->holds_.find(key_);
  if (it != broker_->holds_.end() && --it->second == 0) broker_->holds_.erase(it);
  broker_ = nullptr;
}

bool Broker::held(const std::string& vault_id, const std::string& blob_id) const {
  std::lock_guard lock(log_mu_);
  return holds_.contains({vault_id, blob_id});
}

void Broker::delete_blob_if_unreferenced(const std::string& vault_id, const std::string& blob_id,
                                         const std::string& dataname, const std::string& reason) {
  if (held(vault_id, blob_id) || access_->blob_refs(vault_id, blob_id) > 0) return;
  try {
    vault_client(vault_id).remove(blob_id);
  } catch (const Error&) {
    record_orphan({vault_id, blob_id, dataname, reason});
  }
}

void Broker::save_pending_locked() {
  if (site_.data_dir.empty()) return;
  Json arr = Json::array();
  for (const auto& p : pending_) arr.push_back({{"vault_id", p.vault_id}, {"blob_id", p.blob_id}, {"dataname", p.dataname}});
  write_frame_file_atomic((fs::path(site_.data_dir) / "pending").string(), arr.dump());
}

void Broker::add_pending(Pending p) {
  std::lock_guard lock(log_mu_);
  pending_.push_back(std::move(p));
  save_pending_locked();
}

void Broker::drop_pending(const Pending& p) {
  std::lock_guard lock(log_mu_);
  auto it = std::find_if(pending_.begin(), pending_.end(), [&](const Pending& q) {
    return q.vault_id == p.vault_id && q.blob_id == p.blob_id && q.dataname == p.dataname;
  });
  if (it == pending_.end()) return;
  pending_.erase(it);
  save_pending_locked();
}

std::size_t Broker::pending_count() const {
  std::lock_guard lock(log_mu_);
  return pending_.size();
}

void Broker::reconcile_pending() {
  std::vector<Pending> todo;
  {
    std::lock_guard lock(log_mu_);
    todo = pending_;
  }
  for (const auto& p : todo) {
    // Still waiting on its own catalog commit.
    if (held(p.vault_id, p.blob_id)) continue;
    try {
      if (access_->blob_refs(p.vault_id, p.blob_id) == 0) vault_client(p.vault_id).remove(p.blob_id);
      drop_pending(p);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::unavail) return;
      drop_pending(p);
    }
  }
}

CatalogEntry Broker::srb_put(const Session& session, const DataName& name, const std::string& bytes) {
  if (!session.authenticated) fail(ErrorCode::perm, "not authenticated");
  reconcile_pending();
  NameLease lease(*access_, name);

  auto existing = access_->find(name);
  if (existing) {
    if (!existing->acl.allows(session.subject, Perm::write)) fail(ErrorCode::perm, "write denied on " + name.value());
  } else if (name.owner() != session.local_user) {
    fail(ErrorCode::perm, session.subject.value() + " may not create files under /home/" + std::string(name.owner()));
  }

  const std::string digest = sha256_hex(bytes);
  if (site_.local_vaults.empty()) fail(ErrorCode::unavail, "site " + site_.site_id + " has no vault");
  std::optional<Error> last_error;
  std::string vault_id;
  vault::WriteResult written;
  for (const auto& candidate : site_.local_vaults) {
    try {
      written = vault_client(candidate).write(bytes, digest);
      vault_id = candidate;
      break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::nospace && e.code() != ErrorCode::unavail) throw;
      last_error = e;
    }
  }
  if (vault_id.empty()) throw *last_error;
  BlobHold hold(*this, vault_id, digest);

  Pending pending{vault_id, digest, name.value()};
  if (written.created) add_pending(pending);
  Replica replica{vault_id, digest, federation_.vault(vault_id).site_id, ReplicaState::online};
  CatalogEntry entry;
  try {
    entry = existing ? access_->update_content(session.subject, name, bytes.size(), digest, replica)
                     : access_->register_entry(session.subject, session.local_user, name, bytes.size(), digest,
                                               replica);
  } catch (const Error& e) {
    // Unknown outcome when the master is unreachable: leave the blob to
    // reconcile_pending. A definite refusal rolls the blob back now.
    if (e.code() != ErrorCode::unavail && written.created) {
      hold.release();
      try {
        delete_blob_if_unreferenced(vault_id, digest, name.value(), "put rollback");
        drop_pending(pending);
      } catch (const Error&) {
      }
    }
    throw;
  }
  if (written.created) drop_pending(pending);

  if (existing && existing->digest != digest) {
    for (const auto& r : existing->replicas) {
      try {
        delete_blob_if_unreferenced(r.vault_id, existing->digest, name.value(), "overwrite");
      } catch (const Error&) {
        record_orphan({r.vault_id, existing->digest, name.value(), "overwrite"});
      }
    }
  }
  return entry;
}

GetResult Broker::srb_get(const Session& session, const DataName& name) {
  if (!session.authenticated) fail(ErrorCode::perm, "not authenticated");
  auto entry = access_->find(name);
  if (!entry) fail(ErrorCode::noent, name.value());
  if (!entry->acl.allows(session.subject, Perm::read)) fail(ErrorCode::perm, "read denied on " + name.value());
  GetResult out;
  out.bytes = read_replica_bytes(*entry, &out.source);
  out.entry = std::move(*entry);
  return out;
}

Located Broker::srb_locate(const Session& session, const DataName& name) {
  if (!session.authenticated) fail(ErrorCode::perm, "not authenticated");
  auto entry = access_->find(name);
  if (!entry) fail(ErrorCode::noent, name.value());
  if (!entry->acl.allows(session.subject, Perm::read)) fail(ErrorCode::perm, "read denied on " + name.value());
  // First ranked replica whose vault answers for the blob; the caller streams
  // from it directly, so a dead vault is no use.
  auto ranked = rank_replicas(*entry, site_.site_id, master_site_);
  if (ranked.empty()) fail(ErrorCode::unavail, "no online replica of " + entry->dataname.value());
  for (const auto& r : ranked) {
    try {
      vault_client(r.vault_id).stat(r.blob_id);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::unavail && e.code() != ErrorCode::noent) throw;
      continue;
    }
    Located out;
    out.replica = r;
    out.vault_addr = federation_.vault(r.vault_id).listen;
    out.entry = std::move(*entry);
    return out;
  }
  fail(ErrorCode::unavail, "every replica of " + name.value() + " is unreachable");
}

CatalogEntry Broker::srb_replicate(const Session& session, const DataName& name, const std::string& target_vault) {
  if (!session.authenticated) fail(ErrorCode::perm, "not authenticated");
  auto entry = access_->find(name);
  if (!entry) fail(ErrorCode::noent, name.value());
  if (!entry->acl.allows(session.subject, Perm::read)) fail(ErrorCode::perm, "read denied on " + name.value());
  const auto& target = federation_.vault(target_vault);
  NameLease lease(*access_, name);
  // Re-read under the lock so a concurrent overwrite is not copied stale.
  entry = access_->find(name);
  if (!entry) fail(ErrorCode::noent, name.value());
  auto slot = std::find_if(entry->replicas.begin(), entry->replicas.end(),
                           [&](const Replica& r) { return r.vault_id == target_vault; });
  if (slot != entry->replicas.end() && slot->state == ReplicaState::online) {
    fail(ErrorCode::exists, name.value() + " already has a replica on " + target_vault);
  }
  std::string bytes = read_replica_bytes(*entry, nullptr);
  auto written = vault_client(target_vault).write(bytes, entry->digest);
  BlobHold hold(*this, target_vault, entry->digest);
  try {
    if (slot != entry->replicas.end()) return access_->set_replica_state(name, target_vault, ReplicaState::online);
    return access_->add_replica(name, Replica{target_vault, entry->digest, target.site_id, ReplicaState::online});
  } catch (const Error& e) {
    if (e.code() != ErrorCode::unavail && written.created) {
      hold.release();
      delete_blob_if_unreferenced(target_vault, entry->digest, name.value(), "replicate rollback");
    }
    throw;
  }
}

void Broker::srb_rm(const Session& session, const DataName& name) {
  if (!session.authenticated) fail(ErrorCode::perm, "not authenticated");
  NameLease lease(*access_, name);

  auto entry = access_->find(name);
  if (!entry) fail(ErrorCode::noent, name.value());
  if (!entry->acl.allows(session.subject, Perm::del)) fail(ErrorCode::perm, "delete denied on " + name.value());
  for (const auto& r : entry->replicas) {
    // Content-addressed blobs may be shared with other entries.
    if (held(r.vault_id, r.blob_id) || access_->blob_refs(r.vault_id, r.blob_id) > 1) continue;
    try {
      vault_client(r.vault_id).remove(r.blob_id);
    } catch (const Error&) {
      record_orphan({r.vault_id, r.blob_id, name.value(), "rm"});
    }
  }
  access_->remove(session.subject, name);
}

std::vector<ListedEntry> Broker::srb_ls(const Session& session, const std::string& prefix) {
  if (!session.authenticated) fail(ErrorCode::perm, "not authenticated");
  std::vector<ListedEntry> out;
  for (auto& e : access_->list(prefix)) {
    ListedEntry le;
    le.readable = e.acl.allows(session.subject, Perm::read);
    le.writable = e.acl.allows(session.subject, Perm::write);
    le.deletable = e.acl.allows(session.subject, Perm::del);
    le.entry = std::move(e);
    out.push_back(std::move(le));
  }
  return out;
}

CatalogEntry Broker::srb_set_acl(const Session& session, const DataName& name, const mcat::Grants& grants) {
  if (!session.authenticated) fail(ErrorCode::perm, "not authenticated");
  return access_->set_acl(session.subject, name, grants);
}

std::vector<OrphanRecord> Broker::orphans() const {
  std::lock_guard lock(log_mu_);
  return orphans_;
}

Json to_json(const ListedEntry& e) {
  return Json{{"entry", e.entry}, {"readable", e.readable}, {"writable", e.writable}, {"deletable", e.deletable}};
}

Session Broker::session_for(const Message& request, bool allow_service) {
  auto auth = wire::auth_of(request);
  if (!auth) fail(ErrorCode::perm, "request is not authenticated");
  Session s = authenticate(auth->subject, auth->token);
  if (authority_.is_service(auth->subject)) {
    // Gateway drivers act on behalf of the requesting grid user.
    if (auto as = wire::arg_opt_string(wire::args_of(request), "as")) return session_as(*as);
    if (!allow_service) fail(ErrorCode::badreq, "service requests must name a subject with 'as'");
  }
  return s;
}

Message Broker::handle(const Message& request) {
  return wire::guarded(request, [&]() -> Message {
    const std::string op = wire::op_of(request);
    const Json& args = wire::args_of(request);
    auto name = [&] { return DataName::parse(wire::arg_string(args, "dataname")); };

    if (op == "sys.ping") return wire::ok_reply(request, {{"service", "broker"}, {"site_id", site_.site_id}});

    if (op.rfind("mcat.", 0) == 0) {
      if (!is_master()) fail(ErrorCode::badreq, "site " + site_.site_id + " is not the master");
      Session s = session_for(request, true);
      if (!authority_.is_service(s.subject.value())) fail(ErrorCode::perm, "catalog access is for brokers only");
      return wire::ok_reply(request, handle_mcat_op(*access_, op, args));
    }
    if (op == "admin.mkuser") {
      Session s = session_for(request, true);
      mkuser(s, wire::arg_string(args, "subject"), wire::arg_string(args, "local_user"));
      return wire::ok_reply(request, Json::object());
    }

    Session s = session_for(request, true);
    if (op == "srb.auth") return wire::ok_reply(request, {{"subject", s.subject.value()}, {"local_user", s.local_user}});
    if (op == "srb.put") {
      if (!request.body) fail(ErrorCode::badreq, "srb.put needs a body");
      return wire::ok_reply(request, {{"entry", srb_put(s, name(), *request.body)}});
    }
    if (op == "srb.get") {
      auto got = srb_get(s, name());
      return wire::ok_reply(request,
                            {{"entry", got.entry}, {"vault_id", got.source.vault_id}, {"site_id", got.source.site_id}},
                            std::move(got.bytes));
    }
    if (op == "srb.replicate") {
      return wire::ok_reply(request, {{"entry", srb_replicate(s, name(), wire::arg_string(args, "target_vault"))}});
    }
    if (op == "srb.rm") {
      srb_rm(s, name());
      return wire::ok_reply(request, Json::object());
    }
    if (op == "srb.locate") {
      auto loc = srb_locate(s, name());
      return wire::ok_reply(request, {{"entry", loc.entry}, {"replica", loc.replica}, {"vault_addr", loc.vault_addr}});
    }
    if (op == "srb.ls") {
      Json arr = Json::array();
      for (const auto& e : srb_ls(s, wire::arg_opt_string(args, "prefix").value_or("/"))) arr.push_back(to_json(e));
      return wire::ok_reply(request, {{"entries", arr}});
    }
    if (op == "srb.stat") {
      auto e = access_->find(name());
      if (!e) fail(ErrorCode::noent, wire::arg_string(args, "dataname"));
      if (!e->acl.allows(s.subject, Perm::read)) fail(ErrorCode::perm, "read denied on " + e->dataname.value());
      return wire::ok_reply(request, {{"entry", *e}});
    }
    if (op == "srb.check") {
      auto e = access_->find(name());
      if (!e) fail(ErrorCode::noent, wire::arg_string(args, "dataname"));
      bool allow = e->acl.allows(s.subject, mcat::parse_perm(wire::arg_string(args, "mode")));
      return wire::ok_reply(request, {{"allow", allow}});
    }
    if (op == "srb.set_acl") {
      return wire::ok_reply(request,
                            {{"entry", srb_set_acl(s, name(), mcat::grants_from_json(args.value("grants", Json())))}});
    }
    if (op == "srb.orphans") {
      Json arr = Json::array();
      for (const auto& o : orphans()) {
        arr.push_back({{"vault_id", o.vault_id}, {"blob_id", o.blob_id}, {"dataname", o.dataname}, {"reason", o.reason}});
      }
      return wire::ok_reply(request, {{"orphans", arr}});
    }
    if (op == "srb.reconcile") {
      reconcile_pending();
      return wire::ok_reply(request, {{"pending", pending_count()}});
    }
    fail(ErrorCode::badreq, "unknown op " + op);
  });
}

}  // namespace gvf::broker
