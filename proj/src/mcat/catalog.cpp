#include "gvf/mcat/catalog.hpp"

#include <algorithm>
#include <filesystem>
#include <mutex>

#include "gvf/common/digest.hpp"
#include "gvf/common/error.hpp"

namespace gvf::mcat {

namespace fs = std::filesystem;

namespace {

constexpr const char* kJournalFile = "mcat.journal";
constexpr const char* kSnapshotFile = "mcat.snapshot";

void validate_replica(const Replica& r, const std::string& digest) {
  if (r.vault_id.empty() || r.site_id.empty()) fail(ErrorCode::badreq, "replica needs vault_id and site_id");
  if (r.blob_id != digest) fail(ErrorCode::badreq, "replica blob does not match entry digest");
}

}  // namespace

Catalog::Catalog(CatalogOptions options) : options_(std::move(options)) {
  if (!options_.dir.empty()) {
    fs::create_directories(options_.dir);
    recover();
    journal_.emplace((fs::path(options_.dir) / kJournalFile).string(), options_.fsync);
  }
}

void Catalog::recover() {
  auto snap_path = (fs::path(options_.dir) / kSnapshotFile).string();
  if (auto snap = read_frame_file(snap_path)) {
    auto j = Json::parse(*snap);
    seq_ = j.at("seq").get<std::uint64_t>();
    for (const auto& e : j.at("entries")) {
      auto entry = e.get<CatalogEntry>();
      entries_.emplace(entry.dataname.value(), std::move(entry));
    }
    events_ = j.at("events").get<std::vector<Event>>();
  }
  for (const auto& rec : FrameLog::read_all((fs::path(options_.dir) / kJournalFile).string())) {
    auto j = Json::parse(rec);
    auto seq = j.at("seq").get<std::uint64_t>();
    // Records already folded into the snapshot are skipped.
    if (seq <= seq_) continue;
    std::optional<CatalogEntry> post;
    if (!j.at("entry").is_null()) post = j.at("entry").get<CatalogEntry>();
    apply(seq, parse_event_kind(j.at("kind").get<std::string>()), j.at("dataname").get<std::string>(),
          post ? &*post : nullptr);
    ++records_since_snapshot_;
  }
}

void Catalog::apply(std::uint64_t seq, EventKind kind, const std::string& name, const CatalogEntry* post_state) {
  if (post_state) {
    entries_.insert_or_assign(name, *post_state);
  } else {
    entries_.erase(name);
  }
  events_.push_back(Event{kind, name, seq});
  seq_ = seq;
}

void Catalog::commit(EventKind kind, const DataName& name, const CatalogEntry* post_state) {
  std::uint64_t seq = seq_ + 1;
  if (journal_) {
    Json rec{{"seq", seq}, {"kind", std::string(to_string(kind))}, {"dataname", name.value()}};
    rec["entry"] = post_state ? Json(*post_state) : Json(nullptr);
    journal_->append(rec.dump());
    ++records_since_snapshot_;
  }
  apply(seq, kind, name.value(), post_state);
  if (journal_ && records_since_snapshot_ >= options_.snapshot_every) write_snapshot();
}

void Catalog::write_snapshot() {
  Json snap{{"seq", seq_}, {"entries", Json::array()}, {"events", events_}};
  for (const auto& [_, e] : entries_) snap["entries"].push_back(e);
  write_frame_file_atomic((fs::path(options_.dir) / kSnapshotFile).string(), snap.dump());
  journal_->truncate();
  records_since_snapshot_ = 0;
}

CatalogEntry& Catalog::must_get(const DataName& name) {
  auto it = entries_.find(name.value());
  if (it == entries_.end()) fail(ErrorCode::noent, name.value());
  return it->second;
}

CatalogEntry Catalog::register_entry(const Subject& subject, std::string_view owner_name, const DataName& name,
                                     std::uint64_t size, const std::string& digest, const Replica& first_replica) {
  if (name.owner() != owner_name) {
    fail(ErrorCode::badreq, "owner segment '" + std::string(name.owner()) + "' does not match '" +
                                std::string(owner_name) + "'");
  }
  if (!is_lower_hex(digest, kDigestHexLength)) fail(ErrorCode::badreq, "digest must be 64 lowercase hex chars");
  validate_replica(first_replica, digest);
  if (first_replica.state != ReplicaState::online) fail(ErrorCode::badreq, "first replica must be online");

  std::unique_lock lock(mu_);
  if (entries_.contains(name.value())) fail(ErrorCode::exists, name.value());
  CatalogEntry e;
  e.dataname = name;
  e.acl.owner = subject;
  e.size = size;
  e.digest = digest;
  e.replicas = {first_replica};
  e.created_at = e.modified_at = seq_ + 1;
  commit(EventKind::registered, name, &e);
  return e;
}

CatalogEntry Catalog::lookup(const DataName& name) const {
  auto e = find(name);
  if (!e) fail(ErrorCode::noent, name.value());
  return *e;
}

std::optional<CatalogEntry> Catalog::find(const DataName& name) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(name.value());
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

bool Catalog::check_access(const Subject& subject, const DataName& name, Perm mode) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(name.value());
  if (it == entries_.end()) fail(ErrorCode::noent, name.value());
  return it->second.acl.allows(subject, mode);
}

CatalogEntry Catalog::set_acl(const Subject& subject, const DataName& name, const Grants& new_grants) {
  std::unique_lock lock(mu_);
  CatalogEntry next = must_get(name);
  if (next.acl.owner != subject) fail(ErrorCode::perm, "only the owner may change the ACL");
  for (const auto& [who, perms] : new_grants) {
    if (who == next.acl.owner) fail(ErrorCode::badreq, "owner may not appear in grants");
    if (perms.empty()) fail(ErrorCode::badreq, "empty permission set for '" + who.value() + "'");
  }
  next.acl.grants = new_grants;
  next.modified_at = seq_ + 1;
  commit(EventKind::acl_changed, name, &next);
  return next;
}

CatalogEntry Catalog::add_replica(const DataName& name, const Replica& replica) {
  std::unique_lock lock(mu_);
  CatalogEntry next = must_get(name);
  validate_replica(replica, next.digest);
  for (const auto& r : next.replicas) {
    if (r.vault_id == replica.vault_id) fail(ErrorCode::exists, "replica already on vault " + replica.vault_id);
  }
  next.replicas.push_back(replica);
  next.modified_at = seq_ + 1;
  commit(EventKind::replica_changed, name, &next);
  return next;
}

CatalogEntry Catalog::remove_replica(const DataName& name, const std::string& vault_id) {
  std::unique_lock lock(mu_);
  CatalogEntry next = must_get(name);
  auto it = std::find_if(next.replicas.begin(), next.replicas.end(),
                         [&](const Replica& r) { return r.vault_id == vault_id; });
  if (it == next.replicas.end()) fail(ErrorCode::noent, "no replica on vault " + vault_id);
  if (next.replicas.size() == 1) fail(ErrorCode::badreq, "cannot remove the last replica; delete the entry");
  next.replicas.erase(it);
  next.modified_at = seq_ + 1;
  commit(EventKind::replica_changed, name, &next);
  return next;
}

CatalogEntry Catalog::set_replica_state(const DataName& name, const std::string& vault_id, ReplicaState state) {
  std::unique_lock lock(mu_);
  CatalogEntry next = must_get(name);
  auto it = std::find_if(next.replicas.begin(), next.replicas.end(),
                         [&](const Replica& r) { return r.vault_id == vault_id; });
  if (it == next.replicas.end()) fail(ErrorCode::noent, "no replica on vault " + vault_id);
  if (it->state == state) return next;
  it->state = state;
  next.modified_at = seq_ + 1;
  commit(EventKind::replica_changed, name, &next);
  return next;
}

CatalogEntry Catalog::update_content(const Subject& subject, const DataName& name, std::uint64_t size,
                                     const std::string& digest, const Replica& fresh_replica) {
  if (!is_lower_hex(digest, kDigestHexLength)) fail(ErrorCode::badreq, "digest must be 64 lowercase hex chars");
  validate_replica(fresh_replica, digest);
  std::unique_lock lock(mu_);
  CatalogEntry next = must_get(name);
  if (!next.acl.allows(subject, Perm::write)) fail(ErrorCode::perm, "write denied on " + name.value());
  next.size = size;
  next.digest = digest;
  bool placed = false;
  for (auto& r : next.replicas) {
    // Other replicas now hold stale content: their slot points at the new
    // blob but stays dead until a re-replication fills it.
    r.blob_id = digest;
    if (r.vault_id == fresh_replica.vault_id) {
      r = fresh_replica;
      r.state = ReplicaState::online;
      placed = true;
    } else {
      r.state = ReplicaState::dead;
    }
  }
  if (!placed) {
    Replica r = fresh_replica;
    r.state = ReplicaState::online;
    next.replicas.push_back(r);
  }
  next.modified_at = seq_ + 1;
  commit(EventKind::replica_changed, name, &next);
  return next;
}

void Catalog::remove(const Subject& subject, const DataName& name) {
  std::unique_lock lock(mu_);
  CatalogEntry& cur = must_get(name);
  if (!cur.acl.allows(subject, Perm::del)) fail(ErrorCode::perm, "delete denied on " + name.value());
  commit(EventKind::deleted, name, nullptr);
}

std::vector<CatalogEntry> Catalog::list(std::string_view prefix) const {
  std::shared_lock lock(mu_);
  std::vector<CatalogEntry> out;
  // std::map<std::string> orders bytewise, which is the listing order.
  for (const auto& [name, e] : entries_) {
    if (under_prefix(name, prefix)) out.push_back(e);
  }
  return out;
}

ChangePage Catalog::changes_since(std::uint64_t cursor, std::size_t limit) const {
  std::shared_lock lock(mu_);
  if (cursor > seq_) fail(ErrorCode::badreq, "cursor is ahead of the catalog");
  ChangePage page;
  page.new_cursor = cursor;
  auto first = std::upper_bound(events_.begin(), events_.end(), cursor,
                                [](std::uint64_t c, const Event& e) { return c < e.seq; });
  for (auto it = first; it != events_.end() && page.events.size() < limit; ++it) {
    page.events.push_back(*it);
    page.new_cursor = it->seq;
  }
  return page;
}

std::uint64_t Catalog::sequence() const {
  std::shared_lock lock(mu_);
  return seq_;
}

std::size_t Catalog::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::size_t Catalog::blob_refs(const std::string& vault_id, const std::string& blob_id) const {
  std::shared_lock lock(mu_);
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) {
    for (const auto& r : e.replicas) {
      if (r.vault_id == vault_id && r.blob_id == blob_id) ++n;
    }
  }
  return n;
}

}  // namespace gvf::mcat
