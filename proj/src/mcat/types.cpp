#include "gvf/mcat/types.hpp"

#include "gvf/common/error.hpp"

namespace gvf::mcat {

Subject::Subject(std::string value) : value_(std::move(value)) {
  if (!is_valid(value_)) fail(ErrorCode::badreq, "invalid subject");
}

bool Subject::is_valid(std::string_view value) {
  if (value.empty() || value.size() > 256) return false;
  for (unsigned char c : value) {
    if (c < 0x20 || c == 0x7f) return false;
  }
  return true;
}

namespace {

bool valid_segment(std::string_view seg) {
  if (seg.empty() || seg == "." || seg == "..") return false;
  for (char c : seg) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' ||
              c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

}  // namespace

bool DataName::is_valid(std::string_view text) {
  if (text.size() > kMaxLength || text.size() < 2 || text.front() != '/') return false;
  std::size_t count = 0;
  std::size_t pos = 1;
  while (true) {
    auto slash = text.find('/', pos);
    auto seg = text.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos);
    if (!valid_segment(seg)) return false;
    if (count == 0 && seg != "home") return false;
    ++count;
    if (slash == std::string_view::npos) break;
    pos = slash + 1;
  }
  return count >= 3;
}

DataName DataName::parse(std::string_view text) {
  if (!is_valid(text)) fail(ErrorCode::badreq, "malformed dataname '" + std::string(text.substr(0, 64)) + "'");
  return DataName(std::string(text));
}

std::string_view DataName::owner() const {
  std::string_view v = value_;
  auto start = v.find('/', 1) + 1;
  auto end = v.find('/', start);
  return v.substr(start, end - start);
}

bool under_prefix(std::string_view name, std::string_view prefix) {
  while (prefix.size() > 1 && prefix.back() == '/') prefix.remove_suffix(1);
  if (prefix.empty() || prefix == "/") return true;
  if (name.substr(0, prefix.size()) != prefix) return false;
  return name.size() == prefix.size() || name[prefix.size()] == '/';
}

Perm parse_perm(std::string_view text) {
  if (text == "read" || text == "r") return Perm::read;
  if (text == "write" || text == "w") return Perm::write;
  if (text == "delete" || text == "d") return Perm::del;
  fail(ErrorCode::badreq, "unknown permission '" + std::string(text) + "'");
}

std::string_view to_string(Perm p) {
  switch (p) {
    case Perm::read: return "read";
    case Perm::write: return "write";
    case Perm::del: return "delete";
  }
  return "read";
}

PermSet PermSet::from_json(const Json& j) {
  PermSet set;
  if (j.is_string()) {
    auto s = j.get<std::string>();
    if (s == "read" || s == "write" || s == "delete") return set.add(parse_perm(s));
    for (char c : s) set.add(parse_perm(std::string_view(&c, 1)));
    return set;
  }
  if (!j.is_array()) fail(ErrorCode::badreq, "permission set must be a list");
  for (const auto& p : j) {
    if (!p.is_string()) fail(ErrorCode::badreq, "permission must be a string");
    set.add(parse_perm(p.get<std::string>()));
  }
  return set;
}

Json PermSet::to_json() const {
  Json out = Json::array();
  for (Perm p : {Perm::read, Perm::write, Perm::del}) {
    if (has(p)) out.push_back(std::string(to_string(p)));
  }
  return out;
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::registered: return "registered";
    case EventKind::acl_changed: return "acl_changed";
    case EventKind::replica_changed: return "replica_changed";
    case EventKind::deleted: return "deleted";
  }
  return "registered";
}

EventKind parse_event_kind(std::string_view text) {
  if (text == "registered") return EventKind::registered;
  if (text == "acl_changed") return EventKind::acl_changed;
  if (text == "replica_changed") return EventKind::replica_changed;
  if (text == "deleted") return EventKind::deleted;
  fail(ErrorCode::badreq, "unknown event kind '" + std::string(text) + "'");
}

std::string_view to_string(ReplicaState state) { return state == ReplicaState::online ? "online" : "dead"; }

ReplicaState parse_replica_state(std::string_view text) {
  if (text == "online") return ReplicaState::online;
  if (text == "dead") return ReplicaState::dead;
  fail(ErrorCode::badreq, "unknown replica state '" + std::string(text) + "'");
}

Json grants_to_json(const Grants& grants) {
  Json out = Json::object();
  for (const auto& [who, perms] : grants) out[who.value()] = perms.to_json();
  return out;
}

Grants grants_from_json(const Json& j) {
  if (j.is_null()) return {};
  if (!j.is_object()) fail(ErrorCode::badreq, "grants must be an object");
  Grants out;
  for (const auto& [who, perms] : j.items()) {
    PermSet set = PermSet::from_json(perms);
    if (set.empty()) fail(ErrorCode::badreq, "empty permission set for '" + who + "'");
    out.emplace(Subject(who), set);
  }
  return out;
}

void to_json(Json& j, const Replica& r) {
  j = Json{{"vault_id", r.vault_id}, {"blob_id", r.blob_id}, {"site_id", r.site_id},
           {"state", std::string(to_string(r.state))}};
}

void from_json(const Json& j, Replica& r) {
  r.vault_id = j.at("vault_id").get<std::string>();
  r.blob_id = j.at("blob_id").get<std::string>();
  r.site_id = j.at("site_id").get<std::string>();
  r.state = parse_replica_state(j.value("state", "online"));
}

void to_json(Json& j, const CatalogEntry& e) {
  j = Json{{"dataname", e.dataname.value()},
           {"owner", e.acl.owner.value()},
           {"grants", grants_to_json(e.acl.grants)},
           {"size", e.size},
           {"digest", e.digest},
           {"replicas", e.replicas},
           {"created_at", e.created_at},
           {"modified_at", e.modified_at}};
}

void from_json(const Json& j, CatalogEntry& e) {
  e.dataname = DataName::parse(j.at("dataname").get<std::string>());
  e.acl.owner = Subject(j.at("owner").get<std::string>());
  e.acl.grants = grants_from_json(j.value("grants", Json::object()));
  e.size = j.at("size").get<std::uint64_t>();
  e.digest = j.at("digest").get<std::string>();
  e.replicas = j.at("replicas").get<std::vector<Replica>>();
  e.created_at = j.value("created_at", std::uint64_t{0});
  e.modified_at = j.value("modified_at", std::uint64_t{0});
}

void to_json(Json& j, const Event& e) {
  j = Json{{"kind", std::string(to_string(e.kind))}, {"dataname", e.dataname}, {"seq", e.seq}};
}

void from_json(const Json& j, Event& e) {
  e.kind = parse_event_kind(j.at("kind").get<std::string>());
  e.dataname = j.at("dataname").get<std::string>();
  e.seq = j.at("seq").get<std::uint64_t>();
}

}  // namespace gvf::mcat
