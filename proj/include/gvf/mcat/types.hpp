#pragma once

#include <nlohmann/json.hpp>

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gvf::mcat {

using Json = nlohmann::json;

// Authenticated identity; stands in for a certificate distinguished name.
// Non-empty, printable, at most 256 bytes, compared byte-exact.
class Subject {
 public:
  Subject() = default;
  explicit Subject(std::string value);

  const std::string& value() const { return value_; }
  auto operator<=>(const Subject&) const = default;

  static bool is_valid(std::string_view value);

 private:
  std::string value_;
};

// Logical file name: /home/<owner>/<segment>(/<segment>)*.
class DataName {
 public:
  static constexpr std::size_t kMaxLength = 1024;

  DataName() = default;
  // Throws E_BADREQ on any grammar violation.
  static DataName parse(std::string_view text);
  static bool is_valid(std::string_view text);

  const std::string& value() const { return value_; }
  std::string_view owner() const;
  auto operator<=>(const DataName&) const = default;

 private:
  explicit DataName(std::string value) : value_(std::move(value)) {}
  std::string value_;
};

// True when name lies under prefix on segment boundaries ("/" matches all).
bool under_prefix(std::string_view name, std::string_view prefix);

enum class Perm : std::uint8_t { read = 1, write = 2, del = 4 };

class PermSet {
 public:
  constexpr PermSet() = default;
  constexpr explicit PermSet(std::uint8_t bits) : bits_(bits & 7u) {}
  static constexpr PermSet all() { return PermSet(7); }

  constexpr bool has(Perm p) const { return (bits_ & static_cast<std::uint8_t>(p)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  PermSet& add(Perm p) {
    bits_ |= static_cast<std::uint8_t>(p);
    return *this;
  }
  auto operator<=>(const PermSet&) const = default;

  // Accepts a list such as ["read","write"] or a compact "rwd" string.
  static PermSet from_json(const Json& j);
  Json to_json() const;

 private:
  std::uint8_t bits_ = 0;
};

Perm parse_perm(std::string_view text);
std::string_view to_string(Perm p);

using Grants = std::map<Subject, PermSet>;

struct Acl {
  Subject owner;
  Grants grants;

  bool allows(const Subject& who, Perm mode) const {
    if (who == owner) return true;
    auto it = grants.find(who);
    return it != grants.end() && it->second.has(mode);
  }
};

enum class ReplicaState { online, dead };

struct Replica {
  std::string vault_id;
  std::string blob_id;
  std::string site_id;
  ReplicaState state = ReplicaState::online;

  bool operator==(const Replica&) const = default;
};

struct CatalogEntry {
  DataName dataname;
  Acl acl;
  std::uint64_t size = 0;
  std::string digest;
  std::vector<Replica> replicas;
  std::uint64_t created_at = 0;
  std::uint64_t modified_at = 0;
};

enum class EventKind { registered, acl_changed, replica_changed, deleted };

struct Event {
  EventKind kind = EventKind::registered;
  std::string dataname;
  std::uint64_t seq = 0;

  bool operator==(const Event&) const = default;
};

struct ChangePage {
  std::vector<Event> events;
  std::uint64_t new_cursor = 0;
};

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);
std::string_view to_string(ReplicaState state);
ReplicaState parse_replica_state(std::string_view text);

Json grants_to_json(const Grants& grants);
// Validates subjects and rejects empty permission sets.
Grants grants_from_json(const Json& j);

void to_json(Json& j, const Replica& r);
void from_json(const Json& j, Replica& r);
void to_json(Json& j, const CatalogEntry& e);
void from_json(const Json& j, CatalogEntry& e);
void to_json(Json& j, const Event& e);
void from_json(const Json& j, Event& e);

}  // namespace gvf::mcat
