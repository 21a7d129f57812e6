#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "gvf/common/framing.hpp"
#include "gvf/mcat/types.hpp"

namespace gvf::mcat {

struct CatalogOptions {
  // Directory for journal and snapshot; empty keeps the catalog in memory.
  std::string dir;
  bool fsync = false;
  // A snapshot is cut (and the journal emptied) after this many records.
  std::size_t snapshot_every = 1024;
};

// The central metadata catalog. Mutations are serialized through one writer
// lock and journaled before they are applied or acknowledged; readers share
// the latest committed state. Every mutation advances one catalog-wide
// sequence number, which doubles as the logical timestamp.
class Catalog {
 public:
  explicit Catalog(CatalogOptions options = {});

  // owner_name is the registering subject's local user name; it must equal
  // the <owner> segment of the dataname.
  CatalogEntry register_entry(const Subject& subject, std::string_view owner_name, const DataName& name,
                              std::uint64_t size, const std::string& digest, const Replica& first_replica);
  CatalogEntry lookup(const DataName& name) const;
  std::optional<CatalogEntry> find(const DataName& name) const;
  bool check_access(const Subject& subject, const DataName& name, Perm mode) const;
  CatalogEntry set_acl(const Subject& subject, const DataName& name, const Grants& new_grants);
  CatalogEntry add_replica(const DataName& name, const Replica& replica);
  CatalogEntry remove_replica(const DataName& name, const std::string& vault_id);
  // Marks an existing replica online or dead. Online requires the replica's
  // blob to carry the entry's current digest.
  CatalogEntry set_replica_state(const DataName& name, const std::string& vault_id, ReplicaState state);
  // Overwrite: new size/digest, the given replica online, every other replica
  // dead until it is re-replicated. Requires write access.
  CatalogEntry update_content(const Subject& subject, const DataName& name, std::uint64_t size,
                              const std::string& digest, const Replica& fresh_replica);
  void remove(const Subject& subject, const DataName& name);
  std::vector<CatalogEntry> list(std::string_view prefix) const;
  ChangePage changes_since(std::uint64_t cursor,
                           std::size_t limit = std::numeric_limits<std::size_t>::max()) const;

  std::uint64_t sequence() const;
  std::size_t size() const;
  // Number of live entries holding a replica of blob_id on vault_id.
  std::size_t blob_refs(const std::string& vault_id, const std::string& blob_id) const;

 private:
  void commit(EventKind kind, const DataName& name, const CatalogEntry* post_state);
  void apply(std::uint64_t seq, EventKind kind, const std::string& name, const CatalogEntry* post_state);
  void recover();
  void write_snapshot();
  CatalogEntry& must_get(const DataName& name);

  CatalogOptions options_;
  mutable std::shared_mutex mu_;
  std::map<std::string, CatalogEntry> entries_;
  std::vector<Event> events_;
  std::uint64_t seq_ = 0;
  std::size_t records_since_snapshot_ = 0;
  std::optional<FrameLog> journal_;
};

}  // namespace gvf::mcat
