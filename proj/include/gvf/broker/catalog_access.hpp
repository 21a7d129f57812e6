#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gvf/mcat/catalog.hpp"
#include "gvf/wire/channel.hpp"

namespace gvf::broker {

using mcat::CatalogEntry;
using mcat::DataName;
using mcat::Subject;

// Per-dataname mutual exclusion held at the master. A lease that is not
// released within its lifetime may be taken over by the next acquirer.
class NameLocks {
 public:
  explicit NameLocks(std::chrono::milliseconds lease = std::chrono::seconds(30)) : lease_(lease) {}

  // Blocks up to wait; E_UNAVAIL if the name stays locked.
  std::string acquire(const std::string& name, std::chrono::milliseconds wait);
  void release(const std::string& name, const std::string& lease_id);

 private:
  struct Held {
    std::string lease_id;
    std::chrono::steady_clock::time_point expires;
  };
  std::chrono::milliseconds lease_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Held> held_;
  std::uint64_t counter_ = 0;
};

// Everything a broker needs from the catalog. The master binds this straight
// to its Catalog; server sites reach the master over mcat.* wire ops.
class CatalogAccess {
 public:
  virtual ~CatalogAccess() = default;

  virtual std::optional<CatalogEntry> find(const DataName& name) = 0;
  virtual CatalogEntry register_entry(const Subject& subject, const std::string& owner_name, const DataName& name,
                                      std::uint64_t size, const std::string& digest,
                                      const mcat::Replica& replica) = 0;
  virtual CatalogEntry update_content(const Subject& subject, const DataName& name, std::uint64_t size,
                                      const std::string& digest, const mcat::Replica& replica) = 0;
  virtual CatalogEntry set_acl(const Subject& subject, const DataName& name, const mcat::Grants& grants) = 0;
  virtual CatalogEntry add_replica(const DataName& name, const mcat::Replica& replica) = 0;
  virtual CatalogEntry set_replica_state(const DataName& name, const std::string& vault_id,
                                         mcat::ReplicaState state) = 0;
  virtual void remove(const Subject& subject, const DataName& name) = 0;
  virtual std::vector<CatalogEntry> list(const std::string& prefix) = 0;
  virtual mcat::ChangePage changes_since(std::uint64_t cursor, std::size_t limit) = 0;
  virtual std::size_t blob_refs(const std::string& vault_id, const std::string& blob_id) = 0;
  virtual std::string lock(const DataName& name) = 0;
  virtual void unlock(const DataName& name, const std::string& lease_id) = 0;
};

class LocalCatalogAccess : public CatalogAccess {
 public:
  LocalCatalogAccess(std::shared_ptr<mcat::Catalog> catalog, std::shared_ptr<NameLocks> locks);

  std::optional<CatalogEntry> find(const DataName& name) override;
  CatalogEntry register_entry(const Subject& subject, const std::string& owner_name, const DataName& name,
                              std::uint64_t size, const std::string& digest, const mcat::Replica& replica) override;
  CatalogEntry update_content(const Subject& subject, const DataName& name, std::uint64_t size,
                              const std::string& digest, const mcat::Replica& replica) override;
  CatalogEntry set_acl(const Subject& subject, const DataName& name, const mcat::Grants& grants) override;
  CatalogEntry add_replica(const DataName& name, const mcat::Replica& replica) override;
  CatalogEntry set_replica_state(const DataName& name, const std::string& vault_id,
                                 mcat::ReplicaState state) override;
  void remove(const Subject& subject, const DataName& name) override;
  std::vector<CatalogEntry> list(const std::string& prefix) override;
  mcat::ChangePage changes_since(std::uint64_t cursor, std::size_t limit) override;
  std::size_t blob_refs(const std::string& vault_id, const std::string& blob_id) override;
  std::string lock(const DataName& name) override;
  void unlock(const DataName& name, const std::string& lease_id) override;

 private:
  std::shared_ptr<mcat::Catalog> catalog_;
  std::shared_ptr<NameLocks> locks_;
};

class RemoteCatalogAccess : public CatalogAccess {
 public:
  RemoteCatalogAccess(std::shared_ptr<wire::Channel> master, wire::Auth service_auth);

  std::optional<CatalogEntry> find(const DataName& name) override;
  CatalogEntry register_entry(const Subject& subject, const std::string& owner_name, const DataName& name,
                              std::uint64_t size, const std::string& digest, const mcat::Replica& replica) override;
  CatalogEntry update_content(const Subject& subject, const DataName& name, std::uint64_t size,
                              const std::string& digest, const mcat::Replica& replica) override;
  CatalogEntry set_acl(const Subject& subject, const DataName& name, const mcat::Grants& grants) override;
  CatalogEntry add_replica(const DataName& name, const mcat::Replica& replica) override;
  CatalogEntry set_replica_state(const DataName& name, const std::string& vault_id,
                                 mcat::ReplicaState state) override;
  void remove(const Subject& subject, const DataName& name) override;
  std::vector<CatalogEntry> list(const std::string& prefix) override;
  mcat::ChangePage changes_since(std::uint64_t cursor, std::size_t limit) override;
  std::size_t blob_refs(const std::string& vault_id, const std::string& blob_id) override;
  std::string lock(const DataName& name) override;
  void unlock(const DataName& name, const std::string& lease_id) override;

 private:
  wire::Json call(const std::string& op, wire::Json args);

  std::shared_ptr<wire::Channel> master_;
  wire::Auth auth_;
};

// Serves the mcat.* ops on the master. Callers must hold the service subject.
wire::Json handle_mcat_op(CatalogAccess& catalog, const std::string& op, const wire::Json& args);

}  // namespace gvf::broker
