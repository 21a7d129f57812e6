#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "gvf/broker/catalog_access.hpp"
#include "gvf/common/auth.hpp"
#include "gvf/config.hpp"
#include "gvf/vault/vault_service.hpp"
#include "gvf/wire/channel.hpp"

namespace gvf::broker {

struct Session {
  Subject subject;
  bool authenticated = false;
  // Derived from the subject map; never from the transport peer.
  std::string local_user;
};

struct GetResult {
  std::string bytes;
  CatalogEntry entry;
  mcat::Replica source;
};

struct Located {
  CatalogEntry entry;
  mcat::Replica replica;
  std::string vault_addr;
};

struct ListedEntry {
  CatalogEntry entry;
  bool readable = false;
  bool writable = false;
  bool deletable = false;
};

struct OrphanRecord {
  std::string vault_id;
  std::string blob_id;
  std::string dataname;
  std::string reason;
};

// Deterministic replica preference: online replicas at the requester's site,
// then at the master site, then the rest; ties break on lowest vault_id.
std::vector<mcat::Replica> rank_replicas(const CatalogEntry& entry, const std::string& requester_site,
                                         const std::string& master_site);
// First of rank_replicas; E_UNAVAIL when no replica is online.
mcat::Replica replica_select(const CatalogEntry& entry, const std::string& requester_site,
                             const std::string& master_site);

// Local name for an auto-mapped subject: the last CN (or the whole subject)
// with every character outside [A-Za-z0-9._-] replaced by '_'.
std::string derive_local_name(std::string_view subject);

// One SRB daemon. Every site runs one; the master additionally owns the
// catalog and answers mcat.* for the others. Clients only ever talk to their
// local broker, which reaches the catalog through the master.
class Broker : public wire::Handler {
 public:
  // catalog is non-null exactly for the master site.
  Broker(FederationConfig federation, std::string site_id, wire::Connector connect,
         std::shared_ptr<mcat::Catalog> catalog = nullptr);

  Session authenticate(const std::string& subject, const std::string& token);

  CatalogEntry srb_put(const Session& session, const DataName& name, const std::string& bytes);
  GetResult srb_get(const Session& session, const DataName& name);
  CatalogEntry srb_replicate(const Session& session, const DataName& name, const std::string& target_vault);
  void srb_rm(const Session& session, const DataName& name);
  Located srb_locate(const Session& session, const DataName& name);
  std::vector<ListedEntry> srb_ls(const Session& session, const std::string& prefix);
  CatalogEntry srb_set_acl(const Session& session, const DataName& name, const mcat::Grants& grants);
  void mkuser(const Session& admin, const std::string& subject, const std::string& local_user);

  std::vector<OrphanRecord> orphans() const;
  // Settles puts whose catalog commit had an unknown outcome.
  void reconcile_pending();
  std::size_t pending_count() const;

  const std::string& site_id() const { return site_.site_id; }
  bool is_master() const { return static_cast<bool>(catalog_); }
  CatalogAccess& catalog_access() { return *access_; }

  wire::Message handle(const wire::Message& request) override;

 private:
  struct Pending {
    std::string vault_id;
    std::string blob_id;
    std::string dataname;
  };

  Session session_for(const wire::Message& request, bool allow_service);
  Session session_as(const std::string& subject);
  vault::VaultClient vault_client(const std::string& vault_id);
  std::string read_replica_bytes(const CatalogEntry& entry, mcat::Replica* served_from);
  void delete_blob_if_unreferenced(const std::string& vault_id, const std::string& blob_id,
                                   const std::string& dataname, const std::string& reason);
  void record_orphan(OrphanRecord rec);
  void add_pending(Pending p);
  void drop_pending(const Pending& p);
  void save_pending_locked();
  void save_users_locked();

  // A blob this broker has just written and not yet committed to the catalog.
  // Reconcile and garbage collection leave held blobs alone.
  class BlobHold {
   public:
    BlobHold(Broker& broker, std::string vault_id, std::string blob_id);
    ~BlobHold() { release(); }
    BlobHold(const BlobHold&) = delete;
    BlobHold& operator=(const BlobHold&) = delete;
    void release();

   private:
    Broker* broker_;
    std::pair<std::string, std::string> key_;
  };
  bool held(const std::string& vault_id, const std::string& blob_id) const;

  FederationConfig federation_;
  SiteConfig site_;
  std::string master_site_;
  wire::Connector connect_;
  TokenAuthority authority_;
  wire::Auth service_auth_;
  std::shared_ptr<mcat::Catalog> catalog_;
  std::unique_ptr<CatalogAccess> access_;

  mutable std::shared_mutex users_mu_;
  std::map<std::string, std::string> subject_map_;

  mutable std::mutex log_mu_;
  std::vector<OrphanRecord> orphans_;
  std::vector<Pending> pending_;
  std::map<std::pair<std::string, std::string>, int> holds_;
};

wire::Json to_json(const ListedEntry& e);

}  // namespace gvf::broker
