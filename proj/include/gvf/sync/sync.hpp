#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <string_view>

#include "gvf/broker/catalog_access.hpp"
#include "gvf/common/clock.hpp"
#include "gvf/rls/service.hpp"

namespace gvf::sync {

// FNV-1a over the dataname bytes with the 128-bit parameters, printed
// big-endian. Name-based, so an overwrite keeps its GUID.
rls::Guid derive_guid(std::string_view dataname);
rls::Surl derive_surl(const mcat::CatalogEntry& entry, const mcat::Replica& replica, const std::string& authority);

struct SyncStats {
  std::uint64_t published = 0;
  std::uint64_t unpublished = 0;
  std::uint64_t skipped = 0;
};

struct SyncState {
  std::uint64_t cursor = 0;
  std::uint64_t last_run = 0;
  // Counts for the most recent completed run.
  SyncStats stats;
};

struct RescanReport {
  std::uint64_t added = 0;
  std::uint64_t removed = 0;
  std::uint64_t agreed = 0;
};

wire::Json to_json(const SyncState& s);
SyncState sync_state_from_json(const wire::Json& j);
wire::Json to_json(const RescanReport& r);

struct SyncOptions {
  // host:port written into every SURL; RLS records under other authorities
  // are left alone.
  std::string authority;
  // Holds sync_state and the run lease; empty keeps state in memory.
  std::string state_dir;
  std::size_t page_size = 256;
};

class Syncer {
 public:
  Syncer(broker::CatalogAccess& mcat, rls::RlsClient& rls, SyncOptions options, const Clock* clock = nullptr);

  // Applies every catalog change since the stored cursor. The stored cursor
  // moves only after the whole run succeeded. A second concurrent run is
  // refused with E_BADREQ.
  SyncState sync_once();
  RescanReport full_rescan();

  SyncState load_state() const;

 private:
  class Lease;
  SyncState run(SyncState state);
  void save_state(const SyncState& state) const;

  broker::CatalogAccess& mcat_;
  rls::RlsClient& rls_;
  SyncOptions options_;
  const Clock* clock_;
  std::mutex inproc_lease_;
  SyncState memory_state_;
};

}  // namespace gvf::sync
