#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "gvf/common/framing.hpp"
#include "gvf/rls/types.hpp"

namespace gvf::rls {

struct RlsOptions {
  std::string dir;
  bool fsync = false;
  std::size_t snapshot_every = 1024;
};

struct MappingPage {
  std::vector<Mapping> mappings;
  // Empty once the listing is exhausted.
  std::string next_cursor;
};

// Flat GUID <-> SURL catalog. Each SURL belongs to at most one GUID.
class RlsCatalog {
 public:
  explicit RlsCatalog(RlsOptions options = {});

  // True when the pair was not already present.
  bool publish(const Guid& guid, const Surl& surl);
  // True when the pair existed and was removed.
  bool unpublish(const Guid& guid, const Surl& surl);

  std::set<std::string> lookup_guid(const Guid& guid) const;
  Guid lookup_surl(const Surl& surl) const;
  // Mappings with guid > cursor, in guid order.
  MappingPage list_all(const std::string& cursor, std::size_t page_size) const;

  std::size_t guid_count() const;
  // Count of state-changing publish/unpublish calls since construction.
  std::uint64_t mutations() const;

 private:
  void apply(bool publish, const std::string& guid, const std::string& surl);
  void commit(bool publish, const std::string& guid, const std::string& surl);
  void recover();
  void write_snapshot();

  RlsOptions options_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::set<std::string>> by_guid_;
  std::map<std::string, std::string> by_surl_;
  std::uint64_t seq_ = 0;
  std::uint64_t mutations_ = 0;
  std::size_t records_since_snapshot_ = 0;
  std::optional<FrameLog> journal_;
};

}  // namespace gvf::rls
