#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gvf/common/clock.hpp"

namespace gvf::srm {

struct PinToken {
  std::string token;
  std::string key;
  std::string subject;
  std::uint64_t expires = 0;
};

struct Reservation {
  std::string token;
  std::string subject;
  std::uint64_t bytes = 0;
  std::uint64_t used_bytes = 0;
  std::uint64_t expires = 0;
};

struct CacheStats {
  std::uint64_t capacity = 0;
  std::uint64_t used_bytes = 0;
  std::uint64_t reserved_bytes = 0;
  std::uint64_t reserved_unfilled = 0;
  std::uint64_t entries = 0;
  std::uint64_t evictions = 0;
};

// Gateway disk cache. free = capacity - used - unfilled reservation bytes.
// Eviction is strict LRU over entries that are neither pinned (by an
// unexpired pin) nor busy with a transfer. Pins and reservations expire on
// the supplied clock. An empty dir keeps bytes in memory.
class StagingCache {
 public:
  StagingCache(std::string dir, std::uint64_t capacity, const Clock& clock);

  bool contains(const std::string& key) const;
  // Marks key most recently used. nullopt on a miss.
  std::optional<std::uint64_t> touch(const std::string& key);
  std::string read(const std::string& key) const;
  std::string origin(const std::string& key) const;

  // Adds key (a no-op touch when present), evicting as needed. Throws
  // E_NOSPACE without evicting anything when the space cannot be found.
  // With hold the entry comes back marked busy. Returns the evicted keys.
  std::vector<std::string> insert(const std::string& key, std::string_view bytes, const std::string& origin,
                                  bool hold = false);
  // touch + acquire_busy in one step; false on a miss.
  bool checkout(const std::string& key);
  void erase(const std::string& key);
  // Ensures free_bytes() >= need; same failure rule as insert.
  std::vector<std::string> make_room(std::uint64_t need);

  PinToken pin(const std::string& key, const std::string& subject, std::uint64_t lifetime);
  void unpin(const std::string& subject, const std::string& token);
  bool pinned(const std::string& key) const;

  Reservation reserve(const std::string& subject, std::uint64_t bytes, std::uint64_t lifetime);
  void release(const std::string& subject, const std::string& token);
  // Charges bytes to an active reservation owned by subject.
  void draw(const std::string& subject, const std::string& token, std::uint64_t bytes);
  std::optional<Reservation> reservation(const std::string& token) const;
  std::vector<Reservation> active_reservations() const;

  void acquire_busy(const std::string& key);
  void release_busy(const std::string& key);

  std::uint64_t free_bytes() const;
  CacheStats stats() const;
  // Least recently used first.
  std::vector<std::string> lru_order() const;

 private:
  struct Entry {
    std::uint64_t size = 0;
    std::string origin;
    std::string memory;
    std::list<std::string>::iterator lru;
    unsigned busy = 0;
  };

  void purge_expired_locked() const;
  bool pinned_locked(const std::string& key) const;
  std::uint64_t unfilled_locked() const;
  std::uint64_t free_locked() const;
  std::vector<std::string> make_room_locked(std::uint64_t need);
  void erase_locked(const std::string& key);
  std::string path_for(const std::string& key) const;

  std::string dir_;
  std::uint64_t capacity_;
  const Clock& clock_;
  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
  std::list<std::string> lru_;
  std::uint64_t used_ = 0;
  std::uint64_t evictions_ = 0;
  std::uint64_t next_token_ = 0;
  mutable std::map<std::string, PinToken> pins_;
  mutable std::map<std::string, Reservation> reservations_;
};

}  // namespace gvf::srm
