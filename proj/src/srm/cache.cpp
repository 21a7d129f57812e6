#include "gvf/srm/cache.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gvf/common/digest.hpp"
#include "gvf/common/error.hpp"

namespace gvf::srm {

namespace fs = std::filesystem;

StagingCache::StagingCache(std::string dir, std::uint64_t capacity, const Clock& clock)
    : dir_(std::move(dir)), capacity_(capacity), clock_(clock) {
  if (capacity_ == 0) fail(ErrorCode::badreq, "cache capacity must be > 0");
  if (!dir_.empty()) {
    // Staged copies are disposable; a restarted gateway starts cold.
    std::error_code ec;
    fs::remove_all(dir_, ec);
    fs::create_directories(dir_);
  }
}

std::string StagingCache::path_for(const std::string& key) const {
  return (fs::path(dir_) / sha256_hex(key)).string();
}

void StagingCache::purge_expired_locked() const {
  const auto now = clock_.now();
  std::erase_if(pins_, [&](const auto& kv) { return kv.second.expires <= now; });
  std::erase_if(reservations_, [&](const auto& kv) { return kv.second.expires <= now; });
}

bool StagingCache::pinned_locked(const std::string& key) const {
  for (const auto& [_, p] : pins_) {
    if (p.key == key) return true;
  }
  return false;
}

std::uint64_t StagingCache::unfilled_locked() const {
  std::uint64_t total = 0;
  for (const auto& [_, r] : reservations_) total += r.bytes - r.used_bytes;
  return total;
}

std::uint64_t StagingCache::free_locked() const {
  auto taken = used_ + unfilled_locked();
  return taken >= capacity_ ? 0 : capacity_ - taken;
}

bool StagingCache::contains(const std::string& key) const {
  std::lock_guard lock(mu_);
  return entries_.contains(key);
}

std::optional<std::uint64_t> StagingCache::touch(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  lru_.splice(lru_.end(), lru_, it->second.lru);
  return it->second.size;
}

std::string StagingCache::read(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorCode::noent, "not cached: " + key);
  if (dir_.empty()) return it->second.memory;
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) fail(ErrorCode::unavail, "cache file missing for " + key);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string StagingCache::origin(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorCode::noent, "not cached: " + key);
  return it->second.origin;
}

std::vector<std::string> StagingCache::make_room_locked(std::uint64_t need) {
  purge_expired_locked();
  if (need > capacity_) fail(ErrorCode::nospace, "request exceeds cache capacity");
  std::uint64_t free = free_locked();
  if (free >= need) return {};
  std::vector<std::string> victims;
  for (const auto& key : lru_) {
    const auto& e = entries_.at(key);
    if (e.busy > 0 || pinned_locked(key)) continue;
    victims.push_back(key);
    free += e.size;
    if (free >= need) break;
  }
  if (free < need) fail(ErrorCode::nospace, "cache full of pinned or in-transfer entries");
  for (const auto& key : victims) erase_locked(key);
  evictions_ += victims.size();
  return victims;
}

std::vector<std::string> StagingCache::make_room(std::uint64_t need) {
  std::lock_guard lock(mu_);
  return make_room_locked(need);
}

std::vector<std::string> StagingCache::insert(const std::string& key, std::string_view bytes,
                                              const std::string& origin, bool hold) {
  std::lock_guard lock(mu_);
  if (auto it = entries_.find(key); it != entries_.end()) {
    lru_.splice(lru_.end(), lru_, it->second.lru);
    if (hold) ++it->second.busy;
    return {};
  }
  auto evicted = make_room_locked(bytes.size());
  Entry e;
  e.size = bytes.size();
  e.origin = origin;
  if (dir_.empty()) {
    e.memory.assign(bytes);
  } else {
    std::ofstream out(path_for(key), std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::unavail, "cannot write cache file");
  }
  e.busy = hold ? 1 : 0;
  e.lru = lru_.insert(lru_.end(), key);
  used_ += e.size;
  entries_.emplace(key, std::move(e));
  return evicted;
}

void StagingCache::erase_locked(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return;
  used_ -= it->second.size;
  lru_.erase(it->second.lru);
  entries_.erase(it);
  if (!dir_.empty()) {
    std::error_code ec;
    fs::remove(path_for(key), ec);
  }
}

void StagingCache::erase(const std::string& key) {
  std::lock_guard lock(mu_);
  erase_locked(key);
}

PinToken StagingCache::pin(const std::string& key, const std::string& subject, std::uint64_t lifetime) {
  std::lock_guard lock(mu_);
  purge_expired_locked();
  if (!entries_.contains(key)) fail(ErrorCode::noent, "not cached: " + key);
  if (lifetime == 0) fail(ErrorCode::badreq, "pin lifetime must be > 0");
  PinToken p{"pin-" + std::to_string(++next_token_), key, subject, clock_.now() + lifetime};
  pins_.emplace(p.token, p);
  return p;
}

void StagingCache::unpin(const std::string& subject, const std::string& token) {
  std::lock_guard lock(mu_);
  purge_expired_locked();
  auto it = pins_.find(token);
  if (it == pins_.end()) fail(ErrorCode::noent, "no active pin " + token);
  if (it->second.subject != subject) fail(ErrorCode::perm, "pin " + token + " belongs to another subject");
  pins_.erase(it);
}

bool StagingCache::pinned(const std::string& key) const {
  std::lock_guard lock(mu_);
  purge_expired_locked();
  return pinned_locked(key);
}

Reservation StagingCache::reserve(const std::string& subject, std::uint64_t bytes, std::uint64_t lifetime) {
  std::lock_guard lock(mu_);
  purge_expired_locked();
  if (bytes == 0) fail(ErrorCode::badreq, "reservation must be > 0 bytes");
  if (lifetime == 0) fail(ErrorCode::badreq, "reservation lifetime must be > 0");
  std::uint64_t reserved = 0;
  for (const auto& [_, r] : reservations_) reserved += r.bytes;
  if (bytes > capacity_ || reserved + bytes > capacity_) fail(ErrorCode::nospace, "reservations would exceed capacity");
  make_room_locked(bytes);
  Reservation r{"res-" + std::to_string(++next_token_), subject, bytes, 0, clock_.now() + lifetime};
  reservations_.emplace(r.token, r);
  return r;
}

void StagingCache::release(const std::string& subject, const std::string& token) {
  std::lock_guard lock(mu_);
  purge_expired_locked();
  auto it = reservations_.find(token);
  if (it == reservations_.end()) fail(ErrorCode::noent, "no active reservation " + token);
  if (it->second.subject != subject) fail(ErrorCode::perm, "reservation " + token + " belongs to another subject");
  reservations_.erase(it);
}

void StagingCache::draw(const std::string& subject, const std::string& token, std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  purge_expired_locked();
  auto it = reservations_.find(token);
  if (it == reservations_.end()) fail(ErrorCode::noent, "no active reservation " + token);
  if (it->second.subject != subject) fail(ErrorCode::perm, "reservation " + token + " belongs to another subject");
  if (it->second.used_bytes + bytes > it->second.bytes) fail(ErrorCode::nospace, "reservation " + token + " exhausted");
  it->second.used_bytes += bytes;
}

std::optional<Reservation> StagingCache::reservation(const std::string& token) const {
  std::lock_guard lock(mu_);
  purge_expired_locked();
  auto it = reservations_.find(token);
  if (it == reservations_.end()) return std::nullopt;
  return it->second;
}

std::vector<Reservation> StagingCache::active_reservations() const {
  std::lock_guard lock(mu_);
  purge_expired_locked();
  std::vector<Reservation> out;
  for (const auto& [_, r] : reservations_) out.push_back(r);
  return out;
}

void StagingCache::acquire_busy(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorCode::noent, "not cached: " + key);
  ++it->second.busy;
}

bool StagingCache::checkout(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return false;
  lru_.splice(lru_.end(), lru_, it->second.lru);
  ++it->second.busy;
  return true;
}

void StagingCache::release_busy(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it != entries_.end() && it->second.busy > 0) --it->second.busy;
}

std::uint64_t StagingCache::free_bytes() const {
  std::lock_guard lock(mu_);
  purge_expired_locked();
  return free_locked();
}

CacheStats StagingCache::stats() const {
  std::lock_guard lock(mu_);
  purge_expired_locked();
  CacheStats s;
  s.capacity = capacity_;
  s.used_bytes = used_;
  for (const auto& [_, r] : reservations_) s.reserved_bytes += r.bytes;
  s.reserved_unfilled = unfilled_locked();
  s.entries = entries_.size();
  s.evictions = evictions_;
  return s;
}

std::vector<std::string> StagingCache::lru_order() const {
  std::lock_guard lock(mu_);
  return {lru_.begin(), lru_.end()};
}

}  // namespace gvf::srm
