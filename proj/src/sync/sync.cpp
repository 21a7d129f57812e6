#include "gvf/sync/sync.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "gvf/common/error.hpp"
#include "gvf/common/framing.hpp"

namespace gvf::sync {

namespace fs = std::filesystem;
using wire::Json;

namespace {

using u128 = unsigned __int128;

constexpr u128 kFnvOffset = (u128{0x6c62272e07bb0142ULL} << 64) | 0x62b821756295c58dULL;
constexpr u128 kFnvPrime = (u128{0x0000000001000000ULL} << 64) | 0x000000000000013BULL;

constexpr const char* kStateFile = "sync_state";
constexpr const char* kLeaseFile = "sync.lease";

std::set<std::string> current_surls(rls::RlsClient& rls, const rls::Guid& guid, const std::string& authority) {
  std::set<std::string> out;
  try {
    for (auto& s : rls.lookup_guid(guid)) {
      auto parsed = rls::Surl::parse(s);
      if (parsed.authority() == authority) out.insert(std::move(s));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::noent) throw;
  }
  return out;
}

std::set<std::string> desired_surls(const mcat::CatalogEntry& entry, const std::string& authority) {
  std::set<std::string> out;
  for (const auto& r : entry.replicas) {
    if (r.state == mcat::ReplicaState::online) out.insert(derive_surl(entry, r, authority).str());
  }
  return out;
}

bool pid_alive(pid_t pid) { return pid > 0 && (::kill(pid, 0) == 0 || errno == EPERM); }

}  // namespace

rls::Guid derive_guid(std::string_view dataname) {
  if (!mcat::DataName::is_valid(dataname)) fail(ErrorCode::badreq, "invalid dataname");
  u128 h = kFnvOffset;
  for (unsigned char c : dataname) {
    h ^= c;
    h *= kFnvPrime;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(32, '0');
  for (int i = 31; i >= 0; --i) {
    out[i] = kHex[static_cast<unsigned>(h & 0xf)];
    h >>= 4;
  }
  return rls::Guid::parse(out);
}

rls::Surl derive_surl(const mcat::CatalogEntry& entry, const mcat::Replica& replica, const std::string& authority) {
  return rls::Surl(authority, replica.site_id, entry.dataname);
}

Json to_json(const SyncState& s) {
  return Json{{"cursor", s.cursor},
              {"last_run", s.last_run},
              {"stats", {{"published", s.stats.published}, {"unpublished", s.stats.unpublished},
                         {"skipped", s.stats.skipped}}}};
}

SyncState sync_state_from_json(const Json& j) {
  SyncState s;
  s.cursor = j.at("cursor").get<std::uint64_t>();
  s.last_run = j.value("last_run", std::uint64_t{0});
  if (auto it = j.find("stats"); it != j.end()) {
    s.stats.published = it->value("published", std::uint64_t{0});
    s.stats.unpublished = it->value("unpublished", std::uint64_t{0});
    s.stats.skipped = it->value("skipped", std::uint64_t{0});
  }
  return s;
}

Json to_json(const RescanReport& r) {
  return Json{{"added", r.added}, {"removed", r.removed}, {"agreed", r.agreed}};
}

class Syncer::Lease {
 public:
  explicit Lease(Syncer& s) : lock_(s.inproc_lease_, std::try_to_lock) {
    if (!lock_.owns_lock()) fail(ErrorCode::badreq, "a sync run is already in progress");
    if (s.options_.state_dir.empty()) return;
    fs::create_directories(s.options_.state_dir);
    path_ = (fs::path(s.options_.state_dir) / kLeaseFile).string();
    for (int attempt = 0; attempt < 2; ++attempt) {
      int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
      if (fd >= 0) {
        std::string pid = std::to_string(::getpid()) + "\n";
        write_all(fd, pid.data(), pid.size());
        ::close(fd);
        return;
      }
      if (errno != EEXIST) fail(ErrorCode::unavail, "cannot create sync lease " + path_);
      pid_t holder = 0;
      std::ifstream(path_) >> holder;
      // Our own pid can only be a leftover: the in-process mutex is ours.
      if (holder != ::getpid() && pid_alive(holder)) {
        fail(ErrorCode::badreq, "sync lease held by pid " + std::to_string(holder));
      }
      fs::remove(path_);
    }
    fail(ErrorCode::badreq, "could not take the sync lease");
  }
  ~Lease() {
    if (!path_.empty()) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  Lease(const Lease&) = delete;
  Lease& operator=(const Lease&) = delete;

 private:
  std::unique_lock<std::mutex> lock_;
  std::string path_;
};

Syncer::Syncer(broker::CatalogAccess& mcat, rls::RlsClient& rls, SyncOptions options, const Clock* clock)
    : mcat_(mcat), rls_(rls), options_(std::move(options)), clock_(clock) {
  if (options_.page_size == 0) fail(ErrorCode::badreq, "sync page_size must be > 0");
  rls::Surl(options_.authority, "x", mcat::DataName::parse("/home/x/x"));
}

SyncState Syncer::load_state() const {
  if (options_.state_dir.empty()) return memory_state_;
  auto saved = read_frame_file((fs::path(options_.state_dir) / kStateFile).string());
  if (!saved) return SyncState{};
  return sync_state_from_json(Json::parse(*saved));
}

void Syncer::save_state(const SyncState& state) const {
  if (options_.state_dir.empty()) return;
  write_frame_file_atomic((fs::path(options_.state_dir) / kStateFile).string(), to_json(state).dump());
}

SyncState Syncer::sync_once() {
  Lease lease(*this);
  SyncState next = run(load_state());
  save_state(next);
  memory_state_ = next;
  return next;
}

SyncState Syncer::run(SyncState state) {
  std::vector<std::string> names;
  std::set<std::string> seen;
  std::uint64_t cursor = state.cursor;
  for (;;) {
    auto page = mcat_.changes_since(cursor, options_.page_size);
    for (const auto& ev : page.events) {
      if (seen.insert(ev.dataname).second) names.push_back(ev.dataname);
    }
    if (page.events.empty() || page.new_cursor == cursor) break;
    cursor = page.new_cursor;
  }

  SyncStats stats;
  for (const auto& n : names) {
    auto name = mcat::DataName::parse(n);
    auto guid = derive_guid(n);
    // Current catalog state rather than the event payload, so replaying an
    // old window converges on the same image.
    auto entry = mcat_.find(name);
    std::set<std::string> want = entry ? desired_surls(*entry, options_.authority) : std::set<std::string>{};
    std::set<std::string> have = current_surls(rls_, guid, options_.authority);
    bool changed = false;
    for (const auto& s : want) {
      if (have.contains(s)) continue;
      if (rls_.publish(guid, rls::Surl::parse(s))) ++stats.published;
      changed = true;
    }
    for (const auto& s : have) {
      if (want.contains(s)) continue;
      if (rls_.unpublish(guid, rls::Surl::parse(s))) ++stats.unpublished;
      changed = true;
    }
    if (!changed) ++stats.skipped;
  }

  state.cursor = cursor;
  state.stats = stats;
  state.last_run = clock_ ? clock_->now() : state.last_run + 1;
  return state;
}

RescanReport Syncer::full_rescan() {
  Lease lease(*this);
  std::map<std::string, std::set<std::string>> expected;
  for (const auto& e : mcat_.list("/")) {
    auto want = desired_surls(e, options_.authority);
    if (!want.empty()) expected[derive_guid(e.dataname.value()).value()] = std::move(want);
  }
  std::map<std::string, std::set<std::string>> actual;
  std::string cursor;
  do {
    auto page = rls_.list_all(cursor, options_.page_size);
    for (const auto& m : page.mappings) {
      for (const auto& s : m.surls) {
        if (rls::Surl::parse(s).authority() == options_.authority) actual[m.guid.value()].insert(s);
      }
    }
    cursor = page.next_cursor;
  } while (!cursor.empty());

  RescanReport report;
  for (const auto& [g, surls] : expected) {
    auto guid = rls::Guid::parse(g);
    const auto& have = actual[g];
    for (const auto& s : surls) {
      if (have.contains(s)) {
        ++report.agreed;
      } else if (rls_.publish(guid, rls::Surl::parse(s))) {
        ++report.added;
      }
    }
  }
  for (const auto& [g, surls] : actual) {
    auto it = expected.find(g);
    for (const auto& s : surls) {
      if (it != expected.end() && it->second.contains(s)) continue;
      if (rls_.unpublish(rls::Guid::parse(g), rls::Surl::parse(s))) ++report.removed;
    }
  }
  return report;
}

}  // namespace gvf::sync
