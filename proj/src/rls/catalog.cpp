#include "gvf/rls/catalog.hpp"

#include <filesystem>
#include <mutex>

#include <nlohmann/json.hpp>

#include "gvf/common/error.hpp"

namespace gvf::rls {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

constexpr const char* kJournalFile = "rls.journal";
constexpr const char* kSnapshotFile = "rls.snapshot";

}  // namespace

RlsCatalog::RlsCatalog(RlsOptions options) : options_(std::move(options)) {
  if (!options_.dir.empty()) {
    fs::create_directories(options_.dir);
    recover();
    journal_.emplace((fs::path(options_.dir) / kJournalFile).string(), options_.fsync);
  }
}

void RlsCatalog::recover() {
  if (auto snap = read_frame_file((fs::path(options_.dir) / kSnapshotFile).string())) {
    auto j = Json::parse(*snap);
    seq_ = j.at("seq").get<std::uint64_t>();
    for (const auto& m : j.at("mappings")) {
      for (const auto& s : m.at("surls")) apply(true, m.at("guid").get<std::string>(), s.get<std::string>());
    }
  }
  for (const auto& rec : FrameLog::read_all((fs::path(options_.dir) / kJournalFile).string())) {
    auto j = Json::parse(rec);
    auto seq = j.at("seq").get<std::uint64_t>();
    if (seq <= seq_) continue;
    apply(j.at("op").get<std::string>() == "publish", j.at("guid").get<std::string>(), j.at("surl").get<std::string>());
    seq_ = seq;
    ++records_since_snapshot_;
  }
}

void RlsCatalog::apply(bool publish, const std::string& guid, const std::string& surl) {
  if (publish) {
    by_guid_[guid].insert(surl);
    by_surl_[surl] = guid;
    return;
  }
  by_surl_.erase(surl);
  auto it = by_guid_.find(guid);
  if (it == by_guid_.end()) return;
  it->second.erase(surl);
  if (it->second.empty()) by_guid_.erase(it);
}

void RlsCatalog::commit(bool publish, const std::string& guid, const std::string& surl) {
  std::uint64_t seq = seq_ + 1;
  if (journal_) {
    Json rec{{"seq", seq}, {"op", publish ? "publish" : "unpublish"}, {"guid", guid}, {"surl", surl}};
    journal_->append(rec.dump());
    ++records_since_snapshot_;
  }
  apply(publish, guid, surl);
  seq_ = seq;
  ++mutations_;
  if (journal_ && records_since_snapshot_ >= options_.snapshot_every) write_snapshot();
}

void RlsCatalog::write_snapshot() {
  Json snap{{"seq", seq_}, {"mappings", Json::array()}};
  for (const auto& [g, s] : by_guid_) snap["mappings"].push_back({{"guid", g}, {"surls", s}});
  write_frame_file_atomic((fs::path(options_.dir) / kSnapshotFile).string(), snap.dump());
  journal_->truncate();
  records_since_snapshot_ = 0;
}

bool RlsCatalog::publish(const Guid& guid, const Surl& surl) {
  const std::string s = surl.str();
  std::unique_lock lock(mu_);
  if (auto it = by_surl_.find(s); it != by_surl_.end()) {
    if (it->second == guid.value()) return false;
    fail(ErrorCode::exists, s + " is already mapped to " + it->second);
  }
  commit(true, guid.value(), s);
  return true;
}

bool RlsCatalog::unpublish(const Guid& guid, const Surl& surl) {
  const std::string s = surl.str();
  std::unique_lock lock(mu_);
  auto it = by_surl_.find(s);
  if (it == by_surl_.end() || it->second != guid.value()) return false;
  commit(false, guid.value(), s);
  return true;
}

std::set<std::string> RlsCatalog::lookup_guid(const Guid& guid) const {
  std::shared_lock lock(mu_);
  auto it = by_guid_.find(guid.value());
  if (it == by_guid_.end()) fail(ErrorCode::noent, "guid " + guid.value());
  return it->second;
}

Guid RlsCatalog::lookup_surl(const Surl& surl) const {
  std::shared_lock lock(mu_);
  auto it = by_surl_.find(surl.str());
  if (it == by_surl_.end()) fail(ErrorCode::noent, "surl " + surl.str());
  return Guid::parse(it->second);
}

MappingPage RlsCatalog::list_all(const std::string& cursor, std::size_t page_size) const {
  if (page_size == 0) fail(ErrorCode::badreq, "page_size must be > 0");
  std::shared_lock lock(mu_);
  MappingPage page;
  auto it = cursor.empty() ? by_guid_.begin() : by_guid_.upper_bound(cursor);
  for (; it != by_guid_.end() && page.mappings.size() < page_size; ++it) {
    page.mappings.push_back(Mapping{Guid::parse(it->first), it->second});
  }
  if (it != by_guid_.end()) page.next_cursor = page.mappings.back().guid.value();
  return page;
}

std::size_t RlsCatalog::guid_count() const {
  std::shared_lock lock(mu_);
  return by_guid_.size();
}

std::uint64_t RlsCatalog::mutations() const {
  std::shared_lock lock(mu_);
  return mutations_;
}

}  // namespace gvf::rls
