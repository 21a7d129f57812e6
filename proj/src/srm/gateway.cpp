#include "gvf/srm/gateway.hpp"

#include <algorithm>

#include "gvf/common/digest.hpp"
#include "gvf/rls/types.hpp"

namespace gvf::srm {

using wire::Json;

namespace {

constexpr RequestState kStates[] = {RequestState::queued, RequestState::staging, RequestState::ready,
                                    RequestState::active, RequestState::done,    RequestState::failed};

void validate_protocols(const std::vector<std::string>& protocols) {
  if (protocols.empty()) fail(ErrorCode::badreq, "protocol list must not be empty");
  for (const auto& p : protocols) {
    if (p != kProtoCacheHttp && p != kProtoVaultStream) fail(ErrorCode::badreq, "unknown transfer protocol " + p);
  }
}

bool offers(const std::vector<std::string>& protocols, const char* p) {
  return std::find(protocols.begin(), protocols.end(), p) != protocols.end();
}

// Path part of an srm:// prefix, or the prefix itself when it is a plain
// dataname prefix.
std::string dataname_prefix(const std::string& prefix) {
  constexpr std::string_view scheme = "srm://";
  if (prefix.rfind(scheme, 0) != 0) return prefix.empty() ? "/" : prefix;
  auto rest = std::string_view(prefix).substr(scheme.size());
  auto slash = rest.find('/');
  if (slash == std::string_view::npos) return "/";
  auto site_end = rest.find('/', slash + 1);
  if (site_end == std::string_view::npos) return "/";
  return std::string(rest.substr(site_end));
}

}  // namespace

std::string_view to_string(RequestKind k) { return k == RequestKind::get ? "get" : "put"; }

std::string_view to_string(RequestState s) {
  switch (s) {
    case RequestState::queued: return "queued";
    case RequestState::staging: return "staging";
    case RequestState::ready: return "ready";
    case RequestState::active: return "active";
    case RequestState::done: return "done";
    case RequestState::failed: return "failed";
  }
  return "failed";
}

RequestState parse_request_state(std::string_view text) {
  for (auto s : kStates) {
    if (to_string(s) == text) return s;
  }
  fail(ErrorCode::badreq, "unknown request state " + std::string(text));
}

bool legal_transition(RequestState from, RequestState to) {
  if (from == RequestState::done || from == RequestState::failed) return false;
  if (to == RequestState::failed) return true;
  return static_cast<int>(to) == static_cast<int>(from) + 1;
}

Json to_json(const TransferRequest& r) {
  Json history = Json::array();
  for (auto s : r.history) history.push_back(std::string(to_string(s)));
  return Json{{"request_id", r.request_id},
              {"kind", std::string(to_string(r.kind))},
              {"subject", r.subject},
              {"surl", r.surl},
              {"protocols", r.protocols},
              {"state", std::string(to_string(r.state))},
              {"turl", r.turl},
              {"error", r.error ? Json(std::string(to_string(*r.error))) : Json(nullptr)},
              {"message", r.message},
              {"pin", r.pin},
              {"reservation", r.reservation},
              {"size_hint", r.size_hint},
              {"size", r.size},
              {"created", r.created},
              {"updated", r.updated},
              {"history", history}};
}

TransferRequest transfer_request_from_json(const Json& j) {
  TransferRequest r;
  r.request_id = j.at("request_id").get<std::string>();
  r.kind = j.at("kind").get<std::string>() == "get" ? RequestKind::get : RequestKind::put;
  r.subject = j.value("subject", "");
  r.surl = j.value("surl", "");
  r.protocols = j.value("protocols", std::vector<std::string>{});
  r.state = parse_request_state(j.at("state").get<std::string>());
  r.turl = j.value("turl", "");
  if (j.contains("error") && !j.at("error").is_null()) r.error = parse_error_code(j.at("error").get<std::string>());
  r.message = j.value("message", "");
  r.pin = j.value("pin", "");
  r.reservation = j.value("reservation", "");
  r.size_hint = j.value("size_hint", std::uint64_t{0});
  r.size = j.value("size", std::uint64_t{0});
  r.created = j.value("created", std::uint64_t{0});
  r.updated = j.value("updated", std::uint64_t{0});
  for (const auto& s : j.value("history", Json::array())) r.history.push_back(parse_request_state(s.get<std::string>()));
  return r;
}

Json to_json(const PinToken& p) {
  return Json{{"token", p.token}, {"cache_entry", p.key}, {"subject", p.subject}, {"expires", p.expires}};
}

Json to_json(const Reservation& r) {
  return Json{{"token", r.token}, {"subject", r.subject}, {"bytes", r.bytes}, {"used_bytes", r.used_bytes},
              {"expires", r.expires}};
}

Json to_json(const GatewayMetrics& m) {
  return Json{{"staging_copies", m.staging_copies},
              {"bytes_copied", m.bytes_copied},
              {"cache_hits", m.cache_hits},
              {"cache_misses", m.cache_misses},
              {"evictions", m.evictions},
              {"bytes_delivered", m.bytes_delivered},
              {"requests_by_outcome", m.requests_by_outcome},
              {"site_bytes", m.site_bytes}};
}

GatewayMetrics gateway_metrics_from_json(const Json& j) {
  GatewayMetrics m;
  m.staging_copies = j.at("staging_copies").get<std::uint64_t>();
  m.bytes_copied = j.at("bytes_copied").get<std::uint64_t>();
  m.cache_hits = j.at("cache_hits").get<std::uint64_t>();
  m.cache_misses = j.at("cache_misses").get<std::uint64_t>();
  m.evictions = j.at("evictions").get<std::uint64_t>();
  m.bytes_delivered = j.at("bytes_delivered").get<std::uint64_t>();
  m.requests_by_outcome = j.at("requests_by_outcome").get<std::map<std::string, std::uint64_t>>();
  m.site_bytes = j.at("site_bytes").get<std::map<std::string, std::uint64_t>>();
  return m;
}

Gateway::Gateway(GatewayOptions options, std::shared_ptr<DriverBoundary> driver, std::shared_ptr<StagingCache> cache,
                 Clock& clock)
    : options_(std::move(options)), driver_(std::move(driver)), cache_(std::move(cache)), clock_(clock) {}

TransferRequest& Gateway::create_locked(RequestKind kind, const std::string& subject, const std::string& surl,
                                        const std::vector<std::string>& protocols) {
  TransferRequest r;
  r.request_id = "req-" + std::to_string(++next_request_);
  r.kind = kind;
  r.subject = subject;
  r.surl = surl;
  r.protocols = protocols;
  r.created = r.updated = clock_.now();
  r.history.push_back(RequestState::queued);
  return requests_.emplace(r.request_id, std::move(r)).first->second;
}

void Gateway::transition_locked(TransferRequest& r, RequestState to) {
  if (!legal_transition(r.state, to)) {
    fail(ErrorCode::badreq, "request " + r.request_id + " cannot go from " + std::string(to_string(r.state)) + " to " +
                                std::string(to_string(to)));
  }
  r.state = to;
  r.updated = clock_.now();
  r.history.push_back(to);
}

void Gateway::fail_locked(TransferRequest& r, const Error& e) {
  r.error = e.code();
  r.message = e.what();
  r.turl.clear();
  transition_locked(r, RequestState::failed);
  ++metrics_.requests_by_outcome[std::string(to_string(e.code()))];
  if (auto it = held_.find(r.request_id); it != held_.end()) {
    if (!it->second.key.empty()) cache_->release_busy(it->second.key);
    held_.erase(it);
  }
}

void Gateway::finish_locked(TransferRequest& r, std::uint64_t bytes, const std::string& origin) {
  if (r.state == RequestState::ready) transition_locked(r, RequestState::active);
  transition_locked(r, RequestState::done);
  ++metrics_.requests_by_outcome["done"];
  if (r.kind == RequestKind::get) {
    metrics_.bytes_delivered += bytes;
    metrics_.site_bytes[origin] += bytes;
  }
  if (auto it = held_.find(r.request_id); it != held_.end()) {
    if (!it->second.key.empty()) cache_->release_busy(it->second.key);
    held_.erase(it);
  }
}

std::string Gateway::issue_token_locked(const std::string& request_id) {
  std::string token = sha256_hex(options_.token_secret + "/turl/" + request_id).substr(0, 32);
  turls_[token] = Turl{request_id, clock_.now() + options_.turl_lifetime};
  return token;
}

void Gateway::sweep_locked() {
  const auto now = clock_.now();
  for (const auto& [_, t] : turls_) {
    if (t.expires > now) continue;
    auto h = held_.find(t.request_id);
    if (h == held_.end()) continue;
    auto& r = requests_.at(t.request_id);
    // Only an unclaimed ready transfer lets go of its cache entry; an active
    // one finishes on its own.
    if (r.state != RequestState::ready) continue;
    if (!h->second.key.empty()) cache_->release_busy(h->second.key);
    held_.erase(h);
  }
}

Staged Gateway::stage(const std::string& subject, const mcat::DataName& name) {
  auto entry = driver_->stat(subject, name);
  const std::string key = name.value() + "@" + entry.digest;
  for (int attempt = 0; attempt < 4; ++attempt) {
    if (cache_->checkout(key)) {
      std::lock_guard lock(mu_);
      ++metrics_.cache_hits;
      return Staged{key, entry.size, cache_->origin(key)};
    }
    std::shared_future<Staged> pending;
    std::optional<std::promise<Staged>> mine;
    {
      std::lock_guard lock(flights_mu_);
      if (auto it = flights_.find(key); it != flights_.end()) {
        pending = it->second.result;
      } else {
        mine.emplace();
        pending = mine->get_future().share();
        flights_[key] = Flight{pending};
      }
    }
    if (!mine) {
      // Another request is already copying this content in.
      Staged s = pending.get();
      if (cache_->checkout(s.key)) {
        std::lock_guard lock(mu_);
        ++metrics_.cache_hits;
        return s;
      }
      continue;
    }
    try {
      Fetched f = driver_->fetch_to_cache(subject, name);
      Staged s{name.value() + "@" + f.digest, f.bytes.size(), f.site_id};
      cache_->insert(s.key, f.bytes, f.site_id, true);
      {
        std::lock_guard lock(mu_);
        ++metrics_.staging_copies;
        ++metrics_.cache_misses;
        metrics_.bytes_copied += s.size;
      }
      mine->set_value(s);
      std::lock_guard lock(flights_mu_);
      flights_.erase(key);
      return s;
    } catch (...) {
      mine->set_exception(std::current_exception());
      std::lock_guard lock(flights_mu_);
      flights_.erase(key);
      throw;
    }
  }
  fail(ErrorCode::nospace, "staged copy of " + name.value() + " was evicted before use");
}

TransferRequest Gateway::srm_get(const std::string& subject, const std::string& surl_text,
                                 const std::vector<std::string>& protocols) {
  auto surl = rls::Surl::parse(surl_text);
  validate_protocols(protocols);
  std::string id;
  {
    std::lock_guard lock(mu_);
    sweep_locked();
    auto& r = create_locked(RequestKind::get, subject, surl_text, protocols);
    transition_locked(r, RequestState::staging);
    id = r.request_id;
  }
  const auto& name = surl.dataname();
  try {
    if (!driver_->check(subject, name, mcat::Perm::read)) {
      fail(ErrorCode::perm, subject + " may not read " + name.value());
    }
    if (driver_->serves_direct(protocols)) {
      auto loc = driver_->fetch_direct(subject, name);
      std::lock_guard lock(mu_);
      auto& r = requests_.at(id);
      r.size = loc.size;
      r.turl = "vault://" + loc.vault_addr + "/" + loc.blob_id;
      held_[id] = Staged{"", loc.size, loc.site_id};
      transition_locked(r, RequestState::ready);
      return r;
    }
    Staged s = stage(subject, name);
    std::lock_guard lock(mu_);
    auto& r = requests_.at(id);
    r.size = s.size;
    held_[id] = s;
    r.turl = "cache://" + options_.turl_authority + "/" + issue_token_locked(id);
    transition_locked(r, RequestState::ready);
    return r;
  } catch (const Error& e) {
    std::lock_guard lock(mu_);
    auto& r = requests_.at(id);
    fail_locked(r, e);
    return r;
  }
}

TransferRequest Gateway::srm_put(const std::string& subject, const std::string& surl_text,
                                 const std::vector<std::string>& protocols, std::uint64_t size_hint,
                                 const std::string& reservation) {
  rls::Surl::parse(surl_text);
  validate_protocols(protocols);
  if (!offers(protocols, kProtoCacheHttp)) fail(ErrorCode::badreq, "uploads go through the cache; offer cache-http");
  std::string id;
  {
    std::lock_guard lock(mu_);
    sweep_locked();
    auto& r = create_locked(RequestKind::put, subject, surl_text, protocols);
    r.size_hint = size_hint;
    r.reservation = reservation;
    transition_locked(r, RequestState::staging);
    id = r.request_id;
  }
  try {
    if (!reservation.empty()) {
      auto res = cache_->reservation(reservation);
      if (!res) fail(ErrorCode::noent, "no active reservation " + reservation);
      if (res->subject != subject) fail(ErrorCode::perm, "reservation " + reservation + " belongs to another subject");
      if (res->bytes - res->used_bytes < size_hint) fail(ErrorCode::nospace, "reservation " + reservation + " too small");
    } else {
      cache_->make_room(size_hint);
    }
    std::lock_guard lock(mu_);
    auto& r = requests_.at(id);
    r.turl = "cache://" + options_.turl_authority + "/" + issue_token_locked(id);
    transition_locked(r, RequestState::ready);
    return r;
  } catch (const Error& e) {
    std::lock_guard lock(mu_);
    auto& r = requests_.at(id);
    fail_locked(r, e);
    return r;
  }
}

PinToken Gateway::srm_pin(const std::string& subject, const std::string& surl_text, std::uint64_t lifetime) {
  auto surl = rls::Surl::parse(surl_text);
  {
    std::lock_guard lock(mu_);
    sweep_locked();
  }
  if (!driver_->check(subject, surl.dataname(), mcat::Perm::read)) {
    fail(ErrorCode::perm, subject + " may not read " + surl.dataname().value());
  }
  Staged s = stage(subject, surl.dataname());
  try {
    auto p = cache_->pin(s.key, subject, lifetime);
    cache_->release_busy(s.key);
    return p;
  } catch (...) {
    cache_->release_busy(s.key);
    throw;
  }
}

void Gateway::srm_unpin(const std::string& subject, const std::string& token) { cache_->unpin(subject, token); }

Reservation Gateway::srm_reserve(const std::string& subject, std::uint64_t bytes, std::uint64_t lifetime) {
  {
    std::lock_guard lock(mu_);
    sweep_locked();
  }
  return cache_->reserve(subject, bytes, lifetime);
}

void Gateway::srm_release(const std::string& subject, const std::string& token) { cache_->release(subject, token); }

TransferRequest Gateway::srm_status(const std::string& request_id) {
  std::lock_guard lock(mu_);
  auto it = requests_.find(request_id);
  if (it == requests_.end()) fail(ErrorCode::noent, "no request " + request_id);
  return it->second;
}

std::vector<broker::ListedEntry> Gateway::srm_ls(const std::string& subject, const std::string& prefix) {
  return driver_->list(subject, dataname_prefix(prefix));
}

std::string Gateway::fetch(const std::string& token) {
  std::string id;
  std::string key;
  {
    std::lock_guard lock(mu_);
    auto t = turls_.find(token);
    if (t == turls_.end()) fail(ErrorCode::noent, "unknown transfer token");
    if (t->second.expires <= clock_.now()) fail(ErrorCode::perm, "transfer token expired");
    auto& r = requests_.at(t->second.request_id);
    if (r.kind != RequestKind::get || r.state != RequestState::ready) {
      fail(ErrorCode::badreq, "request " + r.request_id + " is not ready for download");
    }
    auto h = held_.find(r.request_id);
    if (h == held_.end()) fail(ErrorCode::perm, "transfer token expired");
    transition_locked(r, RequestState::active);
    id = r.request_id;
    key = h->second.key;
  }
  try {
    std::string bytes = cache_->read(key);
    std::lock_guard lock(mu_);
    auto& r = requests_.at(id);
    finish_locked(r, bytes.size(), held_.at(id).origin);
    return bytes;
  } catch (const Error& e) {
    std::lock_guard lock(mu_);
    fail_locked(requests_.at(id), e);
    throw;
  }
}

TransferRequest Gateway::upload(const std::string& token, const std::string& bytes) {
  std::string id;
  std::string subject;
  std::string reservation;
  std::string surl_text;
  {
    std::lock_guard lock(mu_);
    auto t = turls_.find(token);
    if (t == turls_.end()) fail(ErrorCode::noent, "unknown transfer token");
    if (t->second.expires <= clock_.now()) fail(ErrorCode::perm, "transfer token expired");
    auto& r = requests_.at(t->second.request_id);
    if (r.kind != RequestKind::put || r.state != RequestState::ready) {
      fail(ErrorCode::badreq, "request " + r.request_id + " is not ready for upload");
    }
    transition_locked(r, RequestState::active);
    id = r.request_id;
    subject = r.subject;
    reservation = r.reservation;
    surl_text = r.surl;
  }
  const std::string slot = "upload:" + id;
  try {
    if (!reservation.empty()) cache_->draw(subject, reservation, bytes.size());
    cache_->insert(slot, bytes, "", true);
    try {
      driver_->store_from_cache(subject, rls::Surl::parse(surl_text).dataname(), bytes);
    } catch (...) {
      cache_->erase(slot);
      throw;
    }
    cache_->erase(slot);
    std::lock_guard lock(mu_);
    auto& r = requests_.at(id);
    r.size = bytes.size();
    finish_locked(r, bytes.size(), "");
    return r;
  } catch (const Error& e) {
    std::lock_guard lock(mu_);
    auto& r = requests_.at(id);
    fail_locked(r, e);
    return r;
  }
}

TransferRequest Gateway::finish_direct(const std::string& subject, const std::string& request_id) {
  std::lock_guard lock(mu_);
  auto it = requests_.find(request_id);
  if (it == requests_.end()) fail(ErrorCode::noent, "no request " + request_id);
  auto& r = it->second;
  if (r.subject != subject) fail(ErrorCode::perm, "request " + request_id + " belongs to another subject");
  if (r.kind != RequestKind::get || r.state != RequestState::ready || r.turl.rfind("vault://", 0) != 0) {
    fail(ErrorCode::badreq, "request " + request_id + " is not a ready vault transfer");
  }
  finish_locked(r, r.size, held_.at(request_id).origin);
  return r;
}

GatewayMetrics Gateway::metrics() const {
  std::lock_guard lock(mu_);
  GatewayMetrics m = metrics_;
  m.evictions = cache_->stats().evictions;
  return m;
}

}  // namespace gvf::srm
