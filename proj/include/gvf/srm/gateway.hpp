#pragma once

#include <condition_variable>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gvf/common/clock.hpp"
#include "gvf/srm/cache.hpp"
#include "gvf/srm/driver.hpp"

namespace gvf::srm {

enum class RequestKind { get, put };
enum class RequestState { queued, staging, ready, active, done, failed };

std::string_view to_string(RequestKind k);
std::string_view to_string(RequestState s);
RequestState parse_request_state(std::string_view text);
// Edges of queued -> staging -> ready -> active -> done, plus any -> failed.
bool legal_transition(RequestState from, RequestState to);

struct TransferRequest {
  std::string request_id;
  RequestKind kind = RequestKind::get;
  std::string subject;
  std::string surl;
  std::vector<std::string> protocols;
  RequestState state = RequestState::queued;
  std::string turl;
  std::optional<ErrorCode> error;
  std::string message;
  std::string pin;
  std::string reservation;
  std::uint64_t size_hint = 0;
  std::uint64_t size = 0;
  std::uint64_t created = 0;
  std::uint64_t updated = 0;
  std::vector<RequestState> history;
};

wire::Json to_json(const TransferRequest& r);
TransferRequest transfer_request_from_json(const wire::Json& j);
wire::Json to_json(const PinToken& p);
wire::Json to_json(const Reservation& r);

struct GatewayMetrics {
  std::uint64_t staging_copies = 0;
  std::uint64_t bytes_copied = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t bytes_delivered = 0;
  std::map<std::string, std::uint64_t> requests_by_outcome;
  // Delivered get bytes by the site whose vault supplied them.
  std::map<std::string, std::uint64_t> site_bytes;
};

wire::Json to_json(const GatewayMetrics& m);
GatewayMetrics gateway_metrics_from_json(const wire::Json& j);

struct GatewayOptions {
  // host:port placed in cache:// TURLs (the cache-http listener).
  std::string turl_authority = "localhost:0";
  std::uint64_t turl_lifetime = 3600;
  // Seeds the opaque TURL tokens.
  std::string token_secret;
};

struct Staged {
  std::string key;
  std::uint64_t size = 0;
  std::string origin;
};

class Gateway {
 public:
  Gateway(GatewayOptions options, std::shared_ptr<DriverBoundary> driver, std::shared_ptr<StagingCache> cache,
          Clock& clock);

  // Request-level problems (bad SURL, empty or unknown protocol list) throw
  // E_BADREQ. Everything else ends in the returned record.
  TransferRequest srm_get(const std::string& subject, const std::string& surl, const std::vector<std::string>& protocols);
  TransferRequest srm_put(const std::string& subject, const std::string& surl, const std::vector<std::string>& protocols,
                          std::uint64_t size_hint, const std::string& reservation = "");
  PinToken srm_pin(const std::string& subject, const std::string& surl, std::uint64_t lifetime);
  void srm_unpin(const std::string& subject, const std::string& token);
  Reservation srm_reserve(const std::string& subject, std::uint64_t bytes, std::uint64_t lifetime);
  void srm_release(const std::string& subject, const std::string& token);
  TransferRequest srm_status(const std::string& request_id);
  std::vector<broker::ListedEntry> srm_ls(const std::string& subject, const std::string& prefix);

  // cache:// transfers. Unknown token: E_NOENT; expired: E_PERM.
  std::string fetch(const std::string& token);
  TransferRequest upload(const std::string& token, const std::string& bytes);
  // Completion report for a vault:// transfer the client made itself.
  TransferRequest finish_direct(const std::string& subject, const std::string& request_id);

  GatewayMetrics metrics() const;
  StagingCache& cache() { return *cache_; }
  DriverBoundary& driver() { return *driver_; }
  Clock& clock() { return clock_; }

 private:
  struct Turl {
    std::string request_id;
    std::uint64_t expires = 0;
  };
  struct Flight {
    std::shared_future<Staged> result;
  };

  TransferRequest& create_locked(RequestKind kind, const std::string& subject, const std::string& surl,
                                 const std::vector<std::string>& protocols);
  void transition_locked(TransferRequest& r, RequestState to);
  void fail_locked(TransferRequest& r, const Error& e);
  void finish_locked(TransferRequest& r, std::uint64_t bytes, const std::string& origin);
  std::string issue_token_locked(const std::string& request_id);
  void sweep_locked();
  // Ensures name's current content is cached and marked busy for the caller.
  Staged stage(const std::string& subject, const mcat::DataName& name);

  GatewayOptions options_;
  std::shared_ptr<DriverBoundary> driver_;
  std::shared_ptr<StagingCache> cache_;
  Clock& clock_;

  mutable std::mutex mu_;
  std::map<std::string, TransferRequest> requests_;
  std::map<std::string, Turl> turls_;
  // Cache key and origin site held by each transfer request.
  std::map<std::string, Staged> held_;
  GatewayMetrics metrics_;
  std::uint64_t next_request_ = 0;

  std::mutex flights_mu_;
  std::map<std::string, Flight> flights_;
};

}  // namespace gvf::srm
