#include "gvf/harness/runner.hpp"

#include <chrono>
#include <ctime>
#include <mutex>
#include <random>
#include <thread>

#include "gvf/common/digest.hpp"
#include "gvf/sync/sync.hpp"

namespace gvf::harness {

using wire::Json;

namespace {

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json expect_to_json(const Expect& e) {
  Json j{{"status", e.status}};
  if (e.error) j["error"] = *e.error;
  if (!e.result.is_null()) j["result"] = e.result;
  return j;
}

std::string token_of(const std::string& turl) { return turl.substr(turl.rfind('/') + 1); }

struct Outcome {
  std::string status = "ok";
  std::optional<std::string> error;
  Json result = Json::object();
  std::string detail;
};

class ScenarioRun {
 public:
  ScenarioRun(const Scenario& sc, const RunOptions& opt) : sc_(sc), opt_(opt) {
    seed_ = opt.seed.value_or(sc.seed);
    FederationConfig cfg = sc.federation;
    // Expiry tests need a clock that only moves when told to.
    cfg.clock = "logical";
    if (cfg.gateway) {
      if (opt.driver) cfg.gateway->driver = *opt.driver;
      if (opt.driver_remote) cfg.gateway->driver_remote = *opt.driver_remote;
    }
    fed_ = std::make_unique<Federation>(cfg, opt.mode, opt.work_dir, opt.gvf_binary);
  }

  RunReport run() {
    RunReport rep;
    rep.scenario = sc_.name;
    rep.mode = std::string(to_string(opt_.mode));
    const auto& cfg = fed_->config();
    rep.driver = cfg.gateway ? std::string(to_string(cfg.gateway->driver)) : "";
    rep.driver_remote = cfg.gateway && cfg.gateway->driver_remote;
    rep.seed = seed_;
    rep.master_site = cfg.master().site_id;
    rep.started_at = utc_now();
    fed_->start();
    mcat_ = std::make_unique<broker::RemoteCatalogAccess>(fed_->channel(cfg.master().listen), fed_->service());
    if (!cfg.rls.listen.empty()) {
      rls_ = std::make_unique<rls::RlsClient>(fed_->channel(cfg.rls.listen), fed_->service());
      syncer_ = std::make_unique<sync::Syncer>(
          *mcat_, *rls_, sync::SyncOptions{cfg.surl_authority(), cfg.sync.state_dir, cfg.sync.page_size});
    }

    const auto& w = sc_.workload;
    rep.steps.resize(w.size());
    std::size_t i = 0;
    while (i < w.size()) {
      apply_faults(i, rep);
      std::size_t end = i + 1;
      if (!w[i].parallel_group.empty()) {
        while (end < w.size() && w[end].parallel_group == w[i].parallel_group) ++end;
      }
      if (end - i == 1) {
        rep.steps[i] = execute(i);
      } else {
        std::vector<std::thread> threads;
        for (std::size_t k = i; k < end; ++k) threads.emplace_back([&, k] { rep.steps[k] = execute(k); });
        for (auto& t : threads) t.join();
      }
      i = end;
    }
    apply_faults(w.size(), rep);

    absorb_gateway_metrics();
    rep.metrics = metrics_;
    std::uint64_t total = 0;
    for (const auto& [_, b] : rep.metrics.site_bytes) total += b;
    auto m = rep.metrics.site_bytes.find(rep.master_site);
    rep.centralization_ratio =
        total == 0 || m == rep.metrics.site_bytes.end() ? 0.0 : static_cast<double>(m->second) / static_cast<double>(total);
    for (const auto& s : rep.steps) rep.ok = rep.ok && s.met;
    fed_->stop();
    rep.finished_at = utc_now();
    return rep;
  }

 private:
  void apply_faults(std::size_t at, RunReport& rep) {
    for (const auto& f : sc_.faults) {
      if (f.at_step != at) continue;
      if (f.action == "kill") {
        if (f.target == "gateway") absorb_gateway_metrics();
        fed_->kill(f.target);
      } else {
        fed_->restart(f.target);
      }
      rep.faults_applied.push_back(f);
    }
  }

  // Metrics die with a gateway process, so they are collected before a kill.
  void absorb_gateway_metrics() {
    if (!fed_->config().gateway || !fed_->is_up("gateway")) return;
    try {
      auto r = wire::call(*gateway(), "srm.metrics", Json::object(), std::nullopt).result;
      metrics_ = merge_metrics(metrics_, srm::gateway_metrics_from_json(r));
    } catch (const Error&) {
    }
  }

  std::shared_ptr<wire::Channel> gateway() const { return fed_->channel(fed_->config().gateway.value().listen); }

  std::string subject_of(const std::string& actor) const {
    if (actor == "service") return fed_->config().service_subject;
    if (actor == "anonymous") return "";
    return sc_.subjects.at(actor).subject;
  }

  std::optional<wire::Auth> auth_of(const std::string& actor) const {
    if (actor == "anonymous") return std::nullopt;
    return fed_->auth(subject_of(actor));
  }

  std::string broker_of(const Step& st) const {
    std::string site = st.args.value("site", "");
    if (site.empty() && sc_.subjects.contains(st.actor)) site = sc_.subjects.at(st.actor).site;
    if (site.empty()) site = fed_->config().master().site_id;
    return fed_->config().site(site).listen;
  }

  std::string resolve_subject(const std::string& who) const {
    if (sc_.subjects.contains(who)) return sc_.subjects.at(who).subject;
    return who;
  }

  std::string content_for(std::size_t index, const Json& args) const {
    if (args.contains("text")) return args.at("text").get<std::string>();
    std::uint64_t size = args.value("size", std::uint64_t{1024});
    std::mt19937_64 rng(seed_ * 1000003ULL + index);
    std::string out(size, '\0');
    for (auto& c : out) c = static_cast<char>(rng() & 0xff);
    return out;
  }

  std::string surl_for(const Step& st) {
    const auto& cfg = fed_->config();
    auto name = st.args.at("dataname").get<std::string>();
    if (st.args.value("from_rls", false)) {
      auto surls = rls_->lookup_guid(sync::derive_guid(name));
      return *surls.begin();
    }
    std::string site = st.args.value("surl_site", cfg.gateway->site_id);
    return rls::Surl(cfg.surl_authority(), site, mcat::DataName::parse(name)).str();
  }

  std::string label_value(const Json& args, const char* label_key, const char* token_key) {
    if (args.contains(token_key)) return args.at(token_key).get<std::string>();
    std::lock_guard lock(mu_);
    auto it = labels_.find(args.at(label_key).get<std::string>());
    if (it == labels_.end()) fail(ErrorCode::badreq, "unknown label " + args.at(label_key).get<std::string>());
    return it->second;
  }

  void set_label(const Json& args, const std::string& value) {
    if (!args.contains("label")) return;
    std::lock_guard lock(mu_);
    labels_[args.at("label").get<std::string>()] = value;
  }

  void check_content(const std::string& name, const std::string& bytes, Outcome& out) {
    std::lock_guard lock(mu_);
    auto it = expected_.find(name);
    if (it != expected_.end() && it->second != bytes) {
      out.status = "mismatch";
      out.detail = "delivered bytes differ from what was stored";
    }
  }

  bool use_http() const {
    const auto& g = fed_->config().gateway;
    return fed_->mode() == Mode::subprocess && g && !g->http_listen.empty();
  }

  srm::TransferRequest complete_get(const Step& st, srm::TransferRequest req, Outcome& out) {
    const auto name = rls::Surl::parse(req.surl).dataname().value();
    std::string bytes;
    if (req.turl.rfind("cache://", 0) == 0) {
      if (use_http()) {
        bytes = srm::http_get_turl(req.turl);
      } else {
        bytes = wire::call(*gateway(), "srm.fetch", {{"token", token_of(req.turl)}}, std::nullopt).body.value_or("");
      }
    } else {
      auto rest = req.turl.substr(std::string("vault://").size());
      auto slash = rest.find('/');
      auto reply = wire::call(*fed_->channel(rest.substr(0, slash)), "blob.read", {{"blob_id", rest.substr(slash + 1)}},
                              auth_of(st.actor));
      bytes = reply.body.value_or("");
      wire::call(*gateway(), "srm.done", {{"request_id", req.request_id}}, auth_of(st.actor));
    }
    check_content(name, bytes, out);
    out.result["bytes"] = bytes.size();
    out.result["sha256"] = sha256_hex(bytes);
    return srm::transfer_request_from_json(
        wire::call(*gateway(), "srm.status", {{"request_id", req.request_id}}, auth_of(st.actor)).result.at("request"));
  }

  void record_request(const srm::TransferRequest& req, Outcome& out) {
    if (out.status == "ok") out.status = std::string(srm::to_string(req.state));
    if (req.error) out.error = std::string(to_string(*req.error));
    out.result["state"] = std::string(srm::to_string(req.state));
    out.result["turl_scheme"] = req.turl.substr(0, req.turl.find(':'));
    out.result["size"] = req.size;
    if (!req.message.empty()) out.detail = req.message;
  }

  Outcome dispatch(std::size_t index) {
    const Step& st = sc_.workload[index];
    const Json& a = st.args;
    Outcome out;
    auto auth = auth_of(st.actor);
    auto name = [&] { return a.at("dataname").get<std::string>(); };

    if (st.op == "put") {
      std::string bytes = content_for(index, a);
      auto r = wire::call(*fed_->channel(broker_of(st)), "srb.put", {{"dataname", name()}}, auth, bytes);
      {
        std::lock_guard lock(mu_);
        expected_[name()] = bytes;
      }
      out.result = {{"size", bytes.size()}, {"digest", r.result.at("entry").at("digest")}};
    } else if (st.op == "get") {
      auto r = wire::call(*fed_->channel(broker_of(st)), "srb.get", {{"dataname", name()}}, auth);
      check_content(name(), r.body.value_or(""), out);
      out.result = {{"size", r.body.value_or("").size()}, {"site_id", r.result.at("site_id")}};
    } else if (st.op == "rm") {
      wire::call(*fed_->channel(broker_of(st)), "srb.rm", {{"dataname", name()}}, auth);
      std::lock_guard lock(mu_);
      expected_.erase(name());
    } else if (st.op == "replicate") {
      auto r = wire::call(*fed_->channel(broker_of(st)), "srb.replicate",
                          {{"dataname", name()}, {"target_vault", a.at("vault")}}, auth);
      out.result = {{"replicas", r.result.at("entry").at("replicas").size()}};
    } else if (st.op == "ls" || st.op == "srm_ls") {
      auto prefix = a.value("prefix", "/");
      auto r = st.op == "ls" ? wire::call(*fed_->channel(broker_of(st)), "srb.ls", {{"prefix", prefix}}, auth)
                             : wire::call(*gateway(), "srm.ls", {{"prefix", prefix}}, auth);
      Json entries = Json::array();
      for (const auto& e : r.result.at("entries")) {
        entries.push_back({{"dataname", e.at("entry").at("dataname")}, {"readable", e.at("readable")}});
      }
      out.result = {{"count", entries.size()}, {"entries", entries}};
    } else if (st.op == "grant") {
      Json grants = Json::object();
      const Json requested = a.value("grants", Json::object());
      for (const auto& [who, perms] : requested.items()) grants[resolve_subject(who)] = perms;
      wire::call(*fed_->channel(broker_of(st)), "srb.set_acl", {{"dataname", name()}, {"grants", grants}}, auth);
    } else if (st.op == "mkuser") {
      for (const auto& site : fed_->config().sites) {
        if (a.contains("site") && a.at("site") != site.site_id) continue;
        wire::call(*fed_->channel(site.listen), "admin.mkuser",
                   {{"subject", resolve_subject(a.at("subject").get<std::string>())}, {"local_user", a.at("local_user")}},
                   auth);
      }
    } else if (st.op == "sync") {
      if (!syncer_) fail(ErrorCode::badreq, "federation has no rls");
      out.result = sync::to_json(syncer_->sync_once());
    } else if (st.op == "rescan") {
      if (!syncer_) fail(ErrorCode::badreq, "federation has no rls");
      out.result = sync::to_json(syncer_->full_rescan());
    } else if (st.op == "rls_lookup") {
      if (!rls_) fail(ErrorCode::badreq, "federation has no rls");
      auto guid = sync::derive_guid(name());
      rls::RlsClient anonymous(fed_->channel(fed_->config().rls.listen), std::nullopt);
      auto surls = anonymous.lookup_guid(guid);
      out.result = {{"guid", guid.value()}, {"surls", surls}};
    } else if (st.op == "srm_get") {
      auto protocols = a.value("protocols", std::vector<std::string>{srm::kProtoCacheHttp});
      auto r = wire::call(*gateway(), "srm.get", {{"surl", surl_for(st)}, {"protocols", protocols}}, auth);
      auto req = srm::transfer_request_from_json(r.result.at("request"));
      if (req.state == srm::RequestState::ready && a.value("transfer", true)) req = complete_get(st, req, out);
      record_request(req, out);
    } else if (st.op == "srm_put") {
      std::string bytes = content_for(index, a);
      Json args{{"surl", surl_for(st)},
                {"protocols", a.value("protocols", std::vector<std::string>{srm::kProtoCacheHttp})},
                {"size_hint", a.value("size_hint", static_cast<std::uint64_t>(bytes.size()))}};
      if (a.contains("reservation") || a.contains("reservation_token")) {
        args["reservation"] = label_value(a, "reservation", "reservation_token");
      }
      auto r = wire::call(*gateway(), "srm.put", args, auth);
      auto req = srm::transfer_request_from_json(r.result.at("request"));
      if (req.state == srm::RequestState::ready) {
        Json up = use_http() ? srm::http_put_turl(req.turl, bytes)
                             : wire::call(*gateway(), "srm.upload", {{"token", token_of(req.turl)}}, std::nullopt, bytes)
                                   .result.at("request");
        req = srm::transfer_request_from_json(up);
      }
      if (req.state == srm::RequestState::done) {
        std::lock_guard lock(mu_);
        expected_[name()] = bytes;
      }
      record_request(req, out);
    } else if (st.op == "srm_pin") {
      auto r = wire::call(*gateway(), "srm.pin", {{"surl", surl_for(st)}, {"lifetime", a.value("lifetime", 100)}}, auth);
      set_label(a, r.result.at("token").get<std::string>());
      out.result = {{"expires", r.result.at("expires")}};
    } else if (st.op == "srm_unpin") {
      wire::call(*gateway(), "srm.unpin", {{"token", label_value(a, "pin", "token")}}, auth);
    } else if (st.op == "srm_reserve") {
      auto r = wire::call(*gateway(), "srm.reserve",
                          {{"bytes", a.at("bytes")}, {"lifetime", a.value("lifetime", 100)}}, auth);
      set_label(a, r.result.at("token").get<std::string>());
      out.result = {{"bytes", r.result.at("bytes")}, {"expires", r.result.at("expires")}};
    } else if (st.op == "srm_release") {
      wire::call(*gateway(), "srm.release", {{"token", label_value(a, "reservation", "token")}}, auth);
    } else if (st.op == "clock_advance") {
      out.result = wire::call(*gateway(), "clock.advance", {{"ticks", a.at("ticks")}}, auth).result;
    } else if (st.op == "metrics") {
      auto current = srm::gateway_metrics_from_json(wire::call(*gateway(), "srm.metrics", Json::object(), auth).result);
      std::lock_guard lock(mu_);
      out.result = srm::to_json(merge_metrics(metrics_, current));
    }
    return out;
  }

  StepOutcome execute(std::size_t index) {
    const Step& st = sc_.workload[index];
    StepOutcome so;
    so.index = index;
    so.actor = st.actor;
    so.op = st.op;
    so.expected = st.expect;
    Outcome out;
    try {
      out = dispatch(index);
    } catch (const Error& e) {
      out.status = "err";
      out.error = std::string(to_string(e.code()));
      out.detail = e.what();
      out.result = Json::object();
    } catch (const Json::exception& e) {
      out.status = "err";
      out.error = std::string(to_string(ErrorCode::badreq));
      out.detail = e.what();
      out.result = Json::object();
    }
    so.status = out.status;
    so.error = out.error;
    so.result = out.result;
    so.detail = out.detail;
    so.met = so.status == st.expect.status && (!st.expect.error || so.error == st.expect.error) &&
             (st.expect.result.is_null() || json_subset(st.expect.result, so.result));
    return so;
  }

  const Scenario& sc_;
  RunOptions opt_;
  std::uint64_t seed_ = 1;
  std::unique_ptr<Federation> fed_;
  std::unique_ptr<broker::RemoteCatalogAccess> mcat_;
  std::unique_ptr<rls::RlsClient> rls_;
  std::unique_ptr<sync::Syncer> syncer_;
  std::mutex mu_;
  std::map<std::string, std::string> expected_;
  std::map<std::string, std::string> labels_;
  srm::GatewayMetrics metrics_;
};

}  // namespace

bool json_subset(const Json& expected, const Json& actual) {
  if (expected.is_object()) {
    if (!actual.is_object()) return false;
    for (const auto& [k, v] : expected.items()) {
      if (!actual.contains(k) || !json_subset(v, actual.at(k))) return false;
    }
    return true;
  }
  if (expected.is_array()) {
    if (!actual.is_array() || actual.size() != expected.size()) return false;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (!json_subset(expected[i], actual[i])) return false;
    }
    return true;
  }
  return expected == actual;
}

srm::GatewayMetrics merge_metrics(const srm::GatewayMetrics& a, const srm::GatewayMetrics& b) {
  srm::GatewayMetrics m = a;
  m.staging_copies += b.staging_copies;
  m.bytes_copied += b.bytes_copied;
  m.cache_hits += b.cache_hits;
  m.cache_misses += b.cache_misses;
  m.evictions += b.evictions;
  m.bytes_delivered += b.bytes_delivered;
  for (const auto& [k, v] : b.requests_by_outcome) m.requests_by_outcome[k] += v;
  for (const auto& [k, v] : b.site_bytes) m.site_bytes[k] += v;
  return m;
}

Json to_json(const RunReport& r) {
  Json steps = Json::array();
  for (const auto& s : r.steps) {
    Json j{{"index", s.index},     {"actor", s.actor},   {"op", s.op},
           {"status", s.status},   {"result", s.result}, {"expected", expect_to_json(s.expected)},
           {"met", s.met}};
    j["error"] = s.error ? Json(*s.error) : Json(nullptr);
    if (!s.detail.empty()) j["detail"] = s.detail;
    steps.push_back(std::move(j));
  }
  Json faults = Json::array();
  for (const auto& f : r.faults_applied) {
    faults.push_back({{"at_step", f.at_step}, {"action", f.action}, {"target", f.target}});
  }
  std::size_t met = 0;
  for (const auto& s : r.steps) met += s.met ? 1 : 0;
  return Json{{"scenario", r.scenario},
              {"mode", r.mode},
              {"driver", r.driver},
              {"driver_remote", r.driver_remote},
              {"seed", r.seed},
              {"ok", r.ok},
              {"steps_total", r.steps.size()},
              {"steps_met", met},
              {"steps", steps},
              {"faults_applied", faults},
              {"metrics", srm::to_json(r.metrics)},
              {"site_bytes", r.metrics.site_bytes},
              {"master_site", r.master_site},
              {"centralization_ratio", r.centralization_ratio},
              {"started_at", r.started_at},
              {"finished_at", r.finished_at}};
}

RunReport run_scenario(const Scenario& scenario, const RunOptions& options) {
  if (options.work_dir.empty()) fail(ErrorCode::badreq, "run_scenario needs a work directory");
  ScenarioRun run(scenario, options);
  return run.run();
}

}  // namespace gvf::harness
