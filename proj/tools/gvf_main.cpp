// gvf: daemons, client commands and the scenario harness in one binary.
#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "gvf/common/digest.hpp"
#include "gvf/harness/components.hpp"
#include "gvf/harness/runner.hpp"
#include "gvf/harness/scenario.hpp"
#include "gvf/sync/sync.hpp"
#include "gvf/wire/server.hpp"

using namespace gvf;
using wire::Json;

namespace {

struct Globals {
  std::string config;
  std::string subject;
  std::string token;
  std::string site;
};

FederationConfig load_config(const Globals& g) { return FederationConfig::load(resolve_config_path(g.config)); }

std::shared_ptr<wire::Channel> connect(const std::string& addr) { return wire::tcp_connector()(addr); }

wire::Auth user_auth(const Globals& g, const FederationConfig& cfg) {
  if (g.subject.empty()) fail(ErrorCode::badreq, "--subject is required");
  if (!g.token.empty()) return wire::Auth{g.subject, g.token};
  return harness::auth_for(cfg, g.subject);
}

std::string broker_addr(const Globals& g, const FederationConfig& cfg) {
  return g.site.empty() ? cfg.master().listen : cfg.site(g.site).listen;
}

const GatewayConfig& gateway_of(const FederationConfig& cfg) {
  if (!cfg.gateway) fail(ErrorCode::badreq, "federation has no gateway");
  return *cfg.gateway;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::noent, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) fail(ErrorCode::unavail, "cannot write " + path);
}

std::string self_path() {
  std::error_code ec;
  auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
  return ec ? "gvf" : p.string();
}

void emit(const Json& j) { std::cout << j.dump() << std::endl; }

// Blocks until SIGTERM or SIGINT.
void wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGINT);
  int sig = 0;
  sigwait(&set, &sig);
}

struct Served {
  harness::Node node;
  std::unique_ptr<srm::CacheHttpServer> http;
  std::unique_ptr<wire::Server> server;
};

Served serve_node(harness::Node node) {
  Served s;
  s.node = std::move(node);
  if (s.node.gateway && !s.node.http_addr.empty()) {
    s.http = std::make_unique<srm::CacheHttpServer>(s.node.gateway, s.node.http_addr);
  }
  // The wire server comes up last: readiness probes ping it.
  s.server = std::make_unique<wire::Server>(s.node.handler, s.node.addr);
  return s;
}

int cmd_serve(const Globals& g, const std::string& kind, const std::string& id) {
  auto cfg = load_config(g);
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGINT);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  auto tcp = wire::tcp_connector();
  std::vector<Served> served;
  if (kind == "vault") {
    served.push_back(serve_node(harness::make_vault_node(cfg, id)));
  } else if (kind == "rls") {
    served.push_back(serve_node(harness::make_rls_node(cfg)));
  } else if (kind == "site") {
    served.push_back(serve_node(harness::make_site_node(cfg, id.empty() ? cfg.master().site_id : id, tcp)));
  } else if (kind == "driver") {
    served.push_back(serve_node(harness::make_driver_node(cfg, tcp)));
  } else if (kind == "gateway") {
    served.push_back(serve_node(harness::make_gateway_node(cfg, tcp)));
  } else if (kind == "all") {
    for (const auto& v : cfg.vaults) served.push_back(serve_node(harness::make_vault_node(cfg, v.vault_id)));
    if (!cfg.rls.listen.empty()) served.push_back(serve_node(harness::make_rls_node(cfg)));
    served.push_back(serve_node(harness::make_site_node(cfg, cfg.master().site_id, tcp)));
    for (const auto& s : cfg.sites) {
      if (s.role != SiteRole::master) served.push_back(serve_node(harness::make_site_node(cfg, s.site_id, tcp)));
    }
    if (cfg.gateway) {
      if (cfg.gateway->driver_remote) served.push_back(serve_node(harness::make_driver_node(cfg, tcp)));
      served.push_back(serve_node(harness::make_gateway_node(cfg, tcp)));
    }
  } else {
    fail(ErrorCode::badreq, "unknown component " + kind);
  }
  std::cerr << "gvf serve " << kind << (id.empty() ? "" : " " + id) << ": ready" << std::endl;
  wait_for_signal();
  for (auto it = served.rbegin(); it != served.rend(); ++it) {
    it->server->stop();
    if (it->http) it->http->stop();
  }
  return 0;
}

srm::TransferRequest request_of(const Json& result) {
  return srm::transfer_request_from_json(result.at("request"));
}

std::string turl_token(const std::string& turl) { return turl.substr(turl.rfind('/') + 1); }

// Moves the bytes of a ready get to out_path (cache-http or vault-stream).
Json complete_get(const FederationConfig& cfg, const wire::Auth& auth, const srm::TransferRequest& req,
                  const std::string& out_path) {
  const auto& gw = gateway_of(cfg);
  std::string bytes;
  if (req.turl.rfind("cache://", 0) == 0) {
    bytes = gw.http_listen.empty()
                ? wire::call(*connect(gw.listen), "srm.fetch", {{"token", turl_token(req.turl)}}, std::nullopt)
                      .body.value_or("")
                : srm::http_get_turl(req.turl);
  } else {
    auto rest = req.turl.substr(std::string("vault://").size());
    auto slash = rest.find('/');
    bytes = wire::call(*connect(rest.substr(0, slash)), "blob.read", {{"blob_id", rest.substr(slash + 1)}}, auth)
                .body.value_or("");
    wire::call(*connect(gw.listen), "srm.done", {{"request_id", req.request_id}}, auth);
  }
  write_file(out_path, bytes);
  auto final_req = wire::call(*connect(gw.listen), "srm.status", {{"request_id", req.request_id}}, auth).result;
  return Json{{"request", final_req.at("request")}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}};
}

std::string surl_arg(const FederationConfig& cfg, const std::string& target, const std::string& site) {
  if (target.rfind("srm://", 0) == 0) return target;
  const auto& gw = gateway_of(cfg);
  return rls::Surl(cfg.surl_authority(), site.empty() ? gw.site_id : site, mcat::DataName::parse(target)).str();
}

struct SyncHandles {
  std::unique_ptr<broker::RemoteCatalogAccess> mcat;
  std::unique_ptr<rls::RlsClient> rls;
  std::unique_ptr<sync::Syncer> syncer;
};

SyncHandles make_syncer(const FederationConfig& cfg) {
  if (cfg.rls.listen.empty()) fail(ErrorCode::badreq, "federation has no rls");
  SyncHandles h;
  h.mcat = std::make_unique<broker::RemoteCatalogAccess>(connect(cfg.master().listen), harness::service_auth(cfg));
  h.rls = std::make_unique<rls::RlsClient>(connect(cfg.rls.listen), harness::service_auth(cfg));
  h.syncer = std::make_unique<sync::Syncer>(
      *h.mcat, *h.rls, sync::SyncOptions{cfg.surl_authority(), cfg.sync.state_dir, cfg.sync.page_size});
  return h;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gvf: desk-scale grid storage federation"};
  app.require_subcommand(1);
  // Global options may follow the subcommand.
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "federation config (default: $GVF_CONFIG)");
  app.add_option("--subject", g.subject, "grid subject to act as");
  app.add_option("--token", g.token, "subject token (default: derived from the config secret)");
  app.add_option("--site", g.site, "broker site to talk to (default: master)");

  std::function<int()> action;

  // serve
  auto* serve = app.add_subcommand("serve", "run a daemon");
  std::string serve_kind, serve_id;
  serve->add_option("component", serve_kind, "vault | rls | site | driver | gateway | all")->required();
  serve->add_option("--id", serve_id, "vault_id or site_id");
  serve->callback([&] { action = [&] { return cmd_serve(g, serve_kind, serve_id); }; });

  auto* token = app.add_subcommand("token", "print the token for --subject");
  token->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      emit({{"subject", g.subject}, {"token", harness::auth_for(cfg, g.subject).token}});
      return 0;
    };
  });

  // broker commands
  std::string dataname, path, vault_id, prefix = "/";
  auto* put = app.add_subcommand("put", "store a local file under a dataname");
  put->add_option("dataname", dataname)->required();
  put->add_option("file", path)->required();
  put->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      auto r = wire::call(*connect(broker_addr(g, cfg)), "srb.put", {{"dataname", dataname}}, user_auth(g, cfg),
                          read_file(path));
      emit(r.result);
      return 0;
    };
  });

  auto* get = app.add_subcommand("get", "fetch a dataname into a local file");
  get->add_option("dataname", dataname)->required();
  get->add_option("-o,--out", path, "output file")->required();
  get->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      auto r = wire::call(*connect(broker_addr(g, cfg)), "srb.get", {{"dataname", dataname}}, user_auth(g, cfg));
      write_file(path, r.body.value_or(""));
      r.result["bytes"] = r.body.value_or("").size();
      emit(r.result);
      return 0;
    };
  });

  auto* rm = app.add_subcommand("rm", "delete a dataname");
  rm->add_option("dataname", dataname)->required();
  rm->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      emit(wire::call(*connect(broker_addr(g, cfg)), "srb.rm", {{"dataname", dataname}}, user_auth(g, cfg)).result);
      return 0;
    };
  });

  auto* replicate = app.add_subcommand("replicate", "copy a dataname onto another vault");
  replicate->add_option("dataname", dataname)->required();
  replicate->add_option("--vault", vault_id)->required();
  replicate->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      emit(wire::call(*connect(broker_addr(g, cfg)), "srb.replicate",
                      {{"dataname", dataname}, {"target_vault", vault_id}}, user_auth(g, cfg))
               .result);
      return 0;
    };
  });

  auto* ls = app.add_subcommand("ls", "list datanames under a prefix");
  ls->add_option("prefix", prefix);
  ls->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      emit(wire::call(*connect(broker_addr(g, cfg)), "srb.ls", {{"prefix", prefix}}, user_auth(g, cfg)).result);
      return 0;
    };
  });

  // srm
  auto* srm_cmd = app.add_subcommand("srm", "storage resource manager gateway");
  srm_cmd->require_subcommand(1);
  std::string target, label, req_id, srm_site;
  std::vector<std::string> protocols{srm::kProtoCacheHttp};
  std::uint64_t bytes = 0, lifetime = 3600;
  std::optional<std::string> reservation;

  auto* sget = srm_cmd->add_subcommand("get", "request a transfer URL for reading");
  sget->add_option("surl", target, "srm:// URL or dataname")->required();
  sget->add_option("--surl-site", srm_site, "site segment when a dataname is given");
  sget->add_option("--protocols", protocols)->delimiter(',');
  sget->add_option("-o,--out", path, "complete the transfer into this file");
  sget->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      auto auth = user_auth(g, cfg);
      auto r = wire::call(*connect(gateway_of(cfg).listen), "srm.get",
                          {{"surl", surl_arg(cfg, target, srm_site)}, {"protocols", protocols}}, auth);
      auto req = request_of(r.result);
      if (!path.empty() && req.state == srm::RequestState::ready) {
        emit(complete_get(cfg, auth, req, path));
      } else {
        emit(r.result);
      }
      return req.state == srm::RequestState::failed ? exit_code_for(req.error.value_or(ErrorCode::unavail)) : 0;
    };
  });

  auto* sput = srm_cmd->add_subcommand("put", "upload a local file through the gateway cache");
  sput->add_option("surl", target, "srm:// URL or dataname")->required();
  sput->add_option("file", path)->required();
  sput->add_option("--surl-site", srm_site);
  sput->add_option("--reservation", reservation);
  sput->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      auto auth = user_auth(g, cfg);
      const auto& gw = gateway_of(cfg);
      auto data = read_file(path);
      Json args{{"surl", surl_arg(cfg, target, srm_site)}, {"protocols", protocols}, {"size_hint", data.size()}};
      if (reservation) args["reservation"] = *reservation;
      auto req = request_of(wire::call(*connect(gw.listen), "srm.put", args, auth).result);
      if (req.state == srm::RequestState::ready) {
        Json up = gw.http_listen.empty()
                      ? wire::call(*connect(gw.listen), "srm.upload", {{"token", turl_token(req.turl)}},
                                   std::nullopt, data)
                            .result.at("request")
                      : srm::http_put_turl(req.turl, data);
        req = srm::transfer_request_from_json(up);
      }
      emit({{"request", srm::to_json(req)}});
      return req.state == srm::RequestState::failed ? exit_code_for(req.error.value_or(ErrorCode::unavail)) : 0;
    };
  });

  auto simple_srm = [&](CLI::App* sub, const std::string& op, std::function<Json()> args) {
    sub->callback([&, op, args] {
      action = [&, op, args] {
        auto cfg = load_config(g);
        emit(wire::call(*connect(gateway_of(cfg).listen), op, args(), user_auth(g, cfg)).result);
        return 0;
      };
    });
  };

  auto* spin = srm_cmd->add_subcommand("pin", "pin a dataname in the gateway cache");
  spin->add_option("surl", target)->required();
  spin->add_option("--surl-site", srm_site);
  spin->add_option("--lifetime", lifetime);
  spin->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      emit(wire::call(*connect(gateway_of(cfg).listen), "srm.pin",
                      {{"surl", surl_arg(cfg, target, srm_site)}, {"lifetime", lifetime}}, user_auth(g, cfg))
               .result);
      return 0;
    };
  });
  auto* sunpin = srm_cmd->add_subcommand("unpin", "drop a pin");
  sunpin->add_option("token", label)->required();
  simple_srm(sunpin, "srm.unpin", [&] { return Json{{"token", label}}; });
  auto* sreserve = srm_cmd->add_subcommand("reserve", "reserve cache space for uploads");
  sreserve->add_option("bytes", bytes)->required();
  sreserve->add_option("--lifetime", lifetime);
  simple_srm(sreserve, "srm.reserve", [&] { return Json{{"bytes", bytes}, {"lifetime", lifetime}}; });
  auto* srelease = srm_cmd->add_subcommand("release", "release a reservation");
  srelease->add_option("token", label)->required();
  simple_srm(srelease, "srm.release", [&] { return Json{{"token", label}}; });
  auto* sstatus = srm_cmd->add_subcommand("status", "show a transfer request");
  sstatus->add_option("request_id", req_id)->required();
  simple_srm(sstatus, "srm.status", [&] { return Json{{"request_id", req_id}}; });
  auto* sls = srm_cmd->add_subcommand("ls", "list through the gateway");
  sls->add_option("prefix", prefix);
  simple_srm(sls, "srm.ls", [&] { return Json{{"prefix", prefix}}; });
  auto* smetrics = srm_cmd->add_subcommand("metrics", "gateway counters");
  smetrics->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      emit(wire::call(*connect(gateway_of(cfg).listen), "srm.metrics", Json::object(), std::nullopt).result);
      return 0;
    };
  });

  // rls
  auto* rls_cmd = app.add_subcommand("rls", "replica location service");
  rls_cmd->require_subcommand(1);
  auto* lookup = rls_cmd->add_subcommand("lookup", "SURLs for a dataname, GUID or the GUID of a SURL");
  lookup->add_option("key", target)->required();
  lookup->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      rls::RlsClient client(connect(cfg.rls.listen), std::nullopt);
      if (target.rfind("srm://", 0) == 0) {
        emit({{"surl", target}, {"guid", client.lookup_surl(rls::Surl::parse(target)).value()}});
        return 0;
      }
      auto guid = rls::Guid::is_valid(target) ? rls::Guid::parse(target) : sync::derive_guid(target);
      emit({{"guid", guid.value()}, {"surls", client.lookup_guid(guid)}});
      return 0;
    };
  });

  // sync
  auto* sync_cmd = app.add_subcommand("sync", "publish catalog changes to the rls");
  sync_cmd->require_subcommand(1);
  auto* once = sync_cmd->add_subcommand("once", "one incremental pass");
  once->callback([&] {
    action = [&] {
      auto h = make_syncer(load_config(g));
      emit(sync::to_json(h.syncer->sync_once()));
      return 0;
    };
  });
  unsigned interval = 10;
  std::uint64_t count = 0;
  auto* run = sync_cmd->add_subcommand("run", "incremental passes on an interval");
  run->add_option("--interval", interval, "seconds between passes");
  run->add_option("--count", count, "stop after this many passes (0: forever)");
  run->callback([&] {
    action = [&] {
      auto h = make_syncer(load_config(g));
      for (std::uint64_t i = 0; count == 0 || i < count; ++i) {
        if (i > 0) std::this_thread::sleep_for(std::chrono::seconds(interval));
        try {
          emit(sync::to_json(h.syncer->sync_once()));
        } catch (const Error& e) {
          // A failed pass leaves the cursor alone; the next one retries.
          std::cerr << "sync: " << to_string(e.code()) << ": " << e.what() << std::endl;
        }
      }
      return 0;
    };
  });
  auto* rescan = app.add_subcommand("rescan", "reconcile the rls against the whole catalog");
  rescan->callback([&] {
    action = [&] {
      auto h = make_syncer(load_config(g));
      emit(sync::to_json(h.syncer->full_rescan()));
      return 0;
    };
  });

  // admin
  auto* admin = app.add_subcommand("admin", "administrative commands");
  admin->require_subcommand(1);
  std::string map_subject, local_user;
  auto* mkuser = admin->add_subcommand("mkuser", "map a subject to a local user on every site (or --site)");
  mkuser->add_option("subject", map_subject)->required();
  mkuser->add_option("local_user", local_user)->required();
  mkuser->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      Json done = Json::array();
      for (const auto& s : cfg.sites) {
        if (!g.site.empty() && s.site_id != g.site) continue;
        wire::call(*connect(s.listen), "admin.mkuser", {{"subject", map_subject}, {"local_user", local_user}},
                   harness::service_auth(cfg));
        done.push_back(s.site_id);
      }
      emit({{"subject", map_subject}, {"local_user", local_user}, {"sites", done}});
      return 0;
    };
  });
  std::vector<std::string> grants;
  auto* grant = admin->add_subcommand("grant", "replace a dataname's ACL grants (owner only)");
  grant->add_option("dataname", dataname)->required();
  grant->add_option("--grant", grants, "subject=perms, perms as read, write, delete or letters such as rw");
  grant->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      Json j = Json::object();
      for (const auto& item : grants) {
        auto eq = item.rfind('=');
        if (eq == std::string::npos) fail(ErrorCode::badreq, "grant must be subject=perm: " + item);
        j[item.substr(0, eq)] = item.substr(eq + 1);
      }
      emit(wire::call(*connect(broker_addr(g, cfg)), "srb.set_acl", {{"dataname", dataname}, {"grants", j}},
                      user_auth(g, cfg))
               .result);
      return 0;
    };
  });

  // clock
  auto* clock_cmd = app.add_subcommand("clock", "gateway logical clock");
  clock_cmd->require_subcommand(1);
  std::uint64_t ticks = 1;
  auto* advance = clock_cmd->add_subcommand("advance", "move the gateway clock forward");
  advance->add_option("ticks", ticks);
  advance->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      emit(wire::call(*connect(gateway_of(cfg).listen), "clock.advance", {{"ticks", ticks}}, user_auth(g, cfg))
               .result);
      return 0;
    };
  });

  // harness
  auto* harness_cmd = app.add_subcommand("harness", "scenario harness");
  harness_cmd->require_subcommand(1);
  std::string scn, out, work_dir, mode = "inproc", driver;
  bool inproc = false, remote_driver = false;
  std::optional<std::uint64_t> seed;
  auto* hrun = harness_cmd->add_subcommand("run", "run a scenario file and report");
  hrun->add_option("scenario", scn)->required();
  hrun->add_option("--mode", mode, "inproc | subprocess")->check(CLI::IsMember({"inproc", "subprocess"}));
  hrun->add_flag("--inproc", inproc, "same as --mode inproc");
  hrun->add_option("--seed", seed);
  hrun->add_option("--out", out, "write the report here as well as stdout");
  hrun->add_option("--driver", driver)->check(CLI::IsMember({"staged", "direct"}));
  hrun->add_flag("--remote-driver", remote_driver, "serve the driver behind drv.* ops");
  hrun->add_option("--work-dir", work_dir, "federation state (default: fresh temp dir)");
  hrun->callback([&] {
    action = [&] {
      auto sc = harness::Scenario::load(scn);
      harness::RunOptions opt;
      opt.mode = inproc || mode == "inproc" ? harness::Mode::inproc : harness::Mode::subprocess;
      opt.seed = seed;
      opt.gvf_binary = self_path();
      if (!driver.empty()) opt.driver = parse_driver_kind(driver);
      if (remote_driver) opt.driver_remote = true;
      bool temp = work_dir.empty();
      if (temp) {
        std::string tmpl = (std::filesystem::temp_directory_path() / "gvf-run-XXXXXX").string();
        if (mkdtemp(tmpl.data()) == nullptr) fail(ErrorCode::unavail, "mkdtemp failed");
        work_dir = tmpl;
      }
      opt.work_dir = work_dir;
      auto report = harness::to_json(harness::run_scenario(sc, opt));
      if (temp) std::filesystem::remove_all(work_dir);
      if (!out.empty()) write_file(out, report.dump(2) + "\n");
      emit(report);
      return report.at("ok").get<bool>() ? 0 : 1;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    return action();
  } catch (const Error& e) {
    emit({{"status", "err"}, {"error", std::string(to_string(e.code()))}, {"message", e.what()}});
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    emit({{"status", "err"}, {"error", "E_BADREQ"}, {"message", e.what()}});
    return exit_code_for(ErrorCode::badreq);
  }
}
