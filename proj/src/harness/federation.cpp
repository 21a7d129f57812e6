#include "gvf/harness/federation.hpp"

#include <fcntl.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace gvf::harness {

namespace fs = std::filesystem;

namespace {

std::uint16_t free_port() {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) fail(ErrorCode::unavail, "socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof(addr);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    ::close(fd);
    fail(ErrorCode::unavail, "cannot find a free port");
  }
  ::close(fd);
  return ntohs(addr.sin_port);
}

std::string loopback() { return "127.0.0.1:" + std::to_string(free_port()); }

void default_dir(std::string& dir, const fs::path& fallback) {
  if (dir.empty()) dir = fallback.string();
}

std::string log_tail(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto s = ss.str();
  return s.size() > 2000 ? s.substr(s.size() - 2000) : s;
}

}  // namespace

std::string_view to_string(Mode m) { return m == Mode::inproc ? "inproc" : "subprocess"; }

Federation::Federation(FederationConfig cfg, Mode mode, std::string work_dir, std::string gvf_binary)
    : cfg_(std::move(cfg)), mode_(mode), work_dir_(std::move(work_dir)), gvf_binary_(std::move(gvf_binary)) {
  const fs::path root(work_dir_);
  fs::create_directories(root);
  for (auto& v : cfg_.vaults) default_dir(v.root_dir, root / "vaults" / v.vault_id);
  for (auto& s : cfg_.sites) {
    default_dir(s.data_dir, root / "sites" / s.site_id);
    default_dir(s.mcat_dir, fs::path(s.data_dir) / "mcat");
  }
  default_dir(cfg_.rls.data_dir, root / "rls");
  default_dir(cfg_.sync.state_dir, root / "sync");
  if (cfg_.gateway) {
    default_dir(cfg_.gateway->cache_dir, root / "cache");
    if (cfg_.gateway->surl_authority.empty()) cfg_.gateway->surl_authority = cfg_.gateway->listen;
  }

  if (mode_ == Mode::subprocess) {
    if (gvf_binary_.empty()) fail(ErrorCode::badreq, "subprocess mode needs the gvf binary");
    for (auto& v : cfg_.vaults) v.listen = loopback();
    for (auto& s : cfg_.sites) s.listen = loopback();
    if (!cfg_.rls.listen.empty()) cfg_.rls.listen = loopback();
    if (cfg_.gateway) {
      cfg_.gateway->listen = loopback();
      if (!cfg_.gateway->http_listen.empty()) cfg_.gateway->http_listen = loopback();
      if (!cfg_.gateway->driver_listen.empty()) cfg_.gateway->driver_listen = loopback();
    }
    connect_ = wire::tcp_connector();
  } else {
    net_ = std::make_shared<wire::Network>();
    connect_ = net_->connector();
  }
  cfg_.validate();
  config_path_ = (root / "federation.json").string();
  cfg_.save(config_path_);
}

Federation::~Federation() {
  try {
    stop();
  } catch (...) {
  }
}

std::vector<std::string> Federation::targets() const {
  std::vector<std::string> out;
  for (const auto& v : cfg_.vaults) out.push_back("vault:" + v.vault_id);
  if (!cfg_.rls.listen.empty()) out.push_back("rls");
  out.push_back("site:" + cfg_.master().site_id);
  for (const auto& s : cfg_.sites) {
    if (s.role != SiteRole::master) out.push_back("site:" + s.site_id);
  }
  if (cfg_.gateway) {
    if (cfg_.gateway->driver_remote) out.push_back("driver");
    out.push_back("gateway");
  }
  return out;
}

std::string Federation::address_of(const std::string& target) const {
  if (target == "rls") return cfg_.rls.listen;
  if (target == "gateway") return cfg_.gateway.value().listen;
  if (target == "driver") return cfg_.gateway.value().driver_listen;
  if (target.rfind("site:", 0) == 0) return cfg_.site(target.substr(5)).listen;
  if (target.rfind("vault:", 0) == 0) return cfg_.vault(target.substr(6)).listen;
  fail(ErrorCode::badreq, "unknown fault target " + target);
}

Node Federation::build(const std::string& target) const {
  if (target == "rls") return make_rls_node(cfg_);
  if (target == "gateway") return make_gateway_node(cfg_, connect_);
  if (target == "driver") return make_driver_node(cfg_, connect_);
  if (target.rfind("site:", 0) == 0) return make_site_node(cfg_, target.substr(5), connect_);
  if (target.rfind("vault:", 0) == 0) return make_vault_node(cfg_, target.substr(6));
  fail(ErrorCode::badreq, "unknown fault target " + target);
}

void Federation::start() {
  for (const auto& t : targets()) {
    if (!is_up(t)) restart(t);
  }
}

bool Federation::is_up(const std::string& target) const { return running_.contains(target); }

void Federation::restart(const std::string& target) {
  address_of(target);
  if (is_up(target)) return;
  if (mode_ == Mode::inproc) {
    Running r;
    r.node = build(target);
    net_->bind(r.node.addr, r.node.handler);
    running_.emplace(target, std::move(r));
    return;
  }
  spawn(target);
  wait_ready(target);
}

std::string Federation::log_path(const std::string& target) const {
  std::string name = target;
  std::replace(name.begin(), name.end(), ':', '-');
  return (fs::path(work_dir_) / "logs" / (name + ".log")).string();
}

void Federation::spawn(const std::string& target) {
  std::string kind = target;
  std::string id;
  if (auto colon = target.find(':'); colon != std::string::npos) {
    kind = target.substr(0, colon);
    id = target.substr(colon + 1);
  }
  fs::create_directories(fs::path(work_dir_) / "logs");
  std::string log = log_path(target);
  std::vector<std::string> args{gvf_binary_, "serve", kind, "--config", config_path_};
  if (!id.empty()) {
    args.push_back("--id");
    args.push_back(id);
  }
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t parent = ::getpid();
  pid_t pid = ::fork();
  if (pid < 0) fail(ErrorCode::unavail, "fork failed");
  if (pid == 0) {
    ::prctl(PR_SET_PDEATHSIG, SIGKILL);
    if (::getppid() != parent) ::_exit(1);
    int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd >= 0) {
      ::dup2(fd, 1);
      ::dup2(fd, 2);
      ::close(fd);
    }
    ::execv(argv[0], argv.data());
    ::_exit(127);
  }
  Running r;
  r.pid = pid;
  r.node.addr = address_of(target);
  running_.emplace(target, std::move(r));
}

void Federation::wait_ready(const std::string& target) {
  auto& r = running_.at(target);
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  while (std::chrono::steady_clock::now() < deadline) {
    int status = 0;
    if (::waitpid(r.pid, &status, WNOHANG) == r.pid) {
      running_.erase(target);
      fail(ErrorCode::unavail, target + " exited during startup:\n" + log_tail(log_path(target)));
    }
    try {
      wire::call(*connect_(r.node.addr), "sys.ping", wire::Json::object(), std::nullopt);
      return;
    } catch (const Error&) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  kill(target);
  fail(ErrorCode::unavail, target + " did not come up");
}

void Federation::kill(const std::string& target) {
  auto it = running_.find(target);
  if (it == running_.end()) return;
  if (mode_ == Mode::inproc) {
    net_->unbind(it->second.node.addr);
  } else {
    ::kill(it->second.pid, SIGKILL);
    int status = 0;
    ::waitpid(it->second.pid, &status, 0);
  }
  running_.erase(it);
}

void Federation::stop() {
  auto order = targets();
  for (auto t = order.rbegin(); t != order.rend(); ++t) {
    auto it = running_.find(*t);
    if (it == running_.end()) continue;
    if (mode_ == Mode::inproc) {
      net_->unbind(it->second.node.addr);
      running_.erase(it);
      continue;
    }
    ::kill(it->second.pid, SIGTERM);
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(3);
    int status = 0;
    while (::waitpid(it->second.pid, &status, WNOHANG) == 0) {
      if (std::chrono::steady_clock::now() > deadline) {
        ::kill(it->second.pid, SIGKILL);
        ::waitpid(it->second.pid, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    running_.erase(it);
  }
}

std::shared_ptr<srm::Gateway> Federation::inproc_gateway() const {
  auto it = running_.find("gateway");
  if (it == running_.end()) return nullptr;
  return it->second.node.gateway;
}

}  // namespace gvf::harness
