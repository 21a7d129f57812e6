#pragma once

#include <sys/types.h>

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gvf/harness/components.hpp"
#include "gvf/wire/server.hpp"

namespace gvf::harness {

enum class Mode { inproc, subprocess };

std::string_view to_string(Mode m);

// Boots every daemon a config describes, either inside this process on a
// wire::Network or as `gvf serve` children on loopback TCP. Fault targets:
// "site:<id>", "vault:<id>", "rls", "gateway", "driver".
class Federation {
 public:
  // In subprocess mode listen addresses are rewritten to free loopback ports
  // and the config is written to <work_dir>/federation.json for the children.
  Federation(FederationConfig cfg, Mode mode, std::string work_dir, std::string gvf_binary = "");
  ~Federation();
  Federation(const Federation&) = delete;
  Federation& operator=(const Federation&) = delete;

  void start();
  void stop();
  void kill(const std::string& target);
  void restart(const std::string& target);
  bool is_up(const std::string& target) const;
  std::vector<std::string> targets() const;

  Mode mode() const { return mode_; }
  const FederationConfig& config() const { return cfg_; }
  const std::string& config_path() const { return config_path_; }
  wire::Connector connector() const { return connect_; }
  std::shared_ptr<wire::Channel> channel(const std::string& addr) const { return connect_(addr); }
  wire::Auth auth(const std::string& subject) const { return auth_for(cfg_, subject); }
  wire::Auth service() const { return service_auth(cfg_); }

  std::string address_of(const std::string& target) const;
  // In-process gateway, when running inproc and up.
  std::shared_ptr<srm::Gateway> inproc_gateway() const;

 private:
  struct Running {
    Node node;
    std::unique_ptr<wire::Server> server;
    pid_t pid = -1;
  };

  Node build(const std::string& target) const;
  void spawn(const std::string& target);
  void wait_ready(const std::string& target);
  std::string log_path(const std::string& target) const;

  FederationConfig cfg_;
  Mode mode_;
  std::string work_dir_;
  std::string gvf_binary_;
  std::string config_path_;
  std::shared_ptr<wire::Network> net_;
  wire::Connector connect_;
  std::map<std::string, Running> running_;
};

}  // namespace gvf::harness
