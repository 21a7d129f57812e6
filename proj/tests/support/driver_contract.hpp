#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gvf/srm/driver.hpp"
#include "gvf/wire/server.hpp"
#include "support.hpp"

namespace gvf::test {

// A federation with a fixed set of files and one DriverBoundary under test,
// either the driver object itself or a RemoteDriver reaching a DriverServer
// over loopback TCP.
struct ContractRig {
  ContractRig(DriverKind kind, bool remote);
  ~ContractRig();

  DriverKind kind;
  bool remote;
  LiveFederation live;
  std::shared_ptr<srm::DriverBoundary> driver;
  std::unique_ptr<wire::Server> server;

  // alice's files: pub (bob may read), priv, d/x and d/y.
  std::string pub_bytes, priv_bytes;
};

struct ContractCase {
  std::string name;
  // allow, deny, missing or unavailable.
  std::string category;
  std::function<void(ContractRig&)> run;
};

const std::vector<ContractCase>& driver_contract_cases();

// Empty on success, otherwise what went wrong.
std::string run_contract_case(const ContractCase& c, DriverKind kind, bool remote);

}  // namespace gvf::test
