#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gvf/config.hpp"

namespace gvf::harness {

struct Expect {
  // "ok" / "err" for plain ops; the final request state for srm_get/srm_put.
  std::string status;
  std::optional<std::string> error;
  // When set, must be a structural subset of the step result.
  Json result;
};

struct Step {
  std::string actor;
  std::string op;
  Json args = Json::object();
  Expect expect;
  std::string parallel_group;
};

struct Fault {
  std::size_t at_step = 0;
  std::string action;
  std::string target;
};

struct SubjectDecl {
  std::string subject;
  std::string local_user;
  // Broker site the actor talks to by default.
  std::string site;
};

struct Scenario {
  std::string name;
  std::string description;
  std::uint64_t seed = 1;
  FederationConfig federation;
  std::map<std::string, SubjectDecl> subjects;
  std::vector<Step> workload;
  std::vector<Fault> faults;

  // Throws E_BADREQ on anything malformed or undeclared.
  static Scenario parse(const Json& j);
  static Scenario load(const std::string& path);
  void validate() const;
};

// Master site with one vault, two server sites with one vault each, one
// gateway attached to site s1, RLS next to the master.
Json default_topology();

const std::vector<std::string>& known_ops();

}  // namespace gvf::harness
