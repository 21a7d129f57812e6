#include "gvf/harness/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "gvf/common/error.hpp"
#include "gvf/mcat/types.hpp"

namespace gvf::harness {

namespace {

void need(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::badreq, "scenario: " + what);
}

}  // namespace

const std::vector<std::string>& known_ops() {
  static const std::vector<std::string> ops{
      "put",        "get",        "rm",         "replicate",   "ls",          "grant",      "mkuser",
      "sync",       "rescan",     "rls_lookup", "srm_get",     "srm_put",     "srm_pin",    "srm_unpin",
      "srm_reserve", "srm_release", "srm_ls",    "clock_advance", "metrics"};
  return ops;
}

Json default_topology() {
  return Json::parse(R"({
    "secret": "desk-federation-secret",
    "clock": "logical",
    "sites": [
      {"site_id": "master", "role": "master", "listen": "master:7001", "local_vaults": ["v0"]},
      {"site_id": "s1", "role": "server", "listen": "s1:7001", "local_vaults": ["v1"]},
      {"site_id": "s2", "role": "server", "listen": "s2:7001", "local_vaults": ["v2"]}
    ],
    "vaults": [
      {"vault_id": "v0", "site_id": "master", "capacity": 1073741824, "listen": "master:7101"},
      {"vault_id": "v1", "site_id": "s1", "capacity": 1073741824, "listen": "s1:7101"},
      {"vault_id": "v2", "site_id": "s2", "capacity": 1073741824, "listen": "s2:7101"}
    ],
    "rls": {"listen": "master:7201"},
    "gateway": {
      "listen": "gateway:8443",
      "http_listen": "gateway:8080",
      "site_id": "s1",
      "broker_site": "s1",
      "cache_capacity_bytes": 268435456,
      "driver": "staged",
      "driver_listen": "gateway:7301",
      "surl_authority": "gateway:8443"
    },
    "sync": {"page_size": 256}
  })");
}

Scenario Scenario::parse(const Json& j) {
  need(j.is_object(), "top level must be an object");
  Scenario s;
  try {
    s.name = j.value("name", "");
    s.description = j.value("description", "");
    s.seed = j.value("seed", std::uint64_t{1});

    Json fed = default_topology();
    if (auto it = j.find("federation"); it != j.end()) fed.merge_patch(*it);
    const Json subjects = j.value("subjects", Json::object());
    for (const auto& [alias, decl] : subjects.items()) {
      SubjectDecl d;
      d.subject = decl.at("subject").get<std::string>();
      d.local_user = decl.value("local_user", alias);
      d.site = decl.value("site", "");
      s.subjects.emplace(alias, d);
    }
    for (auto& site : fed["sites"]) {
      for (const auto& [_, d] : s.subjects) site["subject_map"][d.subject] = d.local_user;
    }
    s.federation = FederationConfig::from_json(fed);

    for (const auto& st : j.value("workload", Json::array())) {
      Step step;
      step.actor = st.at("actor").get<std::string>();
      step.op = st.at("op").get<std::string>();
      step.args = st.value("args", Json::object());
      need(st.contains("expect"), "step " + step.op + " has no expect");
      const auto& e = st.at("expect");
      step.expect.status = e.at("status").get<std::string>();
      if (e.contains("error") && !e.at("error").is_null()) step.expect.error = e.at("error").get<std::string>();
      step.expect.result = e.value("result", Json());
      step.parallel_group = st.value("parallel_group", "");
      s.workload.push_back(std::move(step));
    }
    for (const auto& f : j.value("faults", Json::array())) {
      s.faults.push_back(Fault{f.at("at_step").get<std::size_t>(), f.at("action").get<std::string>(),
                               f.at("target").get<std::string>()});
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::badreq, std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::badreq, "cannot read scenario " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::badreq, "scenario " + path + ": " + e.what());
  }
  return parse(j);
}

void Scenario::validate() const {
  // Directories are assigned per run, so only the shape is checked here.
  FederationConfig shape = federation;
  for (auto& v : shape.vaults) {
    if (v.root_dir.empty()) v.root_dir = "unassigned";
  }
  shape.validate();
  for (const auto& [alias, d] : subjects) {
    need(alias != "service" && alias != "anonymous", "subject alias '" + alias + "' is reserved");
    need(mcat::Subject::is_valid(d.subject), "invalid subject for " + alias);
    if (!d.site.empty()) federation.site(d.site);
  }
  const auto& ops = known_ops();
  for (std::size_t i = 0; i < workload.size(); ++i) {
    const auto& st = workload[i];
    const std::string where = "step " + std::to_string(i) + ": ";
    need(st.actor == "service" || st.actor == "anonymous" || subjects.contains(st.actor),
         where + "undeclared actor " + st.actor);
    need(std::find(ops.begin(), ops.end(), st.op) != ops.end(), where + "unknown op " + st.op);
    need(!st.expect.status.empty(), where + "expect.status is required");
    need(st.args.is_object(), where + "args must be an object");
    if (st.args.contains("site")) federation.site(st.args.at("site").get<std::string>());
    if (st.args.contains("vault")) federation.vault(st.args.at("vault").get<std::string>());
    if (st.args.contains("dataname")) mcat::DataName::parse(st.args.at("dataname").get<std::string>());
    if (st.op == "grant") {
      const Json grants = st.args.value("grants", Json::object());
      for (const auto& [who, _] : grants.items()) {
        need(subjects.contains(who) || mcat::Subject::is_valid(who), where + "grant to undeclared " + who);
      }
    }
  }
  std::set<std::string> targets{"rls", "gateway", "driver"};
  for (const auto& s : federation.sites) targets.insert("site:" + s.site_id);
  for (const auto& v : federation.vaults) targets.insert("vault:" + v.vault_id);
  for (const auto& f : faults) {
    need(f.action == "kill" || f.action == "restart", "fault action must be kill or restart");
    need(targets.contains(f.target), "unknown fault target " + f.target);
    need(f.at_step <= workload.size(), "fault at_step past the end of the workload");
    if (f.at_step > 0 && f.at_step < workload.size()) {
      const auto& g = workload[f.at_step].parallel_group;
      need(g.empty() || workload[f.at_step - 1].parallel_group != g, "fault inside parallel group " + g);
    }
  }
}

}  // namespace gvf::harness
