#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gvf/harness/federation.hpp"
#include "gvf/harness/scenario.hpp"
#include "gvf/srm/gateway.hpp"

namespace gvf::harness {

struct StepOutcome {
  std::size_t index = 0;
  std::string actor;
  std::string op;
  std::string status;
  std::optional<std::string> error;
  Json result;
  std::string detail;
  Expect expected;
  bool met = false;
};

struct RunReport {
  std::string scenario;
  std::string mode;
  std::string driver;
  bool driver_remote = false;
  std::uint64_t seed = 0;
  std::vector<StepOutcome> steps;
  std::vector<Fault> faults_applied;
  srm::GatewayMetrics metrics;
  double centralization_ratio = 0.0;
  std::string master_site;
  bool ok = true;
  std::string started_at;
  std::string finished_at;
};

Json to_json(const RunReport& r);

struct RunOptions {
  Mode mode = Mode::inproc;
  std::optional<std::uint64_t> seed;
  std::string work_dir;
  std::string gvf_binary;
  std::optional<DriverKind> driver;
  std::optional<bool> driver_remote;
};

// Boots the scenario's federation, runs the workload with its faults, tears
// everything down. ok is true iff every expectation was met.
RunReport run_scenario(const Scenario& scenario, const RunOptions& options);

// True when every key/element of expected appears, recursively, in actual.
bool json_subset(const Json& expected, const Json& actual);

srm::GatewayMetrics merge_metrics(const srm::GatewayMetrics& a, const srm::GatewayMetrics& b);

}  // namespace gvf::harness
