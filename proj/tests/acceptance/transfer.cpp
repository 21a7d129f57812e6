// Criteria 1 and 3: bytes in equal bytes out on every path, and the copy
// counts of the two gateway drivers.
#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "criteria.hpp"
#include "gvf/common/digest.hpp"
#include "gvf/harness/runner.hpp"
#include "gvf/srm/service.hpp"
#include "support.hpp"

namespace gvf::acceptance {

namespace {

using test::LiveFederation;

constexpr std::size_t kMiB = 1024 * 1024;

std::string content(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  return test::random_bytes(rng, n);
}

std::vector<std::size_t> round_trip_sizes(std::size_t count, std::mt19937_64& rng) {
  // Chunk and frame edges first, the rest spread over the whole range with a
  // log-uniform half so small files are not drowned out.
  std::vector<std::size_t> out{0, 1, kMiB - 1, kMiB, kMiB + 1, 2 * kMiB, 4 * kMiB - 1, 4 * kMiB};
  std::uniform_int_distribution<std::size_t> flat(0, 4 * kMiB);
  std::uniform_real_distribution<double> expo(0.0, 22.0);
  while (out.size() < count) {
    out.push_back(out.size() % 2 ? flat(rng) : static_cast<std::size_t>(std::pow(2.0, expo(rng))));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

struct RoundTrip {
  std::size_t files = 0, checks = 0, bytes = 0;
  std::vector<std::string> problems;
  void bad(const std::string& s) {
    if (problems.size() < 5) problems.push_back(s);
    else if (problems.size() == 5) problems.push_back("...");
  }
};

void run_round_trip(DriverKind kind, const std::vector<std::size_t>& sizes, RoundTrip& out) {
  LiveFederation live(Json{{"gateway", {{"driver", std::string(to_string(kind))}}}}, harness::Mode::subprocess);
  const auto& cfg = live.fed->config();
  const auto& gw = *cfg.gateway;
  const std::vector<std::string> owners{test::kAlice, test::kBob, test::kCarol};
  const std::vector<std::string> users{"alice", "bob", "carol"};
  const std::vector<std::string> sites{"master", "s1", "s2"};
  std::mt19937_64 rng(kind == DriverKind::staged ? 101 : 202);
  auto gateway = live.gateway();

  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const auto who = i % owners.size();
    const auto& subject = owners[who];
    const auto auth = live.auth(subject);
    const std::string name = "/home/" + users[who] + "/rt/" + std::to_string(i) + ".bin";
    const std::string bytes = content(1000 + i, sizes[i]);
    const std::string digest = sha256_hex(bytes);
    const std::string surl = "srm://" + cfg.surl_authority() + "/" + gw.site_id + name;
    const std::string tag = std::string(to_string(kind)) + " #" + std::to_string(i) + " (" +
                            std::to_string(bytes.size()) + " B)";
    ++out.files;
    out.bytes += bytes.size();

    // In through the broker or through the gateway cache.
    if (i % 2 == 0) {
      wire::call(*live.site(sites[rng() % sites.size()]), "srb.put", {{"dataname", name}}, auth, bytes);
    } else {
      auto req = srm::transfer_request_from_json(
          wire::call(*gateway, "srm.put", {{"surl", surl}, {"size_hint", bytes.size()}}, auth).result.at("request"));
      if (req.state != srm::RequestState::ready) {
        out.bad(tag + ": srm put not ready: " + req.message);
        continue;
      }
      auto done = srm::transfer_request_from_json(srm::http_put_turl(req.turl, bytes));
      if (done.state != srm::RequestState::done) out.bad(tag + ": srm put ended " + std::string(srm::to_string(done.state)));
    }

    auto record = wire::call(*live.site("master"), "srb.stat", {{"dataname", name}}, auth).result.at("entry");
    ++out.checks;
    if (record.at("digest") != digest || record.at("size") != bytes.size()) out.bad(tag + ": catalog record differs");

    // Out through the broker at some site.
    auto got = wire::call(*live.site(sites[rng() % sites.size()]), "srb.get", {{"dataname", name}}, auth);
    ++out.checks;
    if (got.body.value_or("") != bytes) out.bad(tag + ": broker get differs");

    // Out through the gateway; the direct driver is asked for both protocols.
    const bool stream = kind == DriverKind::direct && rng() % 3 != 0;
    const std::vector<std::string> protocols{stream ? srm::kProtoVaultStream : srm::kProtoCacheHttp};
    auto req = srm::transfer_request_from_json(
        wire::call(*gateway, "srm.get", {{"surl", surl}, {"protocols", protocols}}, auth).result.at("request"));
    if (req.state != srm::RequestState::ready) {
      out.bad(tag + ": srm get " + std::string(srm::to_string(req.state)) + " " + req.message);
      continue;
    }
    std::string delivered;
    if (req.turl.rfind("vault://", 0) == 0) {
      auto rest = req.turl.substr(8);
      auto slash = rest.find('/');
      delivered = wire::call(*live.fed->channel(rest.substr(0, slash)), "blob.read",
                             {{"blob_id", rest.substr(slash + 1)}}, auth)
                      .body.value_or("");
      wire::call(*gateway, "srm.done", {{"request_id", req.request_id}}, auth);
    } else {
      delivered = srm::http_get_turl(req.turl);
    }
    if (stream != (req.turl.rfind("vault://", 0) == 0)) out.bad(tag + ": unexpected TURL " + req.turl);
    auto final_req = srm::transfer_request_from_json(
        wire::call(*gateway, "srm.status", {{"request_id", req.request_id}}, auth).result.at("request"));
    ++out.checks;
    if (delivered != bytes) out.bad(tag + ": gateway get differs");
    if (sha256_hex(delivered) != record.at("digest")) out.bad(tag + ": delivered digest is not the catalog digest");
    if (final_req.state != srm::RequestState::done) out.bad(tag + ": request ended " + std::string(srm::to_string(final_req.state)));
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
  return s;
}

// Puts with replicas at the gateway site (some via the master), then a shuffled
// run of vault-stream gets where at least 30% repeat an earlier name.
Json copy_workload(std::uint64_t seed, std::set<std::string>& cold, std::size_t& gets) {
  std::mt19937_64 rng(seed);
  gets = 60 + rng() % 21;
  const std::size_t files = 20 + rng() % (gets * 7 / 10 - 20 + 1);
  Json wl = Json::array();
  std::vector<std::string> names;
  for (std::size_t f = 0; f < files; ++f) {
    const std::string name = "/home/alice/sd/" + std::to_string(f);
    names.push_back(name);
    const auto where = rng() % 10;
    const std::size_t size = rng() % 3 == 0 ? rng() % 16 : rng() % 200000;
    Json put{{"actor", "alice"}, {"op", "put"}, {"args", {{"dataname", name}, {"size", size}}}, {"expect", {{"status", "ok"}}}};
    if (where >= 6) put["args"]["site"] = where >= 8 ? "s2" : "master";
    wl.push_back(put);
    if (where == 6 || where == 7) {
      wl.push_back({{"actor", "alice"}, {"op", "replicate"}, {"args", {{"dataname", name}, {"vault", "v1"}}},
                    {"expect", {{"status", "ok"}}}});
    }
  }
  std::vector<std::string> order;
  const std::size_t distinct = std::min(files, gets - (gets * 3 + 9) / 10);
  std::shuffle(names.begin(), names.end(), rng);
  for (std::size_t i = 0; i < distinct; ++i) order.push_back(names[i]);
  while (order.size() < gets) order.push_back(names[rng() % distinct]);
  std::shuffle(order.begin(), order.end(), rng);
  for (const auto& n : order) {
    cold.insert(n);
    wl.push_back({{"actor", "alice"}, {"op", "srm_get"}, {"args", {{"dataname", n}, {"protocols", Json::array({"vault-stream"})}}},
                  {"expect", {{"status", "done"}}}});
  }
  return Json{{"name", "copies-" + std::to_string(seed)},
              {"seed", seed},
              {"subjects", {{"alice", {{"subject", test::kAlice}, {"local_user", "alice"}, {"site", "s1"}}}}},
              {"workload", wl}};
}

harness::RunReport run(const harness::Scenario& s, DriverKind kind) {
  test::TempDir dir;
  harness::RunOptions opt;
  opt.work_dir = dir.path();
  opt.gvf_binary = test::gvf_binary();
  opt.driver = kind;
  return harness::run_scenario(s, opt);
}

}  // namespace

Verdict round_trip_fidelity() {
  std::mt19937_64 rng(7);
  const auto sizes = round_trip_sizes(200, rng);
  RoundTrip rt;
  for (auto kind : {DriverKind::staged, DriverKind::direct}) run_round_trip(kind, sizes, rt);
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  Verdict v;
  v.pass = rt.problems.empty() && rt.files == 400;
  v.detail = std::to_string(sizes.size()) + " files of " + std::to_string(*lo) + ".." + std::to_string(*hi) +
             " B per driver, " + std::to_string(rt.checks) + " comparisons over broker/staged/direct paths, " +
             std::to_string(rt.problems.size()) + " mismatches";
  if (!rt.problems.empty()) v.detail += ": " + join(rt.problems);
  return v;
}

Verdict staged_vs_direct() {
  std::vector<std::string> problems;
  std::size_t workloads = 0, total_gets = 0, total_cold = 0;
  double min_repeat = 1.0;
  auto check = [&](const harness::Scenario& s, std::size_t cold, std::size_t gets) {
    ++workloads;
    total_gets += gets;
    total_cold += cold;
    min_repeat = std::min(min_repeat, 1.0 - static_cast<double>(cold) / static_cast<double>(gets));
    auto staged = run(s, DriverKind::staged);
    auto direct = run(s, DriverKind::direct);
    const std::string tag = s.name + ": ";
    if (!staged.ok || !direct.ok) problems.push_back(tag + "unmet step expectations");
    if (staged.metrics.staging_copies != cold) {
      problems.push_back(tag + "staged copies " + std::to_string(staged.metrics.staging_copies) + " != " +
                         std::to_string(cold) + " cold names");
    }
    if (direct.metrics.staging_copies != 0) {
      problems.push_back(tag + "direct copies " + std::to_string(direct.metrics.staging_copies));
    }
    if (staged.metrics.bytes_delivered != direct.metrics.bytes_delivered) problems.push_back(tag + "delivered bytes differ");
    for (std::size_t i = 0; i < s.workload.size(); ++i) {
      if (s.workload[i].op != "srm_get") continue;
      if (staged.steps[i].result.value("sha256", "a") != direct.steps[i].result.value("sha256", "b")) {
        problems.push_back(tag + "step " + std::to_string(i) + " delivered different bytes");
      }
    }
  };

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::set<std::string> cold;
    std::size_t gets = 0;
    auto s = harness::Scenario::parse(copy_workload(seed, cold, gets));
    check(s, cold.size(), gets);
  }
  // The bundled scenario, counted the same way.
  auto bundled = harness::Scenario::load(test::source_path("scenarios/staged_vs_direct.scn"));
  std::set<std::string> cold;
  std::size_t gets = 0;
  for (const auto& st : bundled.workload) {
    if (st.op != "srm_get") continue;
    ++gets;
    cold.insert(st.args.at("dataname").get<std::string>());
  }
  check(bundled, cold.size(), gets);

  Verdict v;
  v.pass = problems.empty() && min_repeat >= 0.3;
  v.detail = std::to_string(workloads) + " workloads, " + std::to_string(total_gets) + " gets, " +
             std::to_string(total_cold) + " cold names, min repeat share " +
             std::to_string(static_cast<int>(min_repeat * 100)) + "%";
  if (!problems.empty()) v.detail += ": " + join(problems);
  return v;
}

}  // namespace gvf::acceptance
