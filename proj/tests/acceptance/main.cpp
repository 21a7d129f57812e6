// One PASS/FAIL line per acceptance criterion. Arguments select criteria by
// number; with none, all eight run. Exit 0 iff every selected one passed.
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>

#include "criteria.hpp"
#include "gvf/common/error.hpp"

using namespace gvf::acceptance;

namespace {

struct Criterion {
  int number;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion all[] = {
      {1, "round-trip fidelity", round_trip_fidelity},
      {2, "permission mismatch", permission_mismatch},
      {3, "staged vs direct copies", staged_vs_direct},
      {4, "pin and reservation safety", cache_trace},
      {5, "sync convergence", sync_convergence},
      {6, "crash recovery", crash_recovery},
      {7, "identity decoupling", identity_decoupling},
      {8, "driver contract", driver_contract},
  };
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));

  bool ok = true;
  for (const auto& c : all) {
    if (!chosen.empty() && !chosen.contains(c.number)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("aborted: ") + e.what()};
    }
    auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << c.number << "] " << c.name << ": " << v.detail << " ("
              << static_cast<int>(secs * 10) / 10.0 << "s)" << std::endl;
    ok = ok && v.pass;
  }
  return ok ? 0 : 1;
}
