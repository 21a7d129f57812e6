#include "support.hpp"

#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <stdlib.h>

namespace gvf::test {

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "gvf-test-XXXXXX").string();
  if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::string out(n, '\0');
  std::size_t i = 0;
  while (i + 8 <= n) {
    auto v = rng();
    std::memcpy(&out[i], &v, 8);
    i += 8;
  }
  for (; i < n; ++i) out[i] = static_cast<char>(rng() & 0xff);
  return out;
}

FederationConfig test_config(const Json& patch) {
  Json fed = harness::default_topology();
  fed.merge_patch(patch);
  for (auto& site : fed["sites"]) {
    site["subject_map"][kAlice] = "alice";
    site["subject_map"][kBob] = "bob";
    site["subject_map"][kCarol] = "carol";
  }
  return FederationConfig::from_json(fed);
}

LiveFederation::LiveFederation(const Json& patch, harness::Mode mode) {
  fed = std::make_unique<harness::Federation>(test_config(patch), mode, dir.path(), gvf_binary());
  fed->start();
}

LiveFederation::~LiveFederation() { fed->stop(); }

std::shared_ptr<wire::Channel> LiveFederation::site(const std::string& site_id) const {
  return fed->channel(fed->config().site(site_id).listen);
}

std::shared_ptr<wire::Channel> LiveFederation::gateway() const {
  return fed->channel(fed->config().gateway.value().listen);
}

std::string source_path(const std::string& relative) { return std::string(GVF_SOURCE_DIR) + "/" + relative; }

std::string gvf_binary() { return GVF_BINARY; }

}  // namespace gvf::test
