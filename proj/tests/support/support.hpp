#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>

#include "gvf/common/error.hpp"
#include "gvf/harness/federation.hpp"
#include "gvf/harness/scenario.hpp"

namespace gvf::test {

// Fresh directory under $TMPDIR, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::string& path() const { return path_; }
  std::string sub(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

std::string random_bytes(std::mt19937_64& rng, std::size_t n);

inline const std::string kAlice = "/O=Grid/OU=desk/CN=alice";
inline const std::string kBob = "/O=Grid/OU=desk/CN=bob";
inline const std::string kCarol = "/O=Grid/OU=desk/CN=carol";

// Bundled default topology plus a merge patch, with alice/bob/carol mapped on
// every site.
FederationConfig test_config(const Json& patch = Json::object());

// In-process federation in its own temp dir.
struct LiveFederation {
  explicit LiveFederation(const Json& patch = Json::object(), harness::Mode mode = harness::Mode::inproc);
  ~LiveFederation();

  TempDir dir;
  std::unique_ptr<harness::Federation> fed;

  std::shared_ptr<wire::Channel> site(const std::string& site_id) const;
  std::shared_ptr<wire::Channel> gateway() const;
  wire::Auth auth(const std::string& subject) const { return fed->auth(subject); }
};

std::string source_path(const std::string& relative);
std::string gvf_binary();

}  // namespace gvf::test
