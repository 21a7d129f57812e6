#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "gvf/common/digest.hpp"
#include "gvf/sync/sync.hpp"
#include "assertions.hpp"
#include "support.hpp"

using namespace gvf;
using mcat::DataName;
using mcat::Replica;
using mcat::ReplicaState;
using test::code_of;

namespace {

const std::string kAuthority = "gateway:8443";
const std::string kSecret = "sync-test-secret";
const mcat::Subject kOwner(test::kAlice);

// Fails every rls.publish after the first `budget` of them.
class FlakyRls : public wire::Handler {
 public:
  explicit FlakyRls(std::shared_ptr<wire::Handler> inner) : inner_(std::move(inner)) {}
  wire::Message handle(const wire::Message& request) override {
    if (wire::op_of(request) == "rls.publish" && budget >= 0 && budget-- == 0) {
      budget = 0;
      return wire::err_reply(request, ErrorCode::unavail, "rls went away");
    }
    return inner_->handle(request);
  }
  int budget = -1;

 private:
  std::shared_ptr<wire::Handler> inner_;
};

struct Rig {
  explicit Rig(std::string state_dir = "") {
    TokenAuthority authority(kSecret, "/CN=gvf-service");
    flaky = std::make_shared<FlakyRls>(std::make_shared<rls::RlsService>(rls_catalog, authority, true));
    net->bind("rls:1", flaky);
    client.emplace(net->connector()("rls:1"), wire::Auth{"/CN=gvf-service", authority.token_for("/CN=gvf-service")});
    syncer.emplace(access, *client, sync::SyncOptions{kAuthority, std::move(state_dir), 4});
  }

  Replica replica(const std::string& vault, const std::string& digest) {
    return Replica{vault, digest, "site-" + vault, ReplicaState::online};
  }
  void put(const std::string& name, const std::string& content, const std::string& vault = "v1") {
    auto d = sha256_hex(content);
    auto n = DataName::parse(name);
    if (catalog->find(n)) {
      catalog->update_content(kOwner, n, content.size(), d, replica(vault, d));
    } else {
      catalog->register_entry(kOwner, "alice", n, content.size(), d, replica(vault, d));
    }
  }
  void replicate(const std::string& name, const std::string& vault) {
    auto n = DataName::parse(name);
    auto e = catalog->lookup(n);
    bool has = std::any_of(e.replicas.begin(), e.replicas.end(), [&](const Replica& r) { return r.vault_id == vault; });
    if (has) {
      catalog->set_replica_state(n, vault, ReplicaState::online);
    } else {
      catalog->add_replica(n, replica(vault, e.digest));
    }
  }

  // guid -> surls as the RLS holds them.
  std::map<std::string, std::set<std::string>> rls_image() const {
    std::map<std::string, std::set<std::string>> out;
    for (const auto& m : rls_catalog->list_all("", 1 << 20).mappings) out[m.guid.value()] = m.surls;
    return out;
  }

  std::shared_ptr<mcat::Catalog> catalog = std::make_shared<mcat::Catalog>();
  broker::LocalCatalogAccess access{catalog, std::make_shared<broker::NameLocks>()};
  std::shared_ptr<rls::RlsCatalog> rls_catalog = std::make_shared<rls::RlsCatalog>();
  std::shared_ptr<wire::Network> net = std::make_shared<wire::Network>();
  std::shared_ptr<FlakyRls> flaky;
  std::optional<rls::RlsClient> client;
  std::optional<sync::Syncer> syncer;
};

// Independent statement of what the RLS must hold for a catalog: one SURL
// per online replica, keyed by the GUID of the dataname.
std::map<std::string, std::set<std::string>> expected_image(const mcat::Catalog& c,
                                                           const std::map<std::string, std::string>& guids) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& e : c.list("/")) {
    for (const auto& r : e.replicas) {
      if (r.state != ReplicaState::online) continue;
      out[guids.at(e.dataname.value())].insert("srm://" + kAuthority + "/" + r.site_id + e.dataname.value());
    }
  }
  return out;
}

std::map<std::string, std::string> load_vectors() {
  std::map<std::string, std::string> v;
  std::ifstream in(test::source_path("tests/testdata/guid_vectors.txt"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    v[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return v;
}

}  // namespace

TEST(Guid, MatchesReferenceVectors) {
  auto vectors = load_vectors();
  ASSERT_GE(vectors.size(), 60u);
  for (const auto& [name, hex] : vectors) EXPECT_EQ(sync::derive_guid(name).value(), hex) << name;
}

TEST(Guid, RejectsNonDatanames) {
  EXPECT_EQ(code_of([] { sync::derive_guid("/tmp/x"); }), ErrorCode::badreq);
  EXPECT_EQ(code_of([] { sync::derive_guid(""); }), ErrorCode::badreq);
}

TEST(Surl, DerivedFromReplicaSite) {
  mcat::CatalogEntry e;
  e.dataname = DataName::parse("/home/alice/d/x.dat");
  auto s = sync::derive_surl(e, Replica{"v2", "ab", "s2", ReplicaState::online}, kAuthority);
  EXPECT_EQ(s.str(), "srm://gateway:8443/s2/home/alice/d/x.dat");
}

TEST(Syncer, PublishesOnlineReplicasOnly) {
  Rig r;
  r.put("/home/alice/a", "A");
  r.put("/home/alice/b", "B");
  r.replicate("/home/alice/a", "v2");
  r.catalog->set_replica_state(DataName::parse("/home/alice/a"), "v2", ReplicaState::dead);
  auto st = r.syncer->sync_once();
  EXPECT_EQ(st.stats.published, 2u);
  EXPECT_EQ(st.cursor, r.catalog->sequence());
  std::map<std::string, std::string> guids{{"/home/alice/a", sync::derive_guid("/home/alice/a").value()},
                                            {"/home/alice/b", sync::derive_guid("/home/alice/b").value()}};
  EXPECT_EQ(r.rls_image(), expected_image(*r.catalog, guids));
}

TEST(Syncer, RepeatedSyncMakesNoMutations) {
  Rig r;
  for (int i = 0; i < 10; ++i) r.put("/home/alice/f" + std::to_string(i), std::to_string(i));
  r.syncer->sync_once();
  auto before = r.rls_catalog->mutations();
  auto st = r.syncer->sync_once();
  EXPECT_EQ(r.rls_catalog->mutations(), before);
  EXPECT_EQ(st.stats.published + st.stats.unpublished, 0u);
  auto rescan = r.syncer->full_rescan();
  EXPECT_EQ(rescan.added + rescan.removed, 0u);
  EXPECT_EQ(rescan.agreed, 10u);
  EXPECT_EQ(r.rls_catalog->mutations(), before);
}

TEST(Syncer, RemovalAndOverwriteKeepGuid) {
  Rig r;
  r.put("/home/alice/a", "one");
  r.replicate("/home/alice/a", "v2");
  r.syncer->sync_once();
  auto guid = sync::derive_guid("/home/alice/a");
  EXPECT_EQ(r.rls_catalog->lookup_guid(guid).size(), 2u);
  // Overwrite at v1 leaves v2 dead until it is re-replicated.
  r.put("/home/alice/a", "two");
  auto st = r.syncer->sync_once();
  EXPECT_EQ(st.stats.unpublished, 1u);
  EXPECT_EQ(r.rls_catalog->lookup_guid(guid), std::set<std::string>{"srm://gateway:8443/site-v1/home/alice/a"});
  r.catalog->remove(kOwner, DataName::parse("/home/alice/a"));
  r.syncer->sync_once();
  EXPECT_EQ(code_of([&] { r.rls_catalog->lookup_guid(guid); }), ErrorCode::noent);
}

TEST(Syncer, FailedRunLeavesCursorAndConverges) {
  Rig r;
  for (int i = 0; i < 12; ++i) r.put("/home/alice/f" + std::to_string(i), std::to_string(i));
  r.flaky->budget = 5;
  EXPECT_EQ(code_of([&] { r.syncer->sync_once(); }), ErrorCode::unavail);
  EXPECT_EQ(r.syncer->load_state().cursor, 0u);
  EXPECT_EQ(r.rls_catalog->guid_count(), 5u);
  r.flaky->budget = -1;
  auto st = r.syncer->sync_once();
  EXPECT_EQ(st.stats.published, 7u);
  EXPECT_EQ(st.stats.skipped, 5u);
  EXPECT_EQ(r.rls_catalog->guid_count(), 12u);
}

TEST(Syncer, RescanRepairsDriftButLeavesOtherAuthorities) {
  Rig r;
  r.put("/home/alice/a", "A");
  r.put("/home/alice/b", "B");
  r.syncer->sync_once();
  auto ga = sync::derive_guid("/home/alice/a");
  auto gb = sync::derive_guid("/home/alice/b");
  auto stray = rls::Surl::parse("srm://gateway:8443/s9/home/alice/a");
  auto foreign = rls::Surl::parse("srm://elsewhere:9000/s1/home/alice/a");
  r.rls_catalog->publish(ga, stray);
  r.rls_catalog->publish(ga, foreign);
  r.rls_catalog->unpublish(gb, rls::Surl::parse("srm://gateway:8443/site-v1/home/alice/b"));
  auto rep = r.syncer->full_rescan();
  EXPECT_EQ(rep.added, 1u);
  EXPECT_EQ(rep.removed, 1u);
  EXPECT_EQ(rep.agreed, 1u);
  EXPECT_TRUE(r.rls_catalog->lookup_guid(ga).contains(foreign.str()));
  EXPECT_FALSE(r.rls_catalog->lookup_guid(ga).contains(stray.str()));
  rep = r.syncer->full_rescan();
  EXPECT_EQ(rep.added + rep.removed, 0u);
}

TEST(Syncer, StatePersistsAcrossInstances) {
  test::TempDir dir;
  Rig r(dir.path());
  r.put("/home/alice/a", "A");
  auto first = r.syncer->sync_once();
  sync::Syncer again(r.access, *r.client, sync::SyncOptions{kAuthority, dir.path(), 4});
  EXPECT_EQ(again.load_state().cursor, first.cursor);
  auto st = again.sync_once();
  EXPECT_EQ(st.stats.published + st.stats.skipped, 0u);
}

TEST(Syncer, LeaseRefusesLiveHolderAndStealsDeadOne) {
  test::TempDir dir;
  Rig r(dir.path());
  r.put("/home/alice/a", "A");
  const auto lease = dir.sub("sync.lease");
  std::ofstream(lease) << ::getppid() << "\n";
  EXPECT_EQ(code_of([&] { r.syncer->sync_once(); }), ErrorCode::badreq);
  // pid_max is far below this, so nobody holds it.
  std::ofstream(lease, std::ios::trunc) << 2147483600 << "\n";
  EXPECT_NO_THROW(r.syncer->sync_once());
  EXPECT_FALSE(std::filesystem::exists(lease));
}

TEST(Syncer, RandomHistoriesConverge) {
  std::mt19937_64 rng(2024);
  for (int h = 0; h < 20; ++h) {
    Rig r;
    std::map<std::string, std::string> guids;
    const std::vector<std::string> vaults{"v1", "v2", "v3"};
    for (int i = 0; i < 60; ++i) {
      std::string name = "/home/alice/h" + std::to_string(rng() % 12);
      guids[name] = sync::derive_guid(name).value();
      auto n = DataName::parse(name);
      auto existing = r.catalog->find(n);
      switch (rng() % 5) {
        case 0:
        case 1:
          r.put(name, std::to_string(rng() % 4), vaults[rng() % 3]);
          break;
        case 2:
          if (existing) r.replicate(name, vaults[rng() % 3]);
          break;
        case 3:
          if (existing && existing->replicas.size() > 1) {
            r.catalog->set_replica_state(n, existing->replicas.back().vault_id, ReplicaState::dead);
          }
          break;
        default:
          if (existing) r.catalog->remove(kOwner, n);
      }
      if (rng() % 7 == 0) r.syncer->sync_once();
    }
    r.syncer->sync_once();
    EXPECT_EQ(r.rls_image(), expected_image(*r.catalog, guids)) << "history " << h;
    auto before = r.rls_catalog->mutations();
    r.syncer->sync_once();
    auto rep = r.syncer->full_rescan();
    EXPECT_EQ(rep.added + rep.removed, 0u);
    EXPECT_EQ(r.rls_catalog->mutations(), before);
  }
}
