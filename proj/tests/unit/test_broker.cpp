#include <gtest/gtest.h>

#include <random>

#include "gvf/broker/broker.hpp"
#include "gvf/common/digest.hpp"
#include "gvf/harness/components.hpp"
#include "assertions.hpp"
#include "support.hpp"

using namespace gvf;
using namespace gvf::test;
using wire::Json;

namespace {

struct Fed : LiveFederation {
  using LiveFederation::LiveFederation;
  wire::Reply call(const std::string& site_id, const std::string& subject, const std::string& op, Json args,
                   std::optional<std::string> body = std::nullopt) {
    return wire::call(*site(site_id), op, std::move(args), auth(subject), std::move(body));
  }
  wire::Reply put(const std::string& site_id, const std::string& subject, const std::string& name,
                  const std::string& bytes) {
    return call(site_id, subject, "srb.put", {{"dataname", name}}, bytes);
  }
  wire::Reply get(const std::string& site_id, const std::string& subject, const std::string& name) {
    return call(site_id, subject, "srb.get", {{"dataname", name}});
  }
};

mcat::Replica rep(const std::string& vault, const std::string& site, bool online = true) {
  return mcat::Replica{vault, "b", site, online ? mcat::ReplicaState::online : mcat::ReplicaState::dead};
}

}  // namespace

TEST(ReplicaRanking, RequesterSiteThenMasterThenVaultId) {
  mcat::CatalogEntry e;
  e.replicas = {rep("v9", "s2"), rep("v5", "master"), rep("v3", "s1", false), rep("v4", "s1"), rep("v1", "s2")};
  auto order = [&](const std::string& site) {
    std::vector<std::string> out;
    for (const auto& r : broker::rank_replicas(e, site, "master")) out.push_back(r.vault_id);
    return out;
  };
  EXPECT_EQ(order("s1"), (std::vector<std::string>{"v4", "v5", "v1", "v9"}));
  EXPECT_EQ(order("s2"), (std::vector<std::string>{"v1", "v9", "v5", "v4"}));
  EXPECT_EQ(order("master"), (std::vector<std::string>{"v5", "v1", "v4", "v9"}));
  EXPECT_EQ(broker::replica_select(e, "s3", "master").vault_id, "v5");
  mcat::CatalogEntry dead;
  dead.replicas = {rep("v1", "s1", false)};
  EXPECT_EQ(code_of([&] { broker::replica_select(dead, "s1", "master"); }), ErrorCode::unavail);
}

TEST(LocalNames, DerivedFromLastCommonName) {
  EXPECT_EQ(broker::derive_local_name("/O=Grid/OU=desk/CN=alice"), "alice");
  EXPECT_EQ(broker::derive_local_name("/O=Grid/CN=Jane Doe"), "Jane_Doe");
  EXPECT_EQ(broker::derive_local_name("/CN=proxy/CN=bob"), "bob");
  EXPECT_EQ(broker::derive_local_name("noCN"), "noCN");
  auto odd = broker::derive_local_name("/CN=..");
  EXPECT_EQ(odd.rfind("user_", 0), 0u);
  EXPECT_EQ(odd.size(), 13u);
  EXPECT_EQ(broker::derive_local_name("/CN=.."), odd);
  EXPECT_NE(broker::derive_local_name("/CN="), odd);
}

TEST(Broker, PutAtOneSiteGetFromAnother) {
  Fed f;
  std::mt19937_64 rng(1);
  auto data = random_bytes(rng, 100000);
  auto r = f.put("s1", kAlice, "/home/alice/a", data);
  auto entry = r.result.at("entry").get<mcat::CatalogEntry>();
  EXPECT_EQ(entry.digest, sha256_hex(data));
  ASSERT_EQ(entry.replicas.size(), 1u);
  EXPECT_EQ(entry.replicas[0].vault_id, "v1");
  EXPECT_EQ(entry.acl.owner.value(), kAlice);
  for (auto site : {"master", "s1", "s2"}) {
    auto g = f.get(site, kAlice, "/home/alice/a");
    EXPECT_EQ(g.body, data);
    EXPECT_EQ(g.result.at("site_id"), "s1");
  }
}

TEST(Broker, IdentityAndOwnershipRules) {
  Fed f;
  EXPECT_EQ(code_of([&] { f.put("s1", kBob, "/home/alice/x", "x"); }), ErrorCode::perm);
  auto forged = wire::Auth{kAlice, f.auth(kBob).token};
  EXPECT_EQ(code_of([&] { wire::call(*f.site("s1"), "srb.ls", {}, forged); }), ErrorCode::perm);
  EXPECT_EQ(code_of([&] { wire::call(*f.site("s1"), "srb.ls", {}, std::nullopt); }), ErrorCode::perm);
  EXPECT_EQ(code_of([&] { f.call("s1", "/CN=stranger", "srb.ls", {}); }), ErrorCode::badreq);
  auto who = f.call("s2", kBob, "srb.auth", {}).result;
  EXPECT_EQ(who["local_user"], "bob");
  EXPECT_EQ(code_of([&] { f.call("s1", kAlice, "admin.mkuser", {{"subject", "/CN=z"}, {"local_user", "z"}}); }),
            ErrorCode::perm);
  wire::call(*f.site("s1"), "admin.mkuser", {{"subject", "/CN=zed"}, {"local_user", "zed"}}, f.fed->service());
  EXPECT_EQ(f.call("s1", "/CN=zed", "srb.auth", {}).result["local_user"], "zed");
  EXPECT_NO_THROW(f.put("s1", "/CN=zed", "/home/zed/f", "z"));
}

TEST(Broker, AutoMapGivesDerivedNames) {
  Fed f(Json{{"sites", Json::array({{{"site_id", "master"}, {"role", "master"}, {"listen", "master:7001"},
                                      {"local_vaults", {"v0"}}, {"auto_map", true}},
                                     {{"site_id", "s1"}, {"role", "server"}, {"listen", "s1:7001"}, {"local_vaults", {"v1"}}},
                                     {{"site_id", "s2"}, {"role", "server"}, {"listen", "s2:7001"}, {"local_vaults", {"v2"}}}})}});
  auto who = f.call("master", "/O=Grid/CN=new user", "srb.auth", {}).result;
  EXPECT_EQ(who["local_user"], "new_user");
  EXPECT_NO_THROW(f.put("master", "/O=Grid/CN=new user", "/home/new_user/f", "hi"));
  EXPECT_EQ(code_of([&] { f.call("s1", "/O=Grid/CN=new user", "srb.auth", {}); }), ErrorCode::badreq);
}

TEST(Broker, AclGovernsGetOverwriteAndRemove) {
  Fed f;
  f.put("s1", kAlice, "/home/alice/f", "one");
  EXPECT_EQ(code_of([&] { f.get("s2", kBob, "/home/alice/f"); }), ErrorCode::perm);
  EXPECT_EQ(code_of([&] { f.put("s2", kBob, "/home/alice/f", "two"); }), ErrorCode::perm);
  EXPECT_EQ(code_of([&] { f.call("s2", kBob, "srb.set_acl", {{"dataname", "/home/alice/f"}, {"grants", {{kBob, "rwd"}}}}); }),
            ErrorCode::perm);
  f.call("s1", kAlice, "srb.set_acl", {{"dataname", "/home/alice/f"}, {"grants", {{kBob, "rw"}}}});
  EXPECT_EQ(f.get("s2", kBob, "/home/alice/f").body, "one");
  f.put("s2", kBob, "/home/alice/f", "two");
  EXPECT_EQ(f.get("s1", kAlice, "/home/alice/f").body, "two");
  EXPECT_EQ(code_of([&] { f.call("s2", kBob, "srb.rm", {{"dataname", "/home/alice/f"}}); }), ErrorCode::perm);
  auto ls = f.call("s2", kBob, "srb.ls", {{"prefix", "/home/alice"}}).result["entries"];
  ASSERT_EQ(ls.size(), 1u);
  EXPECT_TRUE(ls[0]["readable"].get<bool>());
  EXPECT_TRUE(ls[0]["writable"].get<bool>());
  EXPECT_FALSE(ls[0]["deletable"].get<bool>());
  EXPECT_EQ(f.call("s2", kBob, "srb.check", {{"dataname", "/home/alice/f"}, {"mode", "delete"}}).result["allow"], false);
  f.call("s1", kAlice, "srb.rm", {{"dataname", "/home/alice/f"}});
  EXPECT_EQ(code_of([&] { f.get("s1", kAlice, "/home/alice/f"); }), ErrorCode::noent);
}

TEST(Broker, OverwriteDeletesTheUnreferencedOldBlob) {
  Fed f;
  f.put("s1", kAlice, "/home/alice/f", "old");
  f.put("s1", kAlice, "/home/alice/g", "old");
  f.put("s1", kAlice, "/home/alice/f", "new");
  vault::VaultClient v1(f.fed->channel("s1:7101"), f.fed->service());
  // Still referenced by /home/alice/g.
  EXPECT_EQ(v1.read(sha256_hex("old")), "old");
  f.put("s1", kAlice, "/home/alice/g", "newer");
  EXPECT_EQ(code_of([&] { v1.read(sha256_hex("old")); }), ErrorCode::noent);
  EXPECT_EQ(v1.usage().blobs, 2u);
}

TEST(Broker, ReplicaSurvivesSourceVaultLoss) {
  Fed f;
  f.put("s1", kAlice, "/home/alice/f", "payload");
  auto e = f.call("s1", kAlice, "srb.replicate", {{"dataname", "/home/alice/f"}, {"target_vault", "v2"}})
               .result.at("entry")
               .get<mcat::CatalogEntry>();
  EXPECT_EQ(e.replicas.size(), 2u);
  EXPECT_EQ(code_of([&] { f.call("s1", kAlice, "srb.replicate", {{"dataname", "/home/alice/f"}, {"target_vault", "v2"}}); }),
            ErrorCode::exists);
  f.fed->kill("vault:v1");
  auto g = f.get("s1", kAlice, "/home/alice/f");
  EXPECT_EQ(g.body, "payload");
  EXPECT_EQ(g.result["vault_id"], "v2");
  f.fed->kill("vault:v2");
  EXPECT_EQ(code_of([&] { f.get("s1", kAlice, "/home/alice/f"); }), ErrorCode::unavail);
  f.fed->restart("vault:v1");
  f.fed->restart("vault:v2");
  EXPECT_EQ(f.get("s2", kAlice, "/home/alice/f").result["vault_id"], "v2");
}

TEST(Broker, RemoveWithVaultDownRecordsOrphan) {
  Fed f;
  f.put("s1", kAlice, "/home/alice/f", "soon orphaned");
  f.fed->kill("vault:v1");
  f.call("s1", kAlice, "srb.rm", {{"dataname", "/home/alice/f"}});
  EXPECT_EQ(code_of([&] { f.get("s1", kAlice, "/home/alice/f"); }), ErrorCode::noent);
  auto orphans = f.call("s1", kAlice, "srb.orphans", {}).result["orphans"];
  ASSERT_EQ(orphans.size(), 1u);
  EXPECT_EQ(orphans[0]["vault_id"], "v1");
  EXPECT_EQ(orphans[0]["blob_id"], sha256_hex("soon orphaned"));
  EXPECT_EQ(orphans[0]["dataname"], "/home/alice/f");
  // The orphan log outlives a broker restart.
  f.fed->restart("site:s1");
  EXPECT_EQ(f.call("s1", kAlice, "srb.orphans", {}).result["orphans"].size(), 1u);
}

TEST(Broker, PutWithMasterDownFailsCleanly) {
  Fed f;
  f.fed->kill("site:master");
  EXPECT_EQ(code_of([&] { f.put("s1", kAlice, "/home/alice/f", "limbo"); }), ErrorCode::unavail);
  vault::VaultClient v1(f.fed->channel("s1:7101"), f.fed->service());
  EXPECT_EQ(v1.usage().blobs, 0u);
  f.fed->restart("site:master");
  EXPECT_NO_THROW(f.put("s1", kAlice, "/home/alice/f", "limbo"));
}

namespace {

// Sits in front of the master. When armed, mcat.register either never reaches
// the catalog or reaches it and loses the reply.
class FlakyMaster : public wire::Handler {
 public:
  explicit FlakyMaster(std::shared_ptr<wire::Handler> inner) : inner_(std::move(inner)) {}
  // 1: register is lost, 2: register lands but the reply is lost, 3: partitioned.
  wire::Message handle(const wire::Message& request) override {
    if (mode == 3) return wire::err_reply(request, ErrorCode::unavail, "unreachable");
    if (wire::op_of(request) == "mcat.register" && mode != 0) {
      if (mode == 2) inner_->handle(request);
      return wire::err_reply(request, ErrorCode::unavail, "connection reset");
    }
    return inner_->handle(request);
  }
  std::atomic<int> mode{0};

 private:
  std::shared_ptr<wire::Handler> inner_;
};

struct ManualFederation {
  ManualFederation() : cfg(test_config()) {
    for (auto& v : cfg.vaults) v.root_dir = dir.sub("vault-" + v.vault_id);
    for (auto& s : cfg.sites) {
      s.data_dir = dir.sub("site-" + s.site_id);
      s.mcat_dir = s.data_dir + "/mcat";
    }
    for (const auto& v : cfg.vaults) {
      auto n = harness::make_vault_node(cfg, v.vault_id);
      net->bind(n.addr, n.handler);
    }
    auto master = harness::make_site_node(cfg, "master", net->connector());
    flaky = std::make_shared<FlakyMaster>(master.handler);
    net->bind(master.addr, flaky);
    rebuild_s1();
  }
  void rebuild_s1() {
    auto n = harness::make_site_node(cfg, "s1", net->connector());
    net->bind(n.addr, n.handler);
  }
  wire::Reply call(const std::string& op, Json args, std::optional<std::string> body = std::nullopt) {
    return wire::call(*net->connector()("s1:7001"), op, std::move(args), harness::auth_for(cfg, kAlice),
                      std::move(body));
  }
  TempDir dir;
  FederationConfig cfg;
  std::shared_ptr<wire::Network> net = std::make_shared<wire::Network>();
  std::shared_ptr<FlakyMaster> flaky;
};

}  // namespace

TEST(Broker, UnregisteredBlobIsRemovedByReconcile) {
  ManualFederation m;
  m.flaky->mode = 1;
  EXPECT_EQ(code_of([&] { m.call("srb.put", {{"dataname", "/home/alice/f"}}, "limbo"); }), ErrorCode::unavail);
  vault::VaultClient v1(m.net->connector()("s1:7101"), harness::service_auth(m.cfg));
  EXPECT_EQ(v1.usage().blobs, 1u);
  m.flaky->mode = 3;
  EXPECT_EQ(m.call("srb.reconcile", {}).result["pending"], 1);
  // The pending record is durable across a broker restart.
  m.rebuild_s1();
  m.flaky->mode = 0;
  EXPECT_EQ(m.call("srb.reconcile", {}).result["pending"], 0);
  EXPECT_EQ(v1.usage().blobs, 0u);
  EXPECT_EQ(code_of([&] { m.call("srb.get", {{"dataname", "/home/alice/f"}}); }), ErrorCode::noent);
}

TEST(Broker, RegisteredBlobSurvivesReconcile) {
  ManualFederation m;
  m.flaky->mode = 2;
  EXPECT_EQ(code_of([&] { m.call("srb.put", {{"dataname", "/home/alice/f"}}, "landed"); }), ErrorCode::unavail);
  m.flaky->mode = 0;
  EXPECT_EQ(m.call("srb.reconcile", {}).result["pending"], 0);
  EXPECT_EQ(m.call("srb.get", {{"dataname", "/home/alice/f"}}).body, "landed");
}

TEST(Broker, FullVaultIsNoSpace) {
  Fed f(Json{{"vaults", Json::array({{{"vault_id", "v0"}, {"site_id", "master"}, {"capacity", 100}, {"listen", "master:7101"}},
                                     {{"vault_id", "v1"}, {"site_id", "s1"}, {"capacity", 100}, {"listen", "s1:7101"}},
                                     {{"vault_id", "v2"}, {"site_id", "s2"}, {"capacity", 100}, {"listen", "s2:7101"}}})}});
  f.put("s1", kAlice, "/home/alice/a", std::string(80, 'a'));
  EXPECT_EQ(code_of([&] { f.put("s1", kAlice, "/home/alice/b", std::string(30, 'b')); }), ErrorCode::nospace);
  EXPECT_EQ(code_of([&] { f.get("s1", kAlice, "/home/alice/b"); }), ErrorCode::noent);
}

TEST(Broker, CatalogOpsAreForBrokersOnly) {
  Fed f;
  EXPECT_EQ(code_of([&] { f.call("master", kAlice, "mcat.list", {}); }), ErrorCode::perm);
  EXPECT_EQ(code_of([&] { wire::call(*f.site("s1"), "mcat.list", {}, f.fed->service()); }), ErrorCode::badreq);
  EXPECT_NO_THROW(wire::call(*f.site("master"), "mcat.list", {}, f.fed->service()));
}

TEST(Broker, ConcurrentPutsToOneNameSerialize) {
  Fed f;
  std::vector<std::thread> ts;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i) {
    ts.emplace_back([&, i] {
      try {
        f.put(i % 2 ? "s1" : "s2", kAlice, "/home/alice/race", "v" + std::to_string(i));
        ok++;
      } catch (const Error&) {
      }
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(ok.load(), 8);
  auto g = f.get("master", kAlice, "/home/alice/race");
  auto entry = g.result.at("entry").get<mcat::CatalogEntry>();
  EXPECT_EQ(sha256_hex(*g.body), entry.digest);
}
