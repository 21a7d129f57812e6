#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "assertions.hpp"
#include "gvf/common/digest.hpp"
#include "gvf/srm/gateway.hpp"
#include "support.hpp"

using namespace gvf;
using namespace gvf::srm;
using namespace gvf::test;
using wire::Json;

namespace {

const std::vector<std::string> kHttp{kProtoCacheHttp};
const std::vector<std::string> kStream{kProtoVaultStream};

struct Gw : LiveFederation {
  explicit Gw(const std::string& driver = "staged")
      : LiveFederation(Json{{"gateway", {{"driver", driver}, {"turl_lifetime", 50}}}}) {}

  mcat::CatalogEntry put(const std::string& subject, const std::string& name, const std::string& bytes,
                         const std::string& site_id = "s1") {
    return wire::call(*site(site_id), "srb.put", {{"dataname", name}}, auth(subject), bytes)
        .result.at("entry")
        .get<mcat::CatalogEntry>();
  }
  void grant(const std::string& name, const Json& grants) {
    wire::call(*site("s1"), "srb.set_acl", {{"dataname", name}, {"grants", grants}}, auth(kAlice));
  }
  Gateway& gw() { return *fed->inproc_gateway(); }
  static std::string surl(const std::string& name, const std::string& site = "s1") {
    return "srm://gateway:8443/" + site + name;
  }
  static std::string token_of(const TransferRequest& r) { return r.turl.substr(r.turl.rfind('/') + 1); }
  std::string get_bytes(const std::string& subject, const std::string& name) {
    auto r = gw().srm_get(subject, surl(name), kHttp);
    if (r.state != RequestState::ready) throw Error(*r.error, r.message);
    return gw().fetch(token_of(r));
  }
};

}  // namespace

TEST(RequestState, OnlyForwardSingleStepsOrFailure) {
  using S = RequestState;
  const S all[] = {S::queued, S::staging, S::ready, S::active, S::done, S::failed};
  for (auto from : all) {
    for (auto to : all) {
      bool want = from != S::done && from != S::failed &&
                  (to == S::failed || static_cast<int>(to) == static_cast<int>(from) + 1);
      EXPECT_EQ(legal_transition(from, to), want) << to_string(from) << "->" << to_string(to);
    }
  }
  EXPECT_EQ(parse_request_state("ready"), S::ready);
  EXPECT_EQ(code_of([] { parse_request_state("paused"); }), ErrorCode::badreq);
}

TEST(TransferRequest, JsonRoundTrip) {
  TransferRequest r;
  r.request_id = "req-7";
  r.kind = RequestKind::put;
  r.subject = kAlice;
  r.surl = "srm://gateway:8443/s1/home/alice/x";
  r.protocols = kHttp;
  r.state = RequestState::failed;
  r.error = ErrorCode::nospace;
  r.message = "full";
  r.size_hint = 9;
  r.history = {RequestState::queued, RequestState::staging, RequestState::failed};
  auto back = transfer_request_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
}

TEST(Gateway, StagedGetWalksTheStateMachine) {
  Gw g;
  g.put(kAlice, "/home/alice/a", "hello world");
  auto r = g.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), kHttp);
  ASSERT_EQ(r.state, RequestState::ready);
  EXPECT_EQ(r.turl.rfind("cache://gateway:8080/", 0), 0u);
  EXPECT_EQ(r.size, 11u);
  EXPECT_EQ(g.gw().fetch(Gw::token_of(r)), "hello world");
  auto done = g.gw().srm_status(r.request_id);
  EXPECT_EQ(done.state, RequestState::done);
  EXPECT_EQ(done.history, (std::vector<RequestState>{RequestState::queued, RequestState::staging, RequestState::ready,
                                                     RequestState::active, RequestState::done}));
  auto m = g.gw().metrics();
  EXPECT_EQ(m.staging_copies, 1u);
  EXPECT_EQ(m.bytes_copied, 11u);
  EXPECT_EQ(m.bytes_delivered, 11u);
  EXPECT_EQ(m.site_bytes.at("s1"), 11u);
  EXPECT_EQ(m.requests_by_outcome.at("done"), 1u);
}

TEST(Gateway, RepeatGetsHitTheCacheUntilContentChanges) {
  Gw g;
  g.put(kAlice, "/home/alice/a", "one");
  EXPECT_EQ(g.get_bytes(kAlice, "/home/alice/a"), "one");
  EXPECT_EQ(g.get_bytes(kAlice, "/home/alice/a"), "one");
  EXPECT_EQ(g.gw().metrics().staging_copies, 1u);
  EXPECT_EQ(g.gw().metrics().cache_hits, 1u);
  g.put(kAlice, "/home/alice/a", "two!");
  EXPECT_EQ(g.get_bytes(kAlice, "/home/alice/a"), "two!");
  EXPECT_EQ(g.gw().metrics().staging_copies, 2u);
}

TEST(Gateway, TurlTokensAreDeterministicPerRequest) {
  Gw a;
  Gw b;
  a.put(kAlice, "/home/alice/a", "x");
  b.put(kAlice, "/home/alice/a", "x");
  auto ra = a.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), kHttp);
  auto rb = b.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), kHttp);
  EXPECT_EQ(ra.turl, rb.turl);
  auto rc = a.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), kHttp);
  EXPECT_NE(ra.turl, rc.turl);
}

TEST(Gateway, TokenMisuse) {
  Gw g;
  g.put(kAlice, "/home/alice/a", "x");
  EXPECT_EQ(code_of([&] { g.gw().fetch("0123456789abcdef0123456789abcdef"); }), ErrorCode::noent);
  auto r = g.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), kHttp);
  g.gw().fetch(Gw::token_of(r));
  EXPECT_EQ(code_of([&] { g.gw().fetch(Gw::token_of(r)); }), ErrorCode::badreq);
  auto late = g.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), kHttp);
  g.gw().clock().advance(50);
  EXPECT_EQ(code_of([&] { g.gw().fetch(Gw::token_of(late)); }), ErrorCode::perm);
}

TEST(Gateway, ExpiredUnclaimedTransferReleasesItsEntry) {
  Gw g;
  g.put(kAlice, "/home/alice/a", "x");
  auto r = g.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), kHttp);
  const std::string key = "/home/alice/a@" + sha256_hex("x");
  ASSERT_TRUE(g.gw().cache().contains(key));
  // Busy entries cannot be evicted.
  EXPECT_EQ(code_of([&] { g.gw().cache().make_room(g.gw().cache().stats().capacity); }), ErrorCode::nospace);
  g.gw().clock().advance(51);
  g.gw().srm_reserve(kAlice, 1, 1);  // any request sweeps
  EXPECT_NO_THROW(g.gw().cache().make_room(g.gw().cache().stats().capacity - 1));
  EXPECT_FALSE(g.gw().cache().contains(key));
  EXPECT_EQ(g.gw().srm_status(r.request_id).state, RequestState::ready);
}

TEST(Gateway, DeniedAndMissingEndAsFailedRequests) {
  Gw g;
  g.put(kAlice, "/home/alice/a", "secret");
  auto denied = g.gw().srm_get(kBob, Gw::surl("/home/alice/a"), kHttp);
  EXPECT_EQ(denied.state, RequestState::failed);
  EXPECT_EQ(denied.error, ErrorCode::perm);
  EXPECT_TRUE(denied.turl.empty());
  auto missing = g.gw().srm_get(kAlice, Gw::surl("/home/alice/none"), kHttp);
  EXPECT_EQ(missing.error, ErrorCode::noent);
  auto m = g.gw().metrics();
  EXPECT_EQ(m.requests_by_outcome.at("E_PERM"), 1u);
  EXPECT_EQ(m.requests_by_outcome.at("E_NOENT"), 1u);
  EXPECT_EQ(m.staging_copies, 0u);
  g.grant("/home/alice/a", {{kBob, "r"}});
  EXPECT_EQ(g.get_bytes(kBob, "/home/alice/a"), "secret");
}

TEST(Gateway, RequestLevelProblemsThrow) {
  Gw g;
  EXPECT_EQ(code_of([&] { g.gw().srm_get(kAlice, "srm://gateway/s1/home/alice/a", kHttp); }), ErrorCode::badreq);
  EXPECT_EQ(code_of([&] { g.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), {}); }), ErrorCode::badreq);
  EXPECT_EQ(code_of([&] { g.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), {"gridftp"}); }), ErrorCode::badreq);
  EXPECT_EQ(code_of([&] { g.gw().srm_put(kAlice, Gw::surl("/home/alice/a"), kStream, 1); }), ErrorCode::badreq);
  EXPECT_EQ(code_of([&] { g.gw().srm_status("req-404"); }), ErrorCode::noent);
}

TEST(Gateway, StagedDriverStagesEvenForVaultStream) {
  Gw g("staged");
  g.put(kAlice, "/home/alice/a", "abc");
  auto r = g.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), {kProtoVaultStream, kProtoCacheHttp});
  EXPECT_EQ(r.turl.rfind("cache://", 0), 0u);
  EXPECT_EQ(g.gw().metrics().staging_copies, 1u);
}

TEST(Gateway, DirectDriverHandsOutVaultLocations) {
  Gw g("direct");
  g.put(kAlice, "/home/alice/a", "abc");
  auto r = g.gw().srm_get(kAlice, Gw::surl("/home/alice/a"), {kProtoVaultStream, kProtoCacheHttp});
  ASSERT_EQ(r.state, RequestState::ready);
  ASSERT_EQ(r.turl.rfind("vault://", 0), 0u);
  auto rest = r.turl.substr(8);
  auto slash = rest.find('/');
  auto bytes = wire::call(*g.fed->channel(rest.substr(0, slash)), "blob.read", {{"blob_id", rest.substr(slash + 1)}},
                          g.fed->service())
                   .body;
  EXPECT_EQ(bytes, "abc");
  EXPECT_EQ(code_of([&] { g.gw().finish_direct(kBob, r.request_id); }), ErrorCode::perm);
  auto done = g.gw().finish_direct(kAlice, r.request_id);
  EXPECT_EQ(done.state, RequestState::done);
  EXPECT_EQ(code_of([&] { g.gw().finish_direct(kAlice, r.request_id); }), ErrorCode::badreq);
  auto m = g.gw().metrics();
  EXPECT_EQ(m.staging_copies, 0u);
  EXPECT_EQ(m.bytes_delivered, 3u);
  // Without vault-stream the direct driver still stages.
  EXPECT_EQ(g.get_bytes(kAlice, "/home/alice/a"), "abc");
  EXPECT_EQ(g.gw().metrics().staging_copies, 1u);
}

TEST(Gateway, ConcurrentColdGetsShareOneCopy) {
  Gw g;
  std::mt19937_64 rng(5);
  const std::string content = random_bytes(rng, 300000);
  g.put(kAlice, "/home/alice/big", content);
  std::vector<std::thread> ts;
  std::atomic<int> good{0};
  for (int i = 0; i < 8; ++i) {
    ts.emplace_back([&] {
      if (g.get_bytes(kAlice, "/home/alice/big") == content) ++good;
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(good.load(), 8);
  auto m = g.gw().metrics();
  EXPECT_EQ(m.staging_copies, 1u);
  EXPECT_EQ(m.cache_hits, 7u);
}

TEST(Gateway, DeliveredBytesAreConservedAcrossSites) {
  Gw g("direct");
  std::mt19937_64 rng(8);
  std::uint64_t expected = 0;
  for (int i = 0; i < 6; ++i) {
    const std::string name = "/home/alice/f" + std::to_string(i);
    g.put(kAlice, name, random_bytes(rng, 1000 + i * 100), i % 2 ? "s2" : "master");
  }
  for (int i = 0; i < 30; ++i) {
    const std::string name = "/home/alice/f" + std::to_string(rng() % 6);
    if (rng() % 2) {
      expected += g.get_bytes(kAlice, name).size();
    } else {
      auto r = g.gw().srm_get(kAlice, Gw::surl(name), kStream);
      g.gw().finish_direct(kAlice, r.request_id);
      expected += r.size;
    }
  }
  auto m = g.gw().metrics();
  std::uint64_t sum = 0;
  for (const auto& [_, b] : m.site_bytes) sum += b;
  EXPECT_EQ(m.bytes_delivered, expected);
  EXPECT_EQ(sum, expected);
  EXPECT_TRUE(m.site_bytes.contains("master"));
  EXPECT_TRUE(m.site_bytes.contains("s2"));
  EXPECT_EQ(gateway_metrics_from_json(to_json(m)).site_bytes, m.site_bytes);
}

TEST(Gateway, PutThroughTheCache) {
  Gw g;
  auto r = g.gw().srm_put(kAlice, Gw::surl("/home/alice/up"), kHttp, 5);
  ASSERT_EQ(r.state, RequestState::ready);
  auto done = g.gw().upload(Gw::token_of(r), "12345");
  EXPECT_EQ(done.state, RequestState::done);
  EXPECT_EQ(g.get_bytes(kAlice, "/home/alice/up"), "12345");
  EXPECT_EQ(g.gw().cache().stats().entries, 1u);  // only the later get's copy
  auto denied = g.gw().srm_put(kBob, Gw::surl("/home/alice/up2"), kHttp, 5);
  auto failed = g.gw().upload(Gw::token_of(denied), "x");
  EXPECT_EQ(failed.state, RequestState::failed);
  EXPECT_EQ(failed.error, ErrorCode::perm);
}

TEST(Gateway, PutsDrawOnReservations) {
  Gw g;
  auto res = g.gw().srm_reserve(kAlice, 100, 20);
  auto r = g.gw().srm_put(kAlice, Gw::surl("/home/alice/a"), kHttp, 60, res.token);
  ASSERT_EQ(r.state, RequestState::ready);
  g.gw().upload(Gw::token_of(r), std::string(60, 'a'));
  EXPECT_EQ(g.gw().cache().reservation(res.token)->used_bytes, 60u);
  auto small = g.gw().srm_put(kAlice, Gw::surl("/home/alice/b"), kHttp, 41, res.token);
  EXPECT_EQ(small.error, ErrorCode::nospace);
  auto foreign = g.gw().srm_put(kBob, Gw::surl("/home/bob/b"), kHttp, 1, res.token);
  EXPECT_EQ(foreign.error, ErrorCode::perm);
  auto gone = g.gw().srm_put(kAlice, Gw::surl("/home/alice/c"), kHttp, 1, "res-999");
  EXPECT_EQ(gone.error, ErrorCode::noent);
  EXPECT_EQ(code_of([&] { g.gw().srm_release(kBob, res.token); }), ErrorCode::perm);
  g.gw().srm_release(kAlice, res.token);
}

TEST(Gateway, PinsStageAndProtect) {
  Gw g;
  g.put(kAlice, "/home/alice/a", "pinned");
  auto p = g.gw().srm_pin(kAlice, Gw::surl("/home/alice/a"), 10);
  EXPECT_EQ(p.key, "/home/alice/a@" + sha256_hex("pinned"));
  EXPECT_TRUE(g.gw().cache().pinned(p.key));
  EXPECT_EQ(code_of([&] { g.gw().cache().make_room(g.gw().cache().stats().capacity); }), ErrorCode::nospace);
  EXPECT_EQ(code_of([&] { g.gw().srm_pin(kBob, Gw::surl("/home/alice/a"), 10); }), ErrorCode::perm);
  EXPECT_EQ(code_of([&] { g.gw().srm_unpin(kBob, p.token); }), ErrorCode::perm);
  g.gw().srm_unpin(kAlice, p.token);
  EXPECT_FALSE(g.gw().cache().pinned(p.key));
  // The pin's staging copy serves the next get.
  EXPECT_EQ(g.get_bytes(kAlice, "/home/alice/a"), "pinned");
  EXPECT_EQ(g.gw().metrics().staging_copies, 1u);
}

TEST(Gateway, ListingAcceptsSurlPrefixes) {
  Gw g;
  g.put(kAlice, "/home/alice/d/a", "1");
  g.put(kAlice, "/home/alice/d/b", "2");
  g.put(kAlice, "/home/alice/e", "3");
  EXPECT_EQ(g.gw().srm_ls(kAlice, "srm://gateway:8443/s1/home/alice/d/").size(), 2u);
  EXPECT_EQ(g.gw().srm_ls(kAlice, "/home/alice/").size(), 3u);
  auto as_bob = g.gw().srm_ls(kBob, "/home/alice/");
  ASSERT_EQ(as_bob.size(), 3u);
  EXPECT_FALSE(as_bob[0].readable);
}

TEST(GatewayService, WireOpsNeedSubjectsButTransfersNeedTokens) {
  Gw g;
  g.put(kAlice, "/home/alice/a", "wire");
  auto ch = g.gateway();
  EXPECT_EQ(code_of([&] { wire::call(*ch, "srm.get", {{"surl", Gw::surl("/home/alice/a")}}, std::nullopt); }),
            ErrorCode::perm);
  auto r = wire::call(*ch, "srm.get", {{"surl", Gw::surl("/home/alice/a")}}, g.auth(kAlice)).result.at("request");
  EXPECT_EQ(r.at("state"), "ready");
  std::string turl = r.at("turl");
  auto body = wire::call(*ch, "srm.fetch", {{"token", turl.substr(turl.rfind('/') + 1)}}, std::nullopt).body;
  EXPECT_EQ(body, "wire");
  auto st = wire::call(*ch, "srm.status", {{"request_id", r.at("request_id")}}, g.auth(kAlice)).result;
  EXPECT_EQ(st.at("request").at("state"), "done");
  auto m = wire::call(*ch, "srm.metrics", {}, std::nullopt).result;
  EXPECT_EQ(m.at("bytes_delivered"), 4);
  EXPECT_EQ(wire::call(*ch, "clock.advance", {{"ticks", 3}}, g.auth(kAlice)).result.at("now"), 3);
}
