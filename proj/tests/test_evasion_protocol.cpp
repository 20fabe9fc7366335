#include "swarm_evade/evasion_protocol.hpp"

#include <doctest.h>

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <tuple>
#include <vector>

using namespace swarm_evade;

namespace {

ProtocolConfig config(const AgentId& self) {
  ProtocolConfig c;
  c.self = self;
  c.roster = std::make_shared<std::set<AgentId>>(std::set<AgentId>{"a", "b", "c", "d"});
  return c;
}

std::vector<Observation> interfererAt(double d) {
  return {{Vec3(d, 0, 0), Vec3::Zero(), ObservationKind::Interferer, "x"}};
}

const std::vector<Observation> kNone;

}  // namespace

TEST_CASE("alert wire format round trip") {
  const AlertMessage m{"uav07", 12.345678901234567, true};
  const auto bytes = encodeAlert(m);
  CHECK(bytes.size() == 41);
  CHECK(decodeAlert(bytes) == m);
  // little-endian timestamp right after the padded id
  const AlertMessage one{"x", 1.0, false};
  const auto b1 = encodeAlert(one);
  CHECK(b1[32 + 7] == 0x3f);
  CHECK(b1[32 + 6] == 0xf0);
  CHECK(b1[40] == 0);

  CHECK_THROWS_AS(encodeAlert({std::string(33, 'a'), 0.0, true}), std::invalid_argument);
  CHECK_THROWS_AS(encodeAlert({"", 0.0, true}), std::invalid_argument);
  auto bad = bytes;
  bad[40] = 2;
  CHECK_THROWS_AS(decodeAlert(bad), std::invalid_argument);
  std::vector<std::uint8_t> shortRecord(40, 0);
  CHECK_THROWS_AS(decodeAlert(shortRecord), std::invalid_argument);
  CHECK(decodeAlert(encodeAlert({std::string(32, 'z'), 0.5, false})).originId == std::string(32, 'z'));
}

TEST_CASE("alert log line round trip") {
  const AlertMessage m{"uav03", 0.1 + 0.2, true};
  const std::string line = toLogLine(m);
  CHECK(line.rfind("t=", 0) == 0);
  CHECK(line.find(" origin=uav03 present=1") != std::string::npos);
  CHECK(parseLogLine(line) == m);
  CHECK(parseLogLine("t=5 origin=b present=0") == AlertMessage{"b", 5.0, false});
  CHECK_THROWS_AS(parseLogLine("t=5 origin=b present=2"), std::invalid_argument);
  CHECK_THROWS_AS(parseLogLine("time=5 origin=b present=1"), std::invalid_argument);
  CHECK_THROWS_AS(parseLogLine("t=5x origin=b present=1"), std::invalid_argument);
}

TEST_CASE("sensor update examples") {
  EvasionProtocol p(config("a"));
  auto msgs = p.onSensorUpdate(interfererAt(8.0 - 0.1), 1.0);
  CHECK(p.mode() == Mode::Active);
  REQUIRE(msgs.size() == 1);
  CHECK(msgs[0] == AlertMessage{"a", 1.0, true});

  msgs = p.onSensorUpdate(interfererAt((8.0 + 11.0) / 2), 1.1);
  CHECK(p.mode() == Mode::Active);
  CHECK(msgs.empty());

  // Exactly d_E1 does not trigger from Normal.
  EvasionProtocol q(config("b"));
  CHECK(q.onSensorUpdate(interfererAt(8.0), 0.0).empty());
  CHECK(q.mode() == Mode::Normal);
  // Beyond d_E2 releases.
  (void)q.onSensorUpdate(interfererAt(7.0), 0.1);
  msgs = q.onSensorUpdate(interfererAt(11.5), 0.2);
  CHECK(q.mode() == Mode::Normal);
  REQUIRE(msgs.size() == 1);
  CHECK(msgs[0] == AlertMessage{"b", 0.2, false});
}

TEST_CASE("active agent with stored origins drops to passive on loss") {
  EvasionProtocol p(config("a"));
  (void)p.onMessage({"b", 0.5, true}, 0.6);
  CHECK(p.mode() == Mode::Passive);
  (void)p.onSensorUpdate(interfererAt(5.0), 1.0);
  CHECK(p.mode() == Mode::Active);
  const auto msgs = p.onSensorUpdate(kNone, 1.1);
  CHECK(p.mode() == Mode::Passive);
  REQUIRE(msgs.size() == 1);
  CHECK(msgs[0] == AlertMessage{"a", 1.1, false});
}

TEST_CASE("message handling examples") {
  EvasionProtocol p(config("a"));
  auto out = p.onMessage({"b", 5.0, true}, 5.1);
  CHECK(p.mode() == Mode::Passive);
  REQUIRE(out.forward);
  CHECK(*out.forward == AlertMessage{"b", 5.0, true});

  out = p.onMessage({"b", 4.0, true}, 5.2);
  CHECK_FALSE(out.forward);
  CHECK(p.activeOrigins().at("b") == 5.0);

  out = p.onMessage({"b", 5.0, true}, 5.3);  // duplicate
  CHECK_FALSE(out.forward);

  EvasionProtocol q(config("a"));
  out = q.onMessage({"a", 3.0, true}, 7.0);
  CHECK(q.mode() == Mode::Normal);
  CHECK_FALSE(out.forward);
  REQUIRE(out.correction);
  CHECK(*out.correction == AlertMessage{"a", 7.0, false});
  // One correction per stale timestamp.
  out = q.onMessage({"a", 3.0, true}, 7.1);
  CHECK_FALSE(out.correction);
}

TEST_CASE("clear handling and equal-timestamp conflicts") {
  EvasionProtocol p(config("a"));
  (void)p.onMessage({"b", 2.0, true}, 2.1);
  auto out = p.onMessage({"b", 2.0, false}, 2.2);  // same stamp: clear wins
  REQUIRE(out.forward);
  CHECK(p.mode() == Mode::Normal);
  CHECK(p.activeOrigins().empty());
  out = p.onMessage({"b", 2.0, true}, 2.3);  // presence cannot undo it
  CHECK_FALSE(out.forward);
  CHECK(p.mode() == Mode::Normal);
  out = p.onMessage({"b", 2.0, false}, 2.4);  // clear forwarded once
  CHECK_FALSE(out.forward);

  // A newer epoch from the same origin is accepted again.
  out = p.onMessage({"b", 9.0, true}, 9.1);
  CHECK(out.forward);
  CHECK(p.mode() == Mode::Passive);
  // An older clear does not erase the newer presence.
  out = p.onMessage({"b", 8.0, false}, 9.2);
  CHECK_FALSE(out.forward);
  CHECK(p.mode() == Mode::Passive);
}

TEST_CASE("unknown origins are dropped") {
  EvasionProtocol p(config("a"));
  const auto out = p.onMessage({"zz", 1.0, true}, 1.0);
  CHECK(out.droppedUnknownOrigin);
  CHECK_FALSE(out.forward);
  CHECK(p.mode() == Mode::Normal);
}

TEST_CASE("periodic rebroadcast examples") {
  EvasionProtocol p(config("a"));
  CHECK_FALSE(p.periodicRebroadcast(100.0));  // Normal
  (void)p.onSensorUpdate(interfererAt(3.0), 10.0);
  CHECK_FALSE(p.periodicRebroadcast(10.5));
  const auto m = p.periodicRebroadcast(11.2);
  REQUIRE(m);
  CHECK(*m == AlertMessage{"a", 11.2, true});
  CHECK(p.lastOwnBroadcast() == 11.2);
  // step-count rounding: 10 steps of 0.1 after 11.2 still fire
  CHECK(p.periodicRebroadcast(112 * 0.1 + 10 * 0.1));
}

TEST_CASE("stored origins expire without refresh") {
  EvasionProtocol p(config("a"));
  (void)p.onMessage({"b", 1.0, true}, 1.0);
  p.expireStale(3.9);
  CHECK(p.mode() == Mode::Passive);
  p.expireStale(4.01);
  CHECK(p.mode() == Mode::Normal);
  CHECK(p.activeOrigins().empty());
}

TEST_CASE("small-model enumeration keeps every invariant") {
  // One agent "a" observing an alphabet of inputs; every sequence up to
  // length 6 is replayed from scratch.
  using Input = std::function<void(EvasionProtocol&, double, std::vector<AlertMessage>&)>;
  auto sensor = [](double d) {
    return Input([d](EvasionProtocol& p, double now, std::vector<AlertMessage>& sent) {
      auto msgs = d < 0 ? p.onSensorUpdate(kNone, now) : p.onSensorUpdate(interfererAt(d), now);
      sent.insert(sent.end(), msgs.begin(), msgs.end());
    });
  };
  auto message = [](AgentId origin, double ts, bool present) {
    return Input([=](EvasionProtocol& p, double now, std::vector<AlertMessage>& sent) {
      const auto out = p.onMessage({origin, ts, present}, now);
      if (out.forward) sent.push_back(*out.forward);
      if (out.correction) sent.push_back(*out.correction);
    });
  };
  const std::vector<Input> alphabet{sensor(4.0),          sensor(-1),
                                    message("b", 1, true), message("b", 2, true),
                                    message("b", 2, false), message("c", 1, true),
                                    message("c", 1, false), message("a", 0.5, true)};
  const int k = static_cast<int>(alphabet.size());
  long sequences = 0;
  std::vector<int> seq;
  std::function<void(int)> walk = [&](int depth) {
    if (!seq.empty()) {
      ++sequences;
      EvasionProtocol p(config("a"));
      std::vector<AlertMessage> sent;
      std::map<AgentId, double> highest;
      bool ok = true;
      double now = 1.0;
      for (int idx : seq) {
        const std::size_t before = sent.size();
        alphabet[idx](p, now, sent);
        p.expireStale(now);
        ok = ok && p.consistent();
        ok = ok && ((p.mode() == Mode::Active) == p.detecting());
        for (const auto& [origin, ts] : p.activeOrigins()) {
          ok = ok && ts >= highest[origin];
          highest[origin] = ts;
        }
        // Each (origin, timestamp, flag) forwarded at most once.
        for (std::size_t i = before; i < sent.size(); ++i) {
          if (sent[i].originId == "a") continue;
          for (std::size_t j = 0; j < before; ++j) ok = ok && !(sent[j] == sent[i]);
        }
        now += 0.25;
      }
      if (!ok) {
        FAIL("invariant broken");
      }
    }
    if (depth == 6) return;
    for (int i = 0; i < k; ++i) {
      seq.push_back(i);
      walk(depth + 1);
      seq.pop_back();
    }
  };
  walk(0);
  CHECK(sequences == 8 + 64 + 512 + 4096 + 32768 + 262144);
}

namespace {

// Lock-step flood over a static graph; delivery one hop per step.
struct Flood {
  std::map<AgentId, std::vector<AgentId>> adj;
  std::map<AgentId, EvasionProtocol> agents;
  std::deque<std::tuple<long, AgentId, AlertMessage>> inFlight;  // (due, receiver, msg)
  long transmissions = 0;
  std::mt19937_64 rng{1};
  double drop = 0.0;

  void send(const AgentId& from, const AlertMessage& m, long step) {
    for (const auto& to : adj[from]) {
      ++transmissions;
      if (std::bernoulli_distribution(drop)(rng)) continue;
      inFlight.emplace_back(step + 1, to, m);
    }
  }

  void step(long s, double now, const AgentId& detector, bool sees) {
    for (auto& [id, p] : agents) {
      const auto view = id == detector && sees ? interfererAt(3.0) : kNone;
      for (const auto& m : p.onSensorUpdate(view, now)) send(id, m, s);
    }
    auto current = std::move(inFlight);
    inFlight.clear();
    for (auto& [due, to, m] : current) {
      if (due > s) {
        inFlight.emplace_back(due, to, m);
        continue;
      }
      const auto out = agents.at(to).onMessage(m, now);
      if (out.forward) send(to, *out.forward, s);
      if (out.correction) send(to, *out.correction, s);
    }
    for (auto& [id, p] : agents) {
      if (auto m = p.periodicRebroadcast(now)) send(id, *m, s);
      p.expireStale(now);
    }
  }
};

Flood randomFlood(std::mt19937_64& g, int n, double edgeProb) {
  Flood f;
  auto roster = std::make_shared<std::set<AgentId>>();
  std::vector<AgentId> ids;
  for (int i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
  roster->insert(ids.begin(), ids.end());
  // Random spanning tree plus extra edges keeps the graph connected.
  std::bernoulli_distribution extra(edgeProb);
  std::set<std::pair<int, int>> edges;
  for (int i = 1; i < n; ++i) {
    edges.insert({std::uniform_int_distribution<int>(0, i - 1)(g), i});
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (extra(g)) edges.insert({i, j});
  for (auto [i, j] : edges) {
    f.adj[ids[i]].push_back(ids[j]);
    f.adj[ids[j]].push_back(ids[i]);
  }
  for (const auto& id : ids) {
    ProtocolConfig c;
    c.self = id;
    c.roster = roster;
    f.agents.emplace(id, EvasionProtocol(c));
  }
  return f;
}

int bfsEccentricity(const std::map<AgentId, std::vector<AgentId>>& adj, const AgentId& src) {
  std::map<AgentId, int> dist{{src, 0}};
  std::deque<AgentId> q{src};
  int far = 0;
  while (!q.empty()) {
    const AgentId u = q.front();
    q.pop_front();
    for (const auto& v : adj.at(u)) {
      if (!dist.emplace(v, dist[u] + 1).second) continue;
      far = std::max(far, dist[v]);
      q.push_back(v);
    }
  }
  return far;
}

}  // namespace

TEST_CASE("lossless flood reaches everyone within the detector's eccentricity") {
  std::mt19937_64 g(77);
  for (int trial = 0; trial < 40; ++trial) {
    Flood f = randomFlood(g, 4 + trial % 9, 0.15);
    const AgentId detector = "n0";
    const int ecc = bfsEccentricity(f.adj, detector);
    long edgesTwice = 0;
    for (const auto& [id, nbrs] : f.adj) edgesTwice += static_cast<long>(nbrs.size());

    int reached = -1;
    for (long s = 0; s < 40 && reached < 0; ++s) {
      f.step(s, 0.1 * s, detector, true);
      const bool all = std::all_of(f.agents.begin(), f.agents.end(),
                                   [](const auto& kv) { return kv.second.mode() != Mode::Normal; });
      if (all) reached = static_cast<int>(s);
    }
    CHECK(reached == ecc);
    // Before any rebroadcast each directed edge carried the report once.
    CHECK(f.transmissions <= edgesTwice);
  }
}

TEST_CASE("lossy flood converges back to normal after the interferer leaves") {
  std::mt19937_64 g(4242);
  for (int trial = 0; trial < 30; ++trial) {
    Flood f = randomFlood(g, 8, 0.2);
    f.drop = 0.3;
    f.rng.seed(trial);
    long s = 0;
    for (; s < 100; ++s) f.step(s, 0.1 * s, "n0", true);
    const long left = s;
    for (; s < left + 100; ++s) f.step(s, 0.1 * s, "n0", false);
    for (const auto& [id, p] : f.agents) {
      CHECK(p.mode() == Mode::Normal);
      CHECK(p.activeOrigins().empty());
    }
  }
}
