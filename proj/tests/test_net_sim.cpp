#include "swarm_evade/net_sim.hpp"

#include <doctest.h>

#include <algorithm>
#include <limits>
#include <random>

using namespace swarm_evade;

namespace {

std::map<AgentId, Vec3> randomPositions(std::mt19937_64& g, int n, double extent) {
  std::uniform_real_distribution<double> u(0.0, extent);
  std::map<AgentId, Vec3> pos;
  for (int i = 0; i < n; ++i) pos["a" + std::to_string(100 + i)] = Vec3(u(g), u(g), 0);
  return pos;
}

// All-pairs hop counts by Floyd-Warshall on the raw distance predicate.
int floydEccentricity(const std::map<AgentId, Vec3>& pos, double range, const AgentId& src) {
  std::vector<AgentId> ids;
  std::vector<Vec3> pts;
  for (const auto& [id, p] : pos) {
    ids.push_back(id);
    pts.push_back(p);
  }
  const int n = static_cast<int>(ids.size());
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i == j) d[i][j] = 0;
      else if ((pts[i] - pts[j]).norm() <= range) d[i][j] = 1;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  const int s = static_cast<int>(std::find(ids.begin(), ids.end(), src) - ids.begin());
  int far = 0;
  for (int j = 0; j < n; ++j) {
    if (d[s][j] >= inf) return -1;
    far = std::max(far, d[s][j]);
  }
  return far;
}

}  // namespace

TEST_CASE("graph is symmetric, sorted and range-limited") {
  std::mt19937_64 g(3);
  NetConfig cfg;
  const auto pos = randomPositions(g, 30, 20.0);
  const Graph graph = buildGraph(pos, cfg);
  CHECK(graph.size() == 30);
  for (const auto& [id, adj] : graph) {
    CHECK(std::is_sorted(adj.begin(), adj.end()));
    for (const auto& other : adj) {
      CHECK(other != id);
      CHECK((pos.at(id) - pos.at(other)).norm() <= cfg.commRange);
      const auto& back = graph.at(other);
      CHECK(std::binary_search(back.begin(), back.end(), id));
    }
  }
}

TEST_CASE("eccentricity agrees with an all-pairs oracle") {
  std::mt19937_64 g(8);
  NetConfig cfg;
  int connected = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto pos = randomPositions(g, 5 + trial % 20, 8.0 + trial % 7 * 2.0);
    const Graph graph = buildGraph(pos, cfg);
    for (const auto& [id, p] : pos) {
      const int expect = floydEccentricity(pos, cfg.commRange, id);
      CHECK(eccentricity(graph, id) == expect);
      connected += expect >= 0;
    }
  }
  CHECK(connected > 0);
  CHECK(eccentricity(Graph{}, "nobody") == -1);
}

TEST_CASE("chain of agents") {
  std::map<AgentId, Vec3> pos;
  for (int i = 0; i < 6; ++i) pos["c" + std::to_string(i)] = Vec3(4.0 * i, 0, 0);
  const Graph graph = buildGraph(pos, NetConfig{});
  CHECK(eccentricity(graph, "c0") == 5);
  CHECK(eccentricity(graph, "c3") == 3);
  // exactly at range counts as linked
  std::map<AgentId, Vec3> edge{{"p", Vec3::Zero()}, {"q", Vec3(5.0, 0, 0)}};
  CHECK(buildGraph(edge, NetConfig{}).at("p").size() == 1);
}

TEST_CASE("drop rate follows the configured probability") {
  NetConfig cfg;
  cfg.dropProbability = 0.3;
  cfg.seed = 42;
  Network net(cfg);
  net.rebuild({{"s", Vec3::Zero()}, {"r", Vec3(1, 0, 0)}});
  for (long i = 0; i < 1000; ++i) net.send("s", {"s", 0.1 * i, true}, i);
  // Binomial(1000, 0.7): standard deviation about 14.5, so +-50 is > 3 sigma.
  CHECK(net.sentCount() >= 650);
  CHECK(net.sentCount() <= 750);
  CHECK(net.sentCount() + net.droppedCount() == 1000);
}

TEST_CASE("latency and delivery order") {
  NetConfig cfg;
  cfg.hopLatency = 3;
  Network net(cfg);
  net.rebuild({{"a", Vec3::Zero()}, {"b", Vec3(1, 0, 0)}, {"c", Vec3(2, 0, 0)}});
  net.send("c", {"c", 0.0, true}, 0);
  net.send("a", {"a", 0.0, true}, 0);
  CHECK(net.deliver(2).empty());
  const auto due = net.deliver(3);
  REQUIRE(due.size() == 4);
  for (const auto& m : due) CHECK(m.deliverAtStep == 3);
  CHECK(due[0].senderId == "a");
  CHECK(due[0].receiverId == "b");
  CHECK(due[1].senderId == "a");
  CHECK(due[1].receiverId == "c");
  CHECK(due[2].senderId == "c");
  CHECK(due[2].receiverId == "a");
  CHECK(net.pending() == 0);
}

TEST_CASE("deliverDue keeps send order on full ties") {
  std::vector<InFlightMessage> q{{{"x", 1.0, true}, "s", "r", 2},
                                 {{"y", 2.0, true}, "s", "r", 2},
                                 {{"z", 0.0, true}, "a", "r", 5},
                                 {{"w", 3.0, true}, "s", "r", 1}};
  auto [due, rest] = deliverDue(q, 4);
  REQUIRE(due.size() == 3);
  CHECK(due[0].payload.originId == "w");
  CHECK(due[1].payload.originId == "x");
  CHECK(due[2].payload.originId == "y");
  REQUIRE(rest.size() == 1);
  CHECK(rest[0].payload.originId == "z");
}

TEST_CASE("send interval cap throttles") {
  NetConfig cfg = NetConfig::implicitChannel(0.1);
  CHECK(cfg.hopLatency == 20);
  CHECK(cfg.minSendInterval == 20);
  Network net(cfg);
  net.rebuild({{"a", Vec3::Zero()}, {"b", Vec3(1, 0, 0)}});
  net.send("a", {"a", 0.0, true}, 0);
  net.send("a", {"a", 0.1, true}, 1);
  net.send("a", {"a", 2.0, true}, 20);
  CHECK(net.throttledCount() == 1);
  CHECK(net.sentCount() == 2);
  CHECK(net.deliver(20).size() == 1);
}

TEST_CASE("same seed gives the same drops") {
  auto run = [](std::uint64_t seed) {
    NetConfig cfg;
    cfg.dropProbability = 0.5;
    cfg.seed = seed;
    Network net(cfg);
    std::map<AgentId, Vec3> pos;
    for (int i = 0; i < 8; ++i) pos["n" + std::to_string(i)] = Vec3(0.5 * i, 0, 0);
    net.rebuild(pos);
    std::vector<std::string> trace;
    for (long s = 0; s < 50; ++s) {
      net.send("n" + std::to_string(s % 8), {"n0", 0.1 * s, true}, s);
      for (const auto& m : net.deliver(s)) trace.push_back(m.senderId + m.receiverId);
    }
    return trace;
  };
  CHECK(run(7) == run(7));
  CHECK(run(7) != run(8));
}

TEST_CASE("rng unit interval mapping") {
  Rng a(123), b(123);
  std::mt19937_64 raw(123);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform01();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(x == static_cast<double>(raw() >> 11) / 9007199254740992.0);
    CHECK(b.uniform01() == x);
  }
}

TEST_CASE("net config validation") {
  NetConfig c;
  CHECK_NOTHROW(c.validate());
  c.dropProbability = 1.0;
  CHECK_THROWS(c.validate());
  c = NetConfig{};
  c.hopLatency = 0;
  CHECK_THROWS(c.validate());
  c = NetConfig{};
  c.commRange = -1;
  CHECK_THROWS(c.validate());
}
