#pragma once

#include "swarm_evade/evasion_protocol.hpp"
#include "swarm_evade/swarm_core.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

namespace swarm_evade {

// mt19937_64 with a hand-rolled unit-interval mapping, so draws are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform01() < p; }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

struct NetConfig {
  double commRange = 5.0;      // [m]
  int hopLatency = 1;          // [steps]
  double dropProbability = 0.0;
  std::uint64_t seed = 0;
  // Minimum steps between sends from one agent; 0 disables the cap.
  int minSendInterval = 0;

  void validate() const;

  // One-bit optical side channel: 1 message per 2 s, delivered 2 s later.
  static NetConfig implicitChannel(double dt);
};

// Sorted adjacency lists; ids sorted as well.
using Graph = std::map<AgentId, std::vector<AgentId>>;

Graph buildGraph(const std::map<AgentId, Vec3>& positions, const NetConfig& cfg);

// Hop distance from source to the farthest reachable node, or -1 when some
// node is unreachable.
int eccentricity(const Graph& graph, const AgentId& source);

struct InFlightMessage {
  AlertMessage payload;
  AgentId senderId;
  AgentId receiverId;
  long deliverAtStep = 0;
};

std::vector<InFlightMessage> broadcast(const AgentId& fromId, const AlertMessage& msg,
                                       const Graph& graph, const NetConfig& cfg, long currentStep,
                                       Rng& rng);

// Splits off messages due at or before currentStep, ordered by
// (deliverAtStep, senderId, receiverId) with ties kept in send order.
std::pair<std::vector<InFlightMessage>, std::vector<InFlightMessage>> deliverDue(
    std::vector<InFlightMessage> queue, long currentStep);

// Stateful wrapper owning the queue, the drop RNG and traffic counters.
class Network {
 public:
  explicit Network(NetConfig cfg);

  const NetConfig& config() const { return cfg_; }

  void rebuild(const std::map<AgentId, Vec3>& positions) { graph_ = buildGraph(positions, cfg_); }
  const Graph& graph() const { return graph_; }

  void send(const AgentId& fromId, const AlertMessage& msg, long currentStep);
  std::vector<InFlightMessage> deliver(long currentStep);

  std::size_t pending() const { return queue_.size(); }
  std::uint64_t sentCount() const { return sent_; }
  std::uint64_t droppedCount() const { return dropped_; }
  std::uint64_t throttledCount() const { return throttled_; }

 private:
  NetConfig cfg_;
  Rng rng_;
  Graph graph_;
  std::vector<InFlightMessage> queue_;
  std::map<AgentId, long> lastSend_;
  std::uint64_t sent_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t throttled_ = 0;
};

}  // namespace swarm_evade
