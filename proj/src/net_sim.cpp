#include "swarm_evade/net_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <tuple>

namespace swarm_evade {

void NetConfig::validate() const {
  if (!(commRange > 0) || !std::isfinite(commRange)) {
    throw std::invalid_argument("net.comm_range must be positive");
  }
  if (hopLatency < 1) throw std::invalid_argument("net.hop_latency must be >= 1");
  if (!(dropProbability >= 0 && dropProbability < 1)) {
    throw std::invalid_argument("net.drop_probability must be in [0, 1)");
  }
  if (minSendInterval < 0) throw std::invalid_argument("net.min_send_interval must be >= 0");
}

NetConfig NetConfig::implicitChannel(double dt) {
  NetConfig cfg;
  const int twoSeconds = std::max(1, static_cast<int>(std::lround(2.0 / dt)));
  cfg.hopLatency = twoSeconds;
  cfg.minSendInterval = twoSeconds;
  return cfg;
}

Graph buildGraph(const std::map<AgentId, Vec3>& positions, const NetConfig& cfg) {
  Graph g;
  for (const auto& [id, p] : positions) g[id];
  for (auto a = positions.begin(); a != positions.end(); ++a) {
    for (auto b = std::next(a); b != positions.end(); ++b) {
      if ((a->second - b->second).norm() <= cfg.commRange) {
        g[a->first].push_back(b->first);
        g[b->first].push_back(a->first);
      }
    }
  }
  for (auto& [id, adj] : g) std::sort(adj.begin(), adj.end());
  return g;
}

int eccentricity(const Graph& graph, const AgentId& source) {
  if (!graph.contains(source)) return -1;
  std::map<AgentId, int> depth{{source, 0}};
  std::deque<AgentId> frontier{source};
  int deepest = 0;
  while (!frontier.empty()) {
    AgentId u = frontier.front();
    frontier.pop_front();
    for (const auto& v : graph.at(u)) {
      if (depth.contains(v)) continue;
      depth[v] = depth[u] + 1;
      deepest = std::max(deepest, depth[v]);
      frontier.push_back(v);
    }
  }
  return depth.size() == graph.size() ? deepest : -1;
}

std::vector<InFlightMessage> broadcast(const AgentId& fromId, const AlertMessage& msg,
                                       const Graph& graph, const NetConfig& cfg, long currentStep,
                                       Rng& rng) {
  std::vector<InFlightMessage> out;
  auto it = graph.find(fromId);
  if (it == graph.end()) return out;
  for (const auto& to : it->second) {
    // One draw per receiver regardless of outcome keeps the stream aligned.
    if (rng.bernoulli(cfg.dropProbability)) continue;
    out.push_back({msg, fromId, to, currentStep + cfg.hopLatency});
  }
  return out;
}

std::pair<std::vector<InFlightMessage>, std::vector<InFlightMessage>> deliverDue(
    std::vector<InFlightMessage> queue, long currentStep) {
  std::vector<InFlightMessage> due, rest;
  for (auto& m : queue) {
    (m.deliverAtStep <= currentStep ? due : rest).push_back(std::move(m));
  }
  std::stable_sort(due.begin(), due.end(), [](const auto& a, const auto& b) {
    return std::tie(a.deliverAtStep, a.senderId, a.receiverId) <
           std::tie(b.deliverAtStep, b.senderId, b.receiverId);
  });
  return {std::move(due), std::move(rest)};
}

Network::Network(NetConfig cfg) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

void Network::send(const AgentId& fromId, const AlertMessage& msg, long currentStep) {
  if (cfg_.minSendInterval > 0) {
    auto it = lastSend_.find(fromId);
    if (it != lastSend_.end() && currentStep - it->second < cfg_.minSendInterval) {
      ++throttled_;
      return;
    }
    lastSend_[fromId] = currentStep;
  }
  auto out = broadcast(fromId, msg, graph_, cfg_, currentStep, rng_);
  const auto degree = graph_.contains(fromId) ? graph_.at(fromId).size() : 0;
  sent_ += out.size();
  dropped_ += degree - out.size();
  queue_.insert(queue_.end(), std::make_move_iterator(out.begin()),
                std::make_move_iterator(out.end()));
}

std::vector<InFlightMessage> Network::deliver(long currentStep) {
  auto [due, rest] = deliverDue(std::move(queue_), currentStep);
  queue_ = std::move(rest);
  return due;
}

}  // namespace swarm_evade
