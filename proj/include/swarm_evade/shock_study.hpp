#pragma once

#include "swarm_evade/scenario.hpp"
#include "swarm_evade/sim_engine.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace swarm_evade {

struct LatticeStats {
  double mean = 0.0;  // nearest-neighbor spacing [m]
  double min = 0.0;
  double max = 0.0;
};

LatticeStats nearestNeighborStats(std::span<const Vec3> positions);

struct SettleOptions {
  int agents = 50;
  std::uint64_t seed = kDefaultSeed;
  double dt = 0.1;
  double settleTime = 200.0;  // [s]
  double spawnSpacing = 2.0;  // mean spawn spacing [m]
  double minSpawnGap = 1.2;   // [m]
};

struct SettledLattice {
  std::vector<AgentSpec> agents;  // final positions, zero velocity
  LatticeStats stats;
  double residualSpeed = 0.0;  // max agent speed at the end of settling
};

// Random planar spawn, then free swarming without interferers until settled.
std::vector<AgentSpec> randomSpawn(const SettleOptions& opt);
SettledLattice settleLattice(const SwarmParams<double>& params, const SettleOptions& opt);

struct SpreadRow {
  long step = 0;
  int normal = 0;
  int active = 0;
  int passive = 0;
};

struct ShockResult {
  AgentId detector;
  int eccentricity = -1;   // BFS hops from the detector over the comm graph
  int presenceSteps = -1;  // steps from detection until nobody is Normal
  int clearSteps = -1;     // steps from release until everybody is Normal
  std::vector<SpreadRow> rows;
};

struct ShockOptions {
  NetConfig net;            // comm range 5 m, one hop per step
  Vec3 interfererSpawn = Vec3(40.0, 0.0, 0.0);
  int holdSteps = 5;        // steps spent fully aware before the interferer leaves
  int maxSteps = 200;
};

// Freezes the lattice, makes the agent nearest the interferer spawn detect
// it, and counts steps until the alert and then the clear have spread.
ShockResult runShock(const SettledLattice& lattice, const SwarmParams<double>& params,
                     const ShockOptions& opt, std::uint64_t seed = kDefaultSeed);

std::string spreadCsv(const ShockResult& result);

}  // namespace swarm_evade
