#include "swarm_evade/shock_study.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

namespace swarm_evade {

LatticeStats nearestNeighborStats(std::span<const Vec3> positions) {
  LatticeStats s;
  if (positions.size() < 2) return s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < positions.size(); ++j) {
      if (i != j) nearest = std::min(nearest, (positions[i] - positions[j]).norm());
    }
    sum += nearest;
    s.min = std::min(s.min, nearest);
    s.max = std::max(s.max, nearest);
  }
  s.mean = sum / static_cast<double>(positions.size());
  return s;
}

std::vector<AgentSpec> randomSpawn(const SettleOptions& opt) {
  Rng rng(opt.seed);
  // Disk sized so the mean spacing is roughly spawnSpacing.
  const double radius = opt.spawnSpacing * std::sqrt(opt.agents / std::numbers::pi);
  std::vector<AgentSpec> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < opt.agents) {
    const double r = radius * std::sqrt(rng.uniform01());
    const double phi = 2.0 * std::numbers::pi * rng.uniform01();
    const Vec3 p(r * std::cos(phi), r * std::sin(phi), 0.0);
    const bool clear = std::none_of(out.begin(), out.end(), [&](const AgentSpec& a) {
      return (a.position - p).norm() < opt.minSpawnGap;
    });
    if (clear || ++attempts > 100000) {
      char id[16];
      std::snprintf(id, sizeof id, "uav%02zu", out.size());
      out.push_back(AgentSpec{id, p, Vec3::Zero(), std::nullopt});
    }
  }
  return out;
}

SettledLattice settleLattice(const SwarmParams<double>& params, const SettleOptions& opt) {
  Scenario s;
  s.params = params;
  s.agents = randomSpawn(opt);
  s.dt = opt.dt;
  s.duration = opt.settleTime;
  s.evasionEnabled = false;
  s.seed = opt.seed;
  Engine engine(s);
  engine.run();

  SettledLattice out;
  std::vector<Vec3> positions;
  for (const auto& a : engine.agents()) {
    out.agents.push_back(AgentSpec{a.state.id, a.state.position, Vec3::Zero(), std::nullopt});
    positions.push_back(a.state.position);
    out.residualSpeed = std::max(out.residualSpeed, a.state.velocity.norm());
  }
  out.stats = nearestNeighborStats(positions);
  return out;
}

ShockResult runShock(const SettledLattice& lattice, const SwarmParams<double>& params,
                     const ShockOptions& opt, std::uint64_t seed) {
  Scenario s;
  s.params = params;
  s.agents = lattice.agents;
  s.net = opt.net;
  s.frozen = true;
  s.evasionEnabled = true;
  s.seed = seed;
  s.duration = 0.0;
  Engine engine(s);

  ShockResult res;
  double best = std::numeric_limits<double>::infinity();
  Vec3 toInterferer = Vec3::UnitX();
  std::map<AgentId, Vec3> positions;
  for (const auto& a : lattice.agents) {
    positions[a.id] = a.position;
    const double d = (a.position - opt.interfererSpawn).norm();
    if (d < best) {
      best = d;
      res.detector = a.id;
      toInterferer = opt.interfererSpawn - a.position;
    }
  }
  res.eccentricity = eccentricity(buildGraph(positions, opt.net), res.detector);

  auto tally = [&] {
    SpreadRow row{engine.stepIndex(), 0, 0, 0};
    for (const auto& a : engine.agents()) {
      switch (a.state.mode) {
        case Mode::Normal: ++row.normal; break;
        case Mode::Active: ++row.active; break;
        case Mode::Passive: ++row.passive; break;
      }
    }
    res.rows.push_back(row);
    return row;
  };
  tally();

  // The detector sees the interferer just inside the trigger radius.
  const double dist = std::min(0.5 * params.d_E1, toInterferer.norm());
  Observation obs{toInterferer.normalized() * dist, Vec3::Zero(), ObservationKind::Interferer,
                  "interferer"};
  engine.forceInterfererObservation(res.detector, obs);
  engine.step();
  const long detectedAt = engine.stepIndex();
  SpreadRow row = tally();
  for (int k = 0; k < opt.maxSteps && row.normal > 0; ++k) {
    engine.step();
    row = tally();
  }
  if (row.normal == 0) res.presenceSteps = static_cast<int>(engine.stepIndex() - detectedAt);
  for (int k = 0; k < opt.holdSteps; ++k) {
    engine.step();
    tally();
  }

  engine.forceInterfererObservation(res.detector, std::nullopt);
  engine.step();
  const long releasedAt = engine.stepIndex();
  const int everyone = static_cast<int>(engine.agents().size());
  row = tally();
  for (int k = 0; k < opt.maxSteps && row.normal < everyone; ++k) {
    engine.step();
    row = tally();
  }
  if (row.normal == everyone) res.clearSteps = static_cast<int>(engine.stepIndex() - releasedAt);
  return res;
}

std::string spreadCsv(const ShockResult& result) {
  std::ostringstream os;
  os << "step,count_normal,count_active,count_passive\n";
  for (const auto& r : result.rows) {
    os << r.step << "," << r.normal << "," << r.active << "," << r.passive << "\n";
  }
  return os.str();
}

}  // namespace swarm_evade
