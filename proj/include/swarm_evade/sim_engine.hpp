#pragma once

#include "swarm_evade/evasion_protocol.hpp"
#include "swarm_evade/metrics.hpp"
#include "swarm_evade/net_sim.hpp"
#include "swarm_evade/scenario.hpp"
#include "swarm_evade/swarm_core.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace swarm_evade {

struct AgentState {
  AgentId id;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Mode mode = Mode::Normal;
  Vec3 heading = Vec3::UnitX();  // FOV axis; follows velocity while moving
};

struct InterfererState {
  AgentId id;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  InterfererPolicy policy;
  double maxSpeed = 0.0;
  bool present = true;
  std::optional<Vec3> command;  // External policy
  std::size_t waypoint = 0;
};

struct Kinematics {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
};

struct MotionLimits {
  double v_max = 2.0;
  double a_max = 2.0;
  double damping = 0.0;  // [1/s]
  bool planar = true;
};

// Point-mass tracker for a desired position one step ahead: commanded
// velocity (desired - p)/dt, bled by damping, rate-limited by a_max and
// capped at v_max. Planar motion keeps z fixed.
Kinematics applyMotion(const Kinematics& state, const Vec3& desired, double dt,
                       const MotionLimits& limits);

// Speed-limited pursuit of the swarm centroid (or nearest agent), slowing
// on arrival; zero once stopTime has passed.
Vec3 pursuitVelocity(const InterfererState& interferer, std::span<const AgentState> agents,
                     double time);

inline constexpr double kArrivalGain = 1.0;      // [1/s]
inline constexpr double kHeadingMinSpeed = 0.05; // [m/s]
inline constexpr double kEnlargedScale = 2.0;

struct SenseResult {
  std::vector<Observation> neighbors;
  std::vector<Observation> interferers;
};

// Range, r_B, FOV and detection-probability filtering for one agent.
// Estimated velocities are left at zero; the engine fills them in.
SenseResult sense(const AgentState& self, std::span<const AgentState> agents,
                  std::span<const InterfererState> interferers, const SensingConfig& cfg,
                  double r_B, double interfererRangeScale, Rng& rng);

// Fixed-step world loop. One step runs, in order:
//   1. control: every agent's total force from the observations and mode
//      of the previous step, desired position, tracker motion (skipped
//      when frozen); all agents read the same snapshot
//   2. interferer policies and motion, against the same snapshot
//   3. clock advance, interferer removal
//   4. sensing at the new positions (agents in id order), plus interferers
//      still held from earlier sightings (sensing.track_hold)
//   5. protocol: sensor updates, due message delivery and forwarding,
//      periodic rebroadcast, stale-origin expiry
//   6. record frame
// The constructor runs phases 4-6 for t = 0.
class Engine {
 public:
  struct InterfererTrack {
    double lastSeen = 0.0;
    Vec3 position = Vec3::Zero();  // world frame, at last sighting
  };

  struct AgentRuntime {
    AgentState state;
    EvasionProtocol protocol;
    VelocityEstimator<double> estimator;
    DirectionMemory<double> lastDirections;
    SenseResult observed;
    std::optional<Observation> forcedInterferer;
    std::map<AgentId, InterfererTrack> tracks;
    bool detecting = false;
  };

  explicit Engine(Scenario scenario);

  const Scenario& scenario() const { return scenario_; }
  long stepIndex() const { return step_; }
  double time() const { return static_cast<double>(step_) * scenario_.dt; }
  long totalSteps() const;
  bool finished() const { return step_ >= totalSteps(); }

  void step();
  void run();

  const std::vector<AgentRuntime>& agents() const { return agents_; }
  const std::vector<InterfererState>& interferers() const { return interferers_; }
  const Network& network() const { return network_; }
  const RunRecord& record() const { return record_; }
  std::vector<AgentState> agentStates() const;

  // Velocity command for an External interferer, clamped to its max speed.
  // Returns the applied command.
  Vec3 commandInterferer(const AgentId& id, const Vec3& velocity);
  void setInterfererPresent(const AgentId& id, bool present);
  // Overrides the agent's interferer sensing with a single observation.
  void forceInterfererObservation(const AgentId& agent, std::optional<Observation> obs);

 private:
  Vec3 controlForce(const AgentRuntime& a) const;
  void senseAndCommunicate();
  void recordFrame();
  InterfererState* findInterferer(const AgentId& id);

  Scenario scenario_;
  long step_ = 0;
  std::vector<AgentRuntime> agents_;
  std::vector<InterfererState> interferers_;
  Network network_;
  Rng senseRng_;
  RunRecord record_;
};

}  // namespace swarm_evade
