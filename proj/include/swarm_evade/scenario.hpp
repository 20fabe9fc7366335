#pragma once

#include "swarm_evade/net_sim.hpp"
#include "swarm_evade/swarm_core.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace swarm_evade {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SensingConfig {
  double neighborRange = 8.0;             // [m]
  double interfererRange = 12.0;          // [m]
  double fovHalfAngle = std::numbers::pi; // [rad], pi = omnidirectional
  double detectionProbability = 1.0;
  // An interferer stays perceived this long after its last sighting, at its
  // last seen position. 0 means perception is exactly the current sighting.
  double trackHold = 0.0;  // [s]

  void validate() const;
};

struct ProtocolSettings {
  double rebroadcastPeriod = 1.0;  // [s]
  double originTimeout = 3.0;      // [s]
};

enum class PolicyKind { Pursuit, Scripted, External };
enum class PursuitTarget { Centroid, Nearest };

struct InterfererPolicy {
  PolicyKind kind = PolicyKind::Pursuit;
  std::optional<double> maxSpeed;  // defaults to 0.9 * swarm v_max
  PursuitTarget target = PursuitTarget::Centroid;
  std::optional<double> stopTime;    // pursuit halts from this time on
  std::optional<double> removeTime;  // interferer leaves the world
  std::vector<Vec3> waypoints;       // scripted only
};

struct AgentSpec {
  AgentId id;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  std::optional<Vec3> heading;
};

struct InterfererSpec {
  AgentId id;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  InterfererPolicy policy;
};

inline constexpr double kInterfererSpeedRatio = 0.9;
inline constexpr std::uint64_t kDefaultSeed = 42;

struct Scenario {
  std::vector<AgentSpec> agents;
  std::vector<InterfererSpec> interferers;
  SwarmParams<double> params = SwarmParams<double>::defaults();
  NetConfig net;
  SensingConfig sensing;
  ProtocolSettings protocol;
  double dt = 0.1;
  double duration = 60.0;
  bool evasionEnabled = true;
  bool enlargedRange = false;
  bool frozen = false;
  bool planar = true;
  double velocitySmoothing = 0.5;
  std::uint64_t seed = kDefaultSeed;
  std::optional<std::string> outDir;

  double interfererMaxSpeed(const InterfererPolicy& policy) const {
    return policy.maxSpeed.value_or(kInterfererSpeedRatio * params.v_max);
  }

  // Throws ConfigError.
  void validate() const;
};

// Strict parser: unknown keys and wrong types raise ConfigError.
Scenario parseScenario(const nlohmann::json& j);
Scenario parseScenarioText(const std::string& text);
Scenario loadScenario(const std::filesystem::path& path);
nlohmann::json toJson(const Scenario& s);

// Applies `name=value` overrides to swarm parameters.
void setParam(SwarmParams<double>& p, const std::string& name, double value);

}  // namespace swarm_evade
