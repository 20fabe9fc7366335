#pragma once

// Virtual-force swarm model: cohesion, separation, alignment, escape and
// following forces plus the desired-position update. Everything here is a
// pure function of its arguments and is templated on the scalar type.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>

namespace swarm_evade {

template <typename Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;

using Vec3 = Vec3T<double>;

using AgentId = std::string;

enum class Mode { Normal, Active, Passive };

inline const char* toString(Mode m) {
  switch (m) {
    case Mode::Normal: return "normal";
    case Mode::Active: return "active";
    case Mode::Passive: return "passive";
  }
  return "normal";
}

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
struct SwarmParams {
  Scalar l = Scalar(0.6);       // safety radius [m]
  Scalar l_min = Scalar(0.1);   // clamp floor [m]

  Scalar d_min = Scalar(0.2);   // cohesion onset [m]
  Scalar d_C = Scalar(2.0);     // cohesion quadratic -> log switch [m]
  Scalar k_1C = Scalar(0.3);    // [m^-2]
  Scalar k_2C = Scalar(1.2);
  Scalar k_3C = Scalar(1.0);    // [m^-1]

  Scalar d_max = Scalar(4.0);   // separation cutoff [m]
  Scalar d_S = Scalar(1.0);     // separation steep -> quadratic switch [m]
  Scalar k_1S = Scalar(0.2);    // [m^-2]
  Scalar k_2S = Scalar(2.0);    // [m^1/2]

  Scalar k_A = Scalar(0.5);     // [s/m]

  Scalar d_E1 = Scalar(8.0);    // evasion trigger [m]
  Scalar d_E2 = Scalar(11.0);   // escape cutoff / release [m]
  Scalar k_E = Scalar(8.0);     // [m^1/2]

  Scalar k_F = Scalar(1.0);
  Scalar k_V = Scalar(1.0);     // [s/m]
  Scalar d_F = Scalar(1.0);

  Scalar passiveGainScale = Scalar(1.5);

  Scalar r_B = Scalar(8.0);     // neighbor interaction radius [m]
  Scalar k_pa = Scalar(1.0);    // fixed, [m s^-2]
  Scalar virtualMass = Scalar(1.0);  // fixed

  Scalar v_max = Scalar(2.0);   // [m/s]
  Scalar a_max = Scalar(2.0);   // [m/s^2]
  Scalar damping = Scalar(0.4); // tracker velocity bleed [1/s]

  // The reference gain set used by the unit-level examples.
  static SwarmParams reference() { return SwarmParams{}; }

  // Shipped defaults. Interaction is kept local (r_B 3.5 m) and separation
  // stiffer so a 50-agent swarm settles to ~2.8 m spacing instead of
  // collapsing under the averaged cohesion of far neighbors.
  static SwarmParams defaults();

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ParameterError(std::string("invalid swarm parameters: ") + what);
    };
    const Scalar all[] = {l, l_min, d_min, d_C, k_1C, k_2C, k_3C, d_max, d_S, k_1S, k_2S, k_A,
                          d_E1, d_E2, k_E, k_F, k_V, d_F, passiveGainScale, r_B, k_pa,
                          virtualMass, v_max, a_max, damping};
    for (Scalar v : all) require(std::isfinite(static_cast<double>(v)), "non-finite value");
    require(l >= 0, "l >= 0");
    require(l_min > 0, "l_min > 0");
    require(d_min >= 0 && d_min < d_C, "0 <= d_min < d_C");
    require(d_S > 0 && d_S < d_max, "0 < d_S < d_max");
    require(d_E1 > 0 && d_E1 <= d_E2, "0 < d_E1 <= d_E2");
    require(k_1C >= 0 && k_2C >= 0 && k_3C >= 0 && k_1S >= 0 && k_2S >= 0 && k_A >= 0 &&
                k_E >= 0 && k_F >= 0 && k_V >= 0 && passiveGainScale >= 0 && damping >= 0,
            "gains >= 0");
    require(d_F >= 1, "d_F >= 1");
    require(r_B > 0, "r_B > 0");
    require(k_pa == Scalar(1) && virtualMass == Scalar(1), "k_pa and virtual mass are fixed at 1");
    require(v_max > 0 && a_max > 0, "v_max > 0, a_max > 0");
  }

  // Cohesion and separation gains multiplied by passiveGainScale.
  SwarmParams passiveScaled() const {
    SwarmParams p = *this;
    p.k_1C *= passiveGainScale;
    p.k_2C *= passiveGainScale;
    p.k_1S *= passiveGainScale;
    p.k_2S *= passiveGainScale;
    return p;
  }
};

template <typename Scalar>
SwarmParams<Scalar> SwarmParams<Scalar>::defaults() {
  SwarmParams p;
  p.r_B = Scalar(3.5);
  p.k_1S = Scalar(0.45);
  p.k_2S = Scalar(4);
  return p;
}

enum class ObservationKind { Neighbor, Interferer };

template <typename Scalar>
struct ObservationT {
  Vec3T<Scalar> relativePosition = Vec3T<Scalar>::Zero();  // p_i - p_j
  Vec3T<Scalar> estimatedVelocity = Vec3T<Scalar>::Zero();
  ObservationKind kind = ObservationKind::Neighbor;
  AgentId sourceId;
};

using Observation = ObservationT<double>;

// Last non-degenerate direction toward each interferer, used when an
// observation collapses onto the agent itself.
template <typename Scalar>
using DirectionMemory = std::map<AgentId, Vec3T<Scalar>>;

// ---------------------------------------------------------------------------
// Scalar profiles

template <typename Scalar>
Scalar cohesionProfile(Scalar dist, const SwarmParams<Scalar>& p) {
  using std::log;
  const Scalar pc = dist - p.l;
  if (pc <= p.d_min) return Scalar(0);
  if (pc <= p.d_C) return p.k_1C * (pc - p.d_min) * (pc - p.d_min);
  const Scalar delta = p.k_1C * (p.d_C - p.d_min) * (p.d_C - p.d_min);
  return p.k_2C * log(p.k_3C * (pc - p.d_C) + Scalar(1)) + delta;
}

// p = max(dist - l, l_min); the clamp keeps the steep branches finite.
template <typename Scalar>
Scalar clampedGap(Scalar dist, const SwarmParams<Scalar>& p) {
  return dist > p.l + p.l_min ? dist - p.l : p.l_min;
}

template <typename Scalar>
Scalar separationProfile(Scalar dist, const SwarmParams<Scalar>& p) {
  using std::sqrt;
  const Scalar ps = clampedGap(dist, p);
  if (ps >= p.d_max) return Scalar(0);
  if (ps > p.d_S) return p.k_1S * (ps - p.d_max) * (ps - p.d_max);
  const Scalar tail = Scalar(1) / sqrt(p.d_max);
  const Scalar delta =
      p.k_1S * (p.d_S - p.d_max) * (p.d_S - p.d_max) - p.k_2S * (Scalar(1) / sqrt(p.d_S) - tail);
  return p.k_2S * (Scalar(1) / sqrt(ps) - tail) + delta;
}

template <typename Scalar>
Scalar escapeProfile(Scalar dist, const SwarmParams<Scalar>& p) {
  using std::sqrt;
  const Scalar pe = clampedGap(dist, p);
  if (pe >= p.d_E2) return Scalar(0);
  return p.k_E * (Scalar(1) / sqrt(pe) - Scalar(1) / sqrt(p.d_E2));
}

template <typename Scalar>
Scalar followingWeight(Scalar speed, const SwarmParams<Scalar>& p) {
  using std::log;
  return p.k_F * log(p.k_V * speed + p.d_F);
}

// ---------------------------------------------------------------------------
// Forces

// Mean over non-degenerate observations of profile(|r|) * r/|r|.
template <typename Scalar, typename Profile>
Vec3T<Scalar> radialMean(std::span<const ObservationT<Scalar>> obs, Profile&& profile) {
  Vec3T<Scalar> sum = Vec3T<Scalar>::Zero();
  int n = 0;
  for (const auto& o : obs) {
    const Scalar d = o.relativePosition.norm();
    if (!(d > Scalar(0))) continue;
    sum += profile(d) * (o.relativePosition / d);
    ++n;
  }
  return n == 0 ? sum : Vec3T<Scalar>(sum / Scalar(n));
}

template <typename Scalar>
Vec3T<Scalar> cohesionForce(std::span<const ObservationT<Scalar>> neighbors,
                            const SwarmParams<Scalar>& p) {
  return radialMean<Scalar>(neighbors, [&](Scalar d) { return cohesionProfile(d, p); });
}

template <typename Scalar>
Vec3T<Scalar> separationForce(std::span<const ObservationT<Scalar>> neighbors,
                              const SwarmParams<Scalar>& p) {
  return -radialMean<Scalar>(neighbors, [&](Scalar d) { return separationProfile(d, p); });
}

template <typename Scalar>
Vec3T<Scalar> alignmentForce(std::span<const ObservationT<Scalar>> neighbors,
                             const SwarmParams<Scalar>& p) {
  if (neighbors.empty()) return Vec3T<Scalar>::Zero();
  Vec3T<Scalar> sum = Vec3T<Scalar>::Zero();
  for (const auto& o : neighbors) sum += o.estimatedVelocity;
  return p.k_A * sum / Scalar(neighbors.size());
}

template <typename Scalar>
Vec3T<Scalar> escapeForce(std::span<const ObservationT<Scalar>> interferers,
                          const SwarmParams<Scalar>& p,
                          const DirectionMemory<Scalar>* lastKnown = nullptr) {
  if (interferers.empty()) return Vec3T<Scalar>::Zero();
  Vec3T<Scalar> sum = Vec3T<Scalar>::Zero();
  for (const auto& o : interferers) {
    const Scalar d = o.relativePosition.norm();
    Vec3T<Scalar> dir;
    if (d > Scalar(0)) {
      dir = o.relativePosition / d;
    } else {
      dir = Vec3T<Scalar>::UnitX();
      if (lastKnown != nullptr) {
        if (auto it = lastKnown->find(o.sourceId); it != lastKnown->end()) dir = it->second;
      }
    }
    sum += escapeProfile(d, p) * dir;
  }
  return -sum / Scalar(interferers.size());
}

inline constexpr double kFollowingSpeedTolerance = 1e-6;

template <typename Scalar>
Vec3T<Scalar> followingForce(std::span<const ObservationT<Scalar>> neighbors,
                             const SwarmParams<Scalar>& p) {
  Vec3T<Scalar> sum = Vec3T<Scalar>::Zero();
  int n = 0;
  for (const auto& o : neighbors) {
    const Scalar speed = o.estimatedVelocity.norm();
    if (speed < Scalar(kFollowingSpeedTolerance)) continue;
    sum += followingWeight(speed, p) * (o.estimatedVelocity / speed);
    ++n;
  }
  return n == 0 ? sum : Vec3T<Scalar>(sum / Scalar(n));
}

template <typename Scalar>
Vec3T<Scalar> totalForce(Mode mode, std::span<const ObservationT<Scalar>> neighbors,
                         std::span<const ObservationT<Scalar>> interferers,
                         const SwarmParams<Scalar>& p,
                         const DirectionMemory<Scalar>* lastKnown = nullptr) {
  switch (mode) {
    case Mode::Normal:
      return cohesionForce(neighbors, p) + separationForce(neighbors, p) +
             alignmentForce(neighbors, p);
    case Mode::Active:
      return cohesionForce(neighbors, p) + separationForce(neighbors, p) +
             alignmentForce(neighbors, p) + escapeForce(interferers, p, lastKnown);
    case Mode::Passive: {
      const SwarmParams<Scalar> scaled = p.passiveScaled();
      return cohesionForce(neighbors, scaled) + separationForce(neighbors, scaled) +
             alignmentForce(neighbors, p) + followingForce(neighbors, p);
    }
  }
  return Vec3T<Scalar>::Zero();
}

// p + v dt + 1/2 k_pa (F/m) dt^2
template <typename Scalar>
Vec3T<Scalar> desiredPosition(const Vec3T<Scalar>& position, const Vec3T<Scalar>& velocity,
                              const Vec3T<Scalar>& force, Scalar dt, const SwarmParams<Scalar>& p) {
  if (!(dt > Scalar(0))) throw ParameterError("dt must be positive");
  const Vec3T<Scalar> accel = force / p.virtualMass;
  return position + velocity * dt + Scalar(0.5) * p.k_pa * accel * dt * dt;
}

// Finite-difference velocity estimate with exponential smoothing, one
// track per observed source.
template <typename Scalar>
class VelocityEstimator {
 public:
  explicit VelocityEstimator(Scalar smoothing = Scalar(0.5)) : smoothing_(smoothing) {}

  // absolutePosition is the observer's position plus the relative offset.
  Vec3T<Scalar> update(const AgentId& source, const Vec3T<Scalar>& absolutePosition, Scalar dt) {
    auto [it, inserted] = tracks_.try_emplace(source);
    Track& t = it->second;
    t.seen = true;
    if (inserted) {
      t.lastPosition = absolutePosition;
      return t.velocity;
    }
    const Vec3T<Scalar> raw = (absolutePosition - t.lastPosition) / dt;
    t.velocity = t.primed ? Vec3T<Scalar>(smoothing_ * raw + (Scalar(1) - smoothing_) * t.velocity)
                          : raw;
    t.primed = true;
    t.lastPosition = absolutePosition;
    return t.velocity;
  }

  // Drops tracks not updated since the previous call.
  void endFrame() {
    for (auto it = tracks_.begin(); it != tracks_.end();) {
      if (!it->second.seen) {
        it = tracks_.erase(it);
      } else {
        it->second.seen = false;
        ++it;
      }
    }
  }

  std::size_t trackCount() const { return tracks_.size(); }

 private:
  struct Track {
    Vec3T<Scalar> lastPosition = Vec3T<Scalar>::Zero();
    Vec3T<Scalar> velocity = Vec3T<Scalar>::Zero();
    bool primed = false;
    bool seen = false;
  };
  Scalar smoothing_;
  std::map<AgentId, Track> tracks_;
};

}  // namespace swarm_evade
