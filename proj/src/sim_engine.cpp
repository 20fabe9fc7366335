#include "swarm_evade/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>

namespace swarm_evade {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vec3 clampNorm(const Vec3& v, double limit) {
  const double n = v.norm();
  return n > limit ? Vec3(v * (limit / n)) : v;
}

Vec3 seekVelocity(const Vec3& from, const Vec3& to, double maxSpeed) {
  const Vec3 diff = to - from;
  const double d = diff.norm();
  if (d < 1e-12) return Vec3::Zero();
  return diff / d * std::min(maxSpeed, kArrivalGain * d);
}

}  // namespace

Kinematics applyMotion(const Kinematics& state, const Vec3& desired, double dt,
                       const MotionLimits& limits) {
  const Vec3 commanded = (desired - state.position) / dt - limits.damping * dt * state.velocity;
  Vec3 dv = commanded - state.velocity;
  if (limits.planar) dv.z() = 0.0;
  dv = clampNorm(dv, limits.a_max * dt);
  Kinematics next;
  next.velocity = clampNorm(state.velocity + dv, limits.v_max);
  if (limits.planar) next.velocity.z() = 0.0;
  next.position = state.position + next.velocity * dt;
  return next;
}

Vec3 pursuitVelocity(const InterfererState& interferer, std::span<const AgentState> agents,
                     double time) {
  if (!interferer.present || agents.empty()) return Vec3::Zero();
  if (interferer.policy.stopTime && time >= *interferer.policy.stopTime) return Vec3::Zero();
  Vec3 target = Vec3::Zero();
  if (interferer.policy.target == PursuitTarget::Centroid) {
    for (const auto& a : agents) target += a.position;
    target /= static_cast<double>(agents.size());
  } else {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : agents) {
      const double d = (a.position - interferer.position).norm();
      if (d < best) {
        best = d;
        target = a.position;
      }
    }
  }
  return seekVelocity(interferer.position, target, interferer.maxSpeed);
}

SenseResult sense(const AgentState& self, std::span<const AgentState> agents,
                  std::span<const InterfererState> interferers, const SensingConfig& cfg,
                  double r_B, double interfererRangeScale, Rng& rng) {
  SenseResult out;
  const double neighborReach = std::min(cfg.neighborRange, r_B);
  for (const auto& other : agents) {
    if (other.id == self.id) continue;
    const Vec3 rel = other.position - self.position;
    if (rel.norm() <= neighborReach) {
      out.neighbors.push_back({rel, Vec3::Zero(), ObservationKind::Neighbor, other.id});
    }
  }
  const double cosHalf = std::cos(cfg.fovHalfAngle);
  for (const auto& r : interferers) {
    if (!r.present) continue;
    const Vec3 rel = r.position - self.position;
    const double d = rel.norm();
    if (d > cfg.interfererRange * interfererRangeScale) continue;
    if (cfg.fovHalfAngle < std::numbers::pi && d > 0 && self.heading.dot(rel) / d < cosHalf) {
      continue;
    }
    if (cfg.detectionProbability < 1.0 && !rng.bernoulli(cfg.detectionProbability)) continue;
    out.interferers.push_back({rel, Vec3::Zero(), ObservationKind::Interferer, r.id});
  }
  return out;
}

Engine::Engine(Scenario scenario)
    : scenario_(std::move(scenario)),
      network_([this] {
        scenario_.validate();
        NetConfig cfg = scenario_.net;
        cfg.seed = splitmix64(scenario_.seed ^ splitmix64(scenario_.net.seed + 1));
        return cfg;
      }()),
      senseRng_(splitmix64(scenario_.seed)) {
  auto specs = scenario_.agents;
  std::sort(specs.begin(), specs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  auto roster = std::make_shared<std::set<AgentId>>();
  for (const auto& s : specs) roster->insert(s.id);

  const auto& p = scenario_.params;
  for (const auto& s : specs) {
    ProtocolConfig pc{s.id, p.d_E1, p.d_E2, scenario_.protocol.rebroadcastPeriod,
                      scenario_.protocol.originTimeout, roster};
    AgentState st{s.id, s.position, s.velocity, Mode::Normal, Vec3::UnitX()};
    if (s.heading && s.heading->norm() > 0) {
      st.heading = s.heading->normalized();
    } else if (s.velocity.norm() > kHeadingMinSpeed) {
      st.heading = s.velocity.normalized();
    }
    if (scenario_.planar) st.velocity.z() = 0.0;
    agents_.push_back(AgentRuntime{st, EvasionProtocol(pc),
                                   VelocityEstimator<double>(scenario_.velocitySmoothing), {}, {},
                                   std::nullopt, {}, false});
    record_.agentIds.push_back(s.id);
  }

  auto rspecs = scenario_.interferers;
  std::sort(rspecs.begin(), rspecs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& r : rspecs) {
    InterfererState st;
    st.id = r.id;
    st.position = r.position;
    st.velocity = r.velocity;
    st.policy = r.policy;
    st.maxSpeed = scenario_.interfererMaxSpeed(r.policy);
    st.velocity = clampNorm(st.velocity, st.maxSpeed);
    if (r.policy.removeTime && *r.policy.removeTime <= 0.0) st.present = false;
    interferers_.push_back(st);
    record_.interfererIds.push_back(r.id);
  }

  senseAndCommunicate();
  recordFrame();
}

long Engine::totalSteps() const {
  return static_cast<long>(std::llround(scenario_.duration / scenario_.dt));
}

std::vector<AgentState> Engine::agentStates() const {
  std::vector<AgentState> out;
  out.reserve(agents_.size());
  for (const auto& a : agents_) out.push_back(a.state);
  return out;
}

Vec3 Engine::controlForce(const AgentRuntime& a) const {
  const auto& p = scenario_.params;
  const auto& obs = a.observed;
  if (scenario_.evasionEnabled) {
    return totalForce<double>(a.state.mode, obs.neighbors, obs.interferers, p, &a.lastDirections);
  }
  // Baseline: the interferer is just one more neighbor in the separation mean.
  SwarmParams<double> q = p;
  if (scenario_.enlargedRange) {
    q.d_max *= kEnlargedScale;
    q.d_S *= kEnlargedScale;
    q.k_1S *= kEnlargedScale;
    q.k_2S *= kEnlargedScale;
  }
  Vec3 sep = Vec3::Zero();
  int n = 0;
  auto accumulate = [&](const Observation& o, const SwarmParams<double>& params) {
    const double d = o.relativePosition.norm();
    if (!(d > 0)) return;
    sep += separationProfile(d, params) * (o.relativePosition / d);
    ++n;
  };
  for (const auto& o : obs.neighbors) accumulate(o, p);
  for (const auto& o : obs.interferers) accumulate(o, q);
  if (n > 0) sep = -sep / static_cast<double>(n);
  return cohesionForce<double>(obs.neighbors, p) + sep + alignmentForce<double>(obs.neighbors, p);
}

void Engine::step() {
  const double dt = scenario_.dt;
  const auto& p = scenario_.params;
  const std::vector<AgentState> snapshot = agentStates();

  if (!scenario_.frozen) {
    std::vector<Kinematics> next;
    next.reserve(agents_.size());
    const MotionLimits limits{p.v_max, p.a_max, p.damping, scenario_.planar};
    for (const auto& a : agents_) {
      Vec3 force = controlForce(a);
      if (scenario_.planar) force.z() = 0.0;
      const Vec3 desired = desiredPosition<double>(a.state.position, a.state.velocity, force, dt, p);
      next.push_back(applyMotion({a.state.position, a.state.velocity}, desired, dt, limits));
    }
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      AgentState& s = agents_[i].state;
      s.position = next[i].position;
      s.velocity = next[i].velocity;
      if (s.velocity.norm() > kHeadingMinSpeed) s.heading = s.velocity.normalized();
    }
  }

  for (auto& r : interferers_) {
    if (!r.present) continue;
    Vec3 cmd = Vec3::Zero();
    switch (r.policy.kind) {
      case PolicyKind::Pursuit:
        cmd = pursuitVelocity(r, snapshot, time());
        break;
      case PolicyKind::Scripted: {
        const auto& wps = r.policy.waypoints;
        while (r.waypoint < wps.size() && (wps[r.waypoint] - r.position).norm() < 0.1) {
          ++r.waypoint;
        }
        if (r.waypoint < wps.size() &&
            !(r.policy.stopTime && time() >= *r.policy.stopTime)) {
          cmd = seekVelocity(r.position, wps[r.waypoint], r.maxSpeed);
          // Cruise at full speed until the final waypoint.
          if (r.waypoint + 1 < wps.size() && cmd.norm() > 0) cmd = cmd.normalized() * r.maxSpeed;
        }
        break;
      }
      case PolicyKind::External:
        cmd = r.command.value_or(Vec3::Zero());
        break;
    }
    const MotionLimits limits{r.maxSpeed, p.a_max, 0.0, scenario_.planar};
    const Kinematics k = applyMotion({r.position, r.velocity}, r.position + cmd * dt, dt, limits);
    r.position = k.position;
    r.velocity = k.velocity;
  }

  ++step_;
  for (auto& r : interferers_) {
    if (r.present && r.policy.removeTime && time() >= *r.policy.removeTime - 1e-9) {
      r.present = false;
      r.velocity = Vec3::Zero();
    }
  }

  senseAndCommunicate();
  recordFrame();
}

void Engine::run() {
  while (!finished()) step();
}

void Engine::senseAndCommunicate() {
  const double now = time();
  const double dt = scenario_.dt;
  const auto& p = scenario_.params;
  const std::vector<AgentState> states = agentStates();
  const double rangeScale = scenario_.enlargedRange ? kEnlargedScale : 1.0;

  for (auto& a : agents_) {
    SenseResult r = sense(a.state, states, interferers_, scenario_.sensing, p.r_B, rangeScale,
                          senseRng_);
    if (a.forcedInterferer) r.interferers = {*a.forcedInterferer};
    for (auto& o : r.neighbors) {
      o.estimatedVelocity = a.estimator.update(o.sourceId, a.state.position + o.relativePosition, dt);
    }
    bool detecting = false;
    for (auto& o : r.interferers) {
      o.estimatedVelocity = a.estimator.update(o.sourceId, a.state.position + o.relativePosition, dt);
      const double d = o.relativePosition.norm();
      if (d > 0) a.lastDirections[o.sourceId] = o.relativePosition / d;
      if (d < p.d_E1) detecting = true;
      a.tracks[o.sourceId] = {now, a.state.position + o.relativePosition};
    }
    a.estimator.endFrame();
    for (auto it = a.tracks.begin(); it != a.tracks.end();) {
      const InterfererTrack& tr = it->second;
      if (now - tr.lastSeen > scenario_.sensing.trackHold + 1e-9) {
        it = a.tracks.erase(it);
        continue;
      }
      if (tr.lastSeen < now) {
        r.interferers.push_back(
            {tr.position - a.state.position, Vec3::Zero(), ObservationKind::Interferer, it->first});
      }
      ++it;
    }
    if (detecting && !a.detecting) {
      record_.events.push_back({now, EventKind::Detection, a.state.id, a.state.mode});
    }
    a.detecting = detecting;
    a.observed = std::move(r);
  }

  if (!scenario_.evasionEnabled) return;

  std::map<AgentId, Vec3> positions;
  std::map<AgentId, std::size_t> index;
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    positions[agents_[i].state.id] = agents_[i].state.position;
    index[agents_[i].state.id] = i;
  }
  network_.rebuild(positions);

  for (auto& a : agents_) {
    for (const auto& msg : a.protocol.onSensorUpdate(a.observed.interferers, now)) {
      network_.send(a.state.id, msg, step_);
    }
  }
  for (const auto& m : network_.deliver(step_)) {
    auto it = index.find(m.receiverId);
    if (it == index.end()) continue;
    auto& receiver = agents_[it->second];
    const MessageOutcome out = receiver.protocol.onMessage(m.payload, now);
    if (out.droppedUnknownOrigin) {
      std::clog << "dropped alert from unknown origin '" << m.payload.originId << "'\n";
    }
    if (out.forward) network_.send(receiver.state.id, *out.forward, step_);
    if (out.correction) network_.send(receiver.state.id, *out.correction, step_);
  }
  for (auto& a : agents_) {
    if (auto msg = a.protocol.periodicRebroadcast(now)) network_.send(a.state.id, *msg, step_);
    a.protocol.expireStale(now);
    if (a.protocol.mode() != a.state.mode) {
      a.state.mode = a.protocol.mode();
      record_.events.push_back({now, EventKind::ModeChange, a.state.id, a.state.mode});
    }
  }
}

void Engine::recordFrame() {
  Frame f;
  f.time = time();
  for (const auto& a : agents_) {
    f.positions.push_back(a.state.position);
    f.modes.push_back(a.state.mode);
  }
  for (const auto& r : interferers_) {
    f.interferers.push_back(r.present ? std::optional<Vec3>(r.position) : std::nullopt);
  }
  record_.frames.push_back(std::move(f));
}

InterfererState* Engine::findInterferer(const AgentId& id) {
  for (auto& r : interferers_) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

Vec3 Engine::commandInterferer(const AgentId& id, const Vec3& velocity) {
  InterfererState* r = findInterferer(id);
  if (r == nullptr) throw std::invalid_argument("unknown interferer '" + id + "'");
  if (r->policy.kind != PolicyKind::External) {
    throw std::invalid_argument("interferer '" + id + "' is not externally commanded");
  }
  Vec3 v = velocity;
  if (!v.allFinite()) v = Vec3::Zero();
  if (scenario_.planar) v.z() = 0.0;
  r->command = clampNorm(v, r->maxSpeed);
  return *r->command;
}

void Engine::setInterfererPresent(const AgentId& id, bool present) {
  InterfererState* r = findInterferer(id);
  if (r == nullptr) throw std::invalid_argument("unknown interferer '" + id + "'");
  r->present = present;
  if (!present) r->velocity = Vec3::Zero();
}

void Engine::forceInterfererObservation(const AgentId& agent, std::optional<Observation> obs) {
  for (auto& a : agents_) {
    if (a.state.id == agent) {
      a.forcedInterferer = std::move(obs);
      return;
    }
  }
  throw std::invalid_argument("unknown agent '" + agent + "'");
}

}  // namespace swarm_evade
