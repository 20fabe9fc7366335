#include "swarm_evade/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace swarm_evade {

namespace {

using json = nlohmann::json;
using ParamMember = double SwarmParams<double>::*;

const std::vector<std::pair<const char*, ParamMember>>& paramTable() {
  static const std::vector<std::pair<const char*, ParamMember>> table{
      {"l", &SwarmParams<double>::l},
      {"l_min", &SwarmParams<double>::l_min},
      {"d_min", &SwarmParams<double>::d_min},
      {"d_C", &SwarmParams<double>::d_C},
      {"k_1C", &SwarmParams<double>::k_1C},
      {"k_2C", &SwarmParams<double>::k_2C},
      {"k_3C", &SwarmParams<double>::k_3C},
      {"d_max", &SwarmParams<double>::d_max},
      {"d_S", &SwarmParams<double>::d_S},
      {"k_1S", &SwarmParams<double>::k_1S},
      {"k_2S", &SwarmParams<double>::k_2S},
      {"k_A", &SwarmParams<double>::k_A},
      {"d_E1", &SwarmParams<double>::d_E1},
      {"d_E2", &SwarmParams<double>::d_E2},
      {"k_E", &SwarmParams<double>::k_E},
      {"k_F", &SwarmParams<double>::k_F},
      {"k_V", &SwarmParams<double>::k_V},
      {"d_F", &SwarmParams<double>::d_F},
      {"passive_gain_scale", &SwarmParams<double>::passiveGainScale},
      {"r_B", &SwarmParams<double>::r_B},
      {"v_max", &SwarmParams<double>::v_max},
      {"a_max", &SwarmParams<double>::a_max},
      {"damping", &SwarmParams<double>::damping},
  };
  return table;
}

void requireKeys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

double num(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + " must be finite");
  return v;
}

bool boolean(const json& j, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError(where + " must be a boolean");
  return j.get<bool>();
}

std::string str(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + " must be a string");
  return j.get<std::string>();
}

Vec3 vec(const json& j, const std::string& where) {
  if (!j.is_array() || (j.size() != 2 && j.size() != 3)) {
    throw ConfigError(where + " must be an array of 2 or 3 numbers");
  }
  Vec3 v = Vec3::Zero();
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = num(j[i], where);
  return v;
}

std::uint64_t seedValue(const json& j, const std::string& where) {
  // Small literals parse as signed integers, so accept any non-negative one.
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
  throw ConfigError(where + " must be a non-negative integer");
}

json vecJson(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

InterfererPolicy parsePolicy(const json& j, const std::string& where) {
  requireKeys(j, where.c_str(),
              {"kind", "max_speed", "target", "stop_time", "remove_time", "waypoints"});
  InterfererPolicy p;
  if (j.contains("kind")) {
    const std::string kind = str(j["kind"], where + ".kind");
    if (kind == "pursuit") p.kind = PolicyKind::Pursuit;
    else if (kind == "scripted") p.kind = PolicyKind::Scripted;
    else if (kind == "external") p.kind = PolicyKind::External;
    else throw ConfigError(where + ".kind must be pursuit, scripted or external");
  }
  if (j.contains("max_speed")) p.maxSpeed = num(j["max_speed"], where + ".max_speed");
  if (j.contains("target")) {
    const std::string t = str(j["target"], where + ".target");
    if (t == "centroid") p.target = PursuitTarget::Centroid;
    else if (t == "nearest") p.target = PursuitTarget::Nearest;
    else throw ConfigError(where + ".target must be centroid or nearest");
  }
  if (j.contains("stop_time")) p.stopTime = num(j["stop_time"], where + ".stop_time");
  if (j.contains("remove_time")) p.removeTime = num(j["remove_time"], where + ".remove_time");
  if (j.contains("waypoints")) {
    if (!j["waypoints"].is_array()) throw ConfigError(where + ".waypoints must be an array");
    for (const auto& w : j["waypoints"]) p.waypoints.push_back(vec(w, where + ".waypoints[]"));
  }
  return p;
}

json policyJson(const InterfererPolicy& p) {
  json j;
  j["kind"] = p.kind == PolicyKind::Pursuit    ? "pursuit"
              : p.kind == PolicyKind::Scripted ? "scripted"
                                               : "external";
  if (p.maxSpeed) j["max_speed"] = *p.maxSpeed;
  j["target"] = p.target == PursuitTarget::Centroid ? "centroid" : "nearest";
  if (p.stopTime) j["stop_time"] = *p.stopTime;
  if (p.removeTime) j["remove_time"] = *p.removeTime;
  if (!p.waypoints.empty()) {
    j["waypoints"] = json::array();
    for (const auto& w : p.waypoints) j["waypoints"].push_back(vecJson(w));
  }
  return j;
}

}  // namespace

void SensingConfig::validate() const {
  if (!(neighborRange > 0 && interfererRange > 0)) throw ConfigError("sensing ranges must be > 0");
  if (!(fovHalfAngle > 0 && fovHalfAngle <= std::numbers::pi)) {
    throw ConfigError("sensing.fov_half_angle must be in (0, pi]");
  }
  if (!(detectionProbability >= 0 && detectionProbability <= 1)) {
    throw ConfigError("sensing.detection_probability must be in [0, 1]");
  }
  if (!(trackHold >= 0 && std::isfinite(trackHold))) {
    throw ConfigError("sensing.track_hold must be >= 0");
  }
}

void setParam(SwarmParams<double>& p, const std::string& name, double value) {
  for (const auto& [key, member] : paramTable()) {
    if (name == key) {
      p.*member = value;
      return;
    }
  }
  throw ConfigError("unknown swarm parameter '" + name + "'");
}

void Scenario::validate() const {
  try {
    params.validate();
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  sensing.validate();
  if (!(dt > 0)) throw ConfigError("dt must be > 0");
  if (!(duration >= 0)) throw ConfigError("duration_s must be >= 0");
  if (!(velocitySmoothing > 0 && velocitySmoothing <= 1)) {
    throw ConfigError("velocity_smoothing must be in (0, 1]");
  }
  if (!(protocol.rebroadcastPeriod > 0 && protocol.originTimeout > 0)) {
    throw ConfigError("protocol periods must be > 0");
  }
  std::set<AgentId> ids;
  for (const auto& a : agents) {
    if (a.id.empty() || a.id.size() > kMaxOriginBytes) {
      throw ConfigError("agent id must be 1.." + std::to_string(kMaxOriginBytes) + " bytes");
    }
    if (!ids.insert(a.id).second) throw ConfigError("duplicate id '" + a.id + "'");
  }
  for (const auto& r : interferers) {
    if (r.id.empty()) throw ConfigError("interferer id must not be empty");
    if (!ids.insert(r.id).second) throw ConfigError("duplicate id '" + r.id + "'");
    const double vmax = interfererMaxSpeed(r.policy);
    if (!(vmax > 0) || vmax > kInterfererSpeedRatio * params.v_max + 1e-12) {
      throw ConfigError("interferer '" + r.id + "' max_speed must be in (0, 0.9 * v_max]");
    }
    if (r.policy.kind == PolicyKind::Scripted && r.policy.waypoints.empty()) {
      throw ConfigError("scripted interferer '" + r.id + "' needs waypoints");
    }
  }
}

Scenario parseScenario(const json& j) {
  requireKeys(j, "scenario",
              {"agents", "interferers", "params", "net", "sensing", "protocol", "dt",
               "duration_s", "evasion_enabled", "enlarged_range", "frozen", "planar", "seed",
               "velocity_smoothing", "out_dir"});
  Scenario s;
  if (!j.contains("agents") || !j["agents"].is_array()) {
    throw ConfigError("scenario.agents must be an array");
  }
  for (const auto& a : j["agents"]) {
    requireKeys(a, "agent", {"id", "position", "velocity", "heading"});
    AgentSpec spec;
    if (!a.contains("id") || !a.contains("position")) {
      throw ConfigError("agent needs id and position");
    }
    spec.id = str(a["id"], "agent.id");
    spec.position = vec(a["position"], "agent.position");
    if (a.contains("velocity")) spec.velocity = vec(a["velocity"], "agent.velocity");
    if (a.contains("heading")) spec.heading = vec(a["heading"], "agent.heading");
    s.agents.push_back(std::move(spec));
  }
  if (j.contains("interferers")) {
    if (!j["interferers"].is_array()) throw ConfigError("scenario.interferers must be an array");
    for (const auto& r : j["interferers"]) {
      requireKeys(r, "interferer", {"id", "position", "velocity", "policy"});
      InterfererSpec spec;
      if (!r.contains("id") || !r.contains("position")) {
        throw ConfigError("interferer needs id and position");
      }
      spec.id = str(r["id"], "interferer.id");
      spec.position = vec(r["position"], "interferer.position");
      if (r.contains("velocity")) spec.velocity = vec(r["velocity"], "interferer.velocity");
      if (r.contains("policy")) spec.policy = parsePolicy(r["policy"], "interferer.policy");
      s.interferers.push_back(std::move(spec));
    }
  }
  if (j.contains("params")) {
    const json& p = j["params"];
    if (!p.is_object()) throw ConfigError("scenario.params must be an object");
    for (const auto& [key, value] : p.items()) setParam(s.params, key, num(value, "params." + key));
  }
  if (j.contains("net")) {
    const json& n = j["net"];
    requireKeys(n, "net",
                {"comm_range", "hop_latency", "drop_probability", "seed", "min_send_interval"});
    if (n.contains("comm_range")) s.net.commRange = num(n["comm_range"], "net.comm_range");
    if (n.contains("hop_latency")) {
      if (!n["hop_latency"].is_number_integer()) throw ConfigError("net.hop_latency must be int");
      s.net.hopLatency = n["hop_latency"].get<int>();
    }
    if (n.contains("drop_probability")) {
      s.net.dropProbability = num(n["drop_probability"], "net.drop_probability");
    }
    if (n.contains("seed")) s.net.seed = seedValue(n["seed"], "net.seed");
    if (n.contains("min_send_interval")) {
      if (!n["min_send_interval"].is_number_integer()) {
        throw ConfigError("net.min_send_interval must be int");
      }
      s.net.minSendInterval = n["min_send_interval"].get<int>();
    }
  }
  if (j.contains("sensing")) {
    const json& c = j["sensing"];
    requireKeys(c, "sensing",
                {"neighbor_range", "interferer_range", "fov_half_angle", "detection_probability",
                 "track_hold"});
    if (c.contains("neighbor_range")) {
      s.sensing.neighborRange = num(c["neighbor_range"], "sensing.neighbor_range");
    }
    if (c.contains("interferer_range")) {
      s.sensing.interfererRange = num(c["interferer_range"], "sensing.interferer_range");
    }
    if (c.contains("fov_half_angle")) {
      s.sensing.fovHalfAngle = num(c["fov_half_angle"], "sensing.fov_half_angle");
    }
    if (c.contains("detection_probability")) {
      s.sensing.detectionProbability =
          num(c["detection_probability"], "sensing.detection_probability");
    }
    if (c.contains("track_hold")) s.sensing.trackHold = num(c["track_hold"], "sensing.track_hold");
  }
  if (j.contains("protocol")) {
    const json& c = j["protocol"];
    requireKeys(c, "protocol", {"rebroadcast_period", "origin_timeout"});
    if (c.contains("rebroadcast_period")) {
      s.protocol.rebroadcastPeriod = num(c["rebroadcast_period"], "protocol.rebroadcast_period");
    }
    if (c.contains("origin_timeout")) {
      s.protocol.originTimeout = num(c["origin_timeout"], "protocol.origin_timeout");
    }
  }
  if (j.contains("dt")) s.dt = num(j["dt"], "dt");
  if (j.contains("duration_s")) s.duration = num(j["duration_s"], "duration_s");
  if (j.contains("evasion_enabled")) s.evasionEnabled = boolean(j["evasion_enabled"], "evasion_enabled");
  if (j.contains("enlarged_range")) s.enlargedRange = boolean(j["enlarged_range"], "enlarged_range");
  if (j.contains("frozen")) s.frozen = boolean(j["frozen"], "frozen");
  if (j.contains("planar")) s.planar = boolean(j["planar"], "planar");
  if (j.contains("velocity_smoothing")) {
    s.velocitySmoothing = num(j["velocity_smoothing"], "velocity_smoothing");
  }
  if (j.contains("seed")) s.seed = seedValue(j["seed"], "seed");
  if (j.contains("out_dir")) s.outDir = str(j["out_dir"], "out_dir");
  s.validate();
  return s;
}

Scenario parseScenarioText(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return parseScenario(j);
}

Scenario loadScenario(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read scenario " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parseScenarioText(ss.str());
}

json toJson(const Scenario& s) {
  json j;
  j["agents"] = json::array();
  for (const auto& a : s.agents) {
    json aj{{"id", a.id}, {"position", vecJson(a.position)}, {"velocity", vecJson(a.velocity)}};
    if (a.heading) aj["heading"] = vecJson(*a.heading);
    j["agents"].push_back(aj);
  }
  j["interferers"] = json::array();
  for (const auto& r : s.interferers) {
    j["interferers"].push_back({{"id", r.id},
                                {"position", vecJson(r.position)},
                                {"velocity", vecJson(r.velocity)},
                                {"policy", policyJson(r.policy)}});
  }
  json params;
  for (const auto& [key, member] : paramTable()) params[key] = s.params.*member;
  j["params"] = params;
  j["net"] = {{"comm_range", s.net.commRange},
              {"hop_latency", s.net.hopLatency},
              {"drop_probability", s.net.dropProbability},
              {"seed", s.net.seed},
              {"min_send_interval", s.net.minSendInterval}};
  j["sensing"] = {{"neighbor_range", s.sensing.neighborRange},
                  {"interferer_range", s.sensing.interfererRange},
                  {"fov_half_angle", s.sensing.fovHalfAngle},
                  {"detection_probability", s.sensing.detectionProbability},
                  {"track_hold", s.sensing.trackHold}};
  j["protocol"] = {{"rebroadcast_period", s.protocol.rebroadcastPeriod},
                   {"origin_timeout", s.protocol.originTimeout}};
  j["dt"] = s.dt;
  j["duration_s"] = s.duration;
  j["evasion_enabled"] = s.evasionEnabled;
  j["enlarged_range"] = s.enlargedRange;
  j["frozen"] = s.frozen;
  j["planar"] = s.planar;
  j["velocity_smoothing"] = s.velocitySmoothing;
  j["seed"] = s.seed;
  if (s.outDir) j["out_dir"] = *s.outDir;
  return j;
}

}  // namespace swarm_evade
