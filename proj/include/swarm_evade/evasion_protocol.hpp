#pragma once

#include "swarm_evade/swarm_core.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace swarm_evade {

struct AlertMessage {
  AgentId originId;
  double timestamp = 0.0;  // simulation time [s]
  bool interfererPresent = false;

  bool operator==(const AlertMessage&) const = default;
};

// Fixed-size wire record: 32-byte NUL-padded origin, little-endian IEEE-754
// double timestamp, one presence byte.
inline constexpr std::size_t kMaxOriginBytes = 32;
inline constexpr std::size_t kAlertWireSize = kMaxOriginBytes + 8 + 1;

std::array<std::uint8_t, kAlertWireSize> encodeAlert(const AlertMessage& msg);
AlertMessage decodeAlert(std::span<const std::uint8_t> bytes);

// `t=<s> origin=<id> present=<0|1>`
std::string toLogLine(const AlertMessage& msg);
AlertMessage parseLogLine(const std::string& line);

struct ProtocolConfig {
  AgentId self;
  double d_E1 = 8.0;
  double d_E2 = 11.0;
  double rebroadcastPeriod = 1.0;
  // Stored names not refreshed within this window are dropped.
  double originTimeout = 3.0;
  // Known agent ids; messages from other origins are dropped. Null accepts any.
  std::shared_ptr<const std::set<AgentId>> roster;
};

struct MessageOutcome {
  std::optional<AlertMessage> forward;
  std::optional<AlertMessage> correction;
  bool droppedUnknownOrigin = false;
};

// Per-agent Normal/Active/Passive state machine driven by local detections
// and alert traffic.
class EvasionProtocol {
 public:
  explicit EvasionProtocol(ProtocolConfig cfg);

  Mode mode() const { return mode_; }
  bool detecting() const { return detecting_; }
  const AgentId& self() const { return cfg_.self; }
  const ProtocolConfig& config() const { return cfg_; }

  // origin -> timestamp of the latest accepted presence report
  const std::map<AgentId, double>& activeOrigins() const { return activeOrigins_; }
  double lastOwnBroadcast() const { return lastOwnBroadcast_; }

  std::vector<AlertMessage> onSensorUpdate(std::span<const Observation> interferers, double now);
  MessageOutcome onMessage(const AlertMessage& msg, double now);
  std::optional<AlertMessage> periodicRebroadcast(double now);
  // Drops stored origins whose latest report is older than originTimeout.
  void expireStale(double now);

  // Mode agrees with (detecting, activeOrigins).
  bool consistent() const;

 private:
  struct Seen {
    double timestamp;
    bool present;
  };

  void updateMode();

  ProtocolConfig cfg_;
  Mode mode_ = Mode::Normal;
  bool detecting_ = false;
  std::map<AgentId, double> activeOrigins_;
  std::map<AgentId, Seen> lastSeen_;
  double lastOwnBroadcast_ = -std::numeric_limits<double>::infinity();
  double lastCorrected_ = -std::numeric_limits<double>::infinity();
};

}  // namespace swarm_evade
