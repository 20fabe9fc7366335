#include "swarm_evade/evasion_protocol.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace swarm_evade {

std::array<std::uint8_t, kAlertWireSize> encodeAlert(const AlertMessage& msg) {
  if (msg.originId.size() > kMaxOriginBytes || msg.originId.empty()) {
    throw std::invalid_argument("origin id must be 1.." + std::to_string(kMaxOriginBytes) +
                                " bytes");
  }
  std::array<std::uint8_t, kAlertWireSize> out{};
  std::memcpy(out.data(), msg.originId.data(), msg.originId.size());
  const auto bits = std::bit_cast<std::uint64_t>(msg.timestamp);
  for (int i = 0; i < 8; ++i) out[kMaxOriginBytes + i] = static_cast<std::uint8_t>(bits >> (8 * i));
  out[kMaxOriginBytes + 8] = msg.interfererPresent ? 1 : 0;
  return out;
}

AlertMessage decodeAlert(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kAlertWireSize) throw std::invalid_argument("alert record has wrong size");
  AlertMessage msg;
  const auto* begin = reinterpret_cast<const char*>(bytes.data());
  msg.originId.assign(begin, strnlen(begin, kMaxOriginBytes));
  if (msg.originId.empty()) throw std::invalid_argument("alert record has empty origin");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes[kMaxOriginBytes + i]} << (8 * i);
  msg.timestamp = std::bit_cast<double>(bits);
  const std::uint8_t flag = bytes[kMaxOriginBytes + 8];
  if (flag > 1) throw std::invalid_argument("alert presence byte must be 0 or 1");
  msg.interfererPresent = flag == 1;
  return msg;
}

std::string toLogLine(const AlertMessage& msg) {
  std::ostringstream os;
  os.precision(17);
  os << "t=" << msg.timestamp << " origin=" << msg.originId
     << " present=" << (msg.interfererPresent ? 1 : 0);
  return os.str();
}

AlertMessage parseLogLine(const std::string& line) {
  std::istringstream is(line);
  std::string t, origin, present;
  if (!(is >> t >> origin >> present) || t.rfind("t=", 0) != 0 ||
      origin.rfind("origin=", 0) != 0 || present.rfind("present=", 0) != 0) {
    throw std::invalid_argument("malformed alert log line: " + line);
  }
  AlertMessage msg;
  std::size_t used = 0;
  msg.timestamp = std::stod(t.substr(2), &used);
  if (used != t.size() - 2) throw std::invalid_argument("malformed timestamp: " + t);
  msg.originId = origin.substr(7);
  const std::string flag = present.substr(8);
  if (flag != "0" && flag != "1") throw std::invalid_argument("malformed presence flag: " + flag);
  msg.interfererPresent = flag == "1";
  return msg;
}

EvasionProtocol::EvasionProtocol(ProtocolConfig cfg) : cfg_(std::move(cfg)) {
  if (!(cfg_.d_E1 > 0 && cfg_.d_E1 <= cfg_.d_E2)) {
    throw ParameterError("protocol requires 0 < d_E1 <= d_E2");
  }
  if (!(cfg_.rebroadcastPeriod > 0)) throw ParameterError("rebroadcast period must be positive");
  if (!(cfg_.originTimeout > 0)) throw ParameterError("origin timeout must be positive");
}

void EvasionProtocol::updateMode() {
  if (detecting_) {
    mode_ = Mode::Active;
  } else {
    mode_ = activeOrigins_.empty() ? Mode::Normal : Mode::Passive;
  }
}

bool EvasionProtocol::consistent() const {
  if (mode_ == Mode::Active) return detecting_;
  if (mode_ == Mode::Passive) return !detecting_ && !activeOrigins_.empty();
  return !detecting_ && activeOrigins_.empty();
}

std::vector<AlertMessage> EvasionProtocol::onSensorUpdate(std::span<const Observation> interferers,
                                                          double now) {
  double nearest = std::numeric_limits<double>::infinity();
  for (const auto& o : interferers) nearest = std::min(nearest, o.relativePosition.norm());

  std::vector<AlertMessage> out;
  if (!detecting_ && nearest < cfg_.d_E1) {
    detecting_ = true;
    lastOwnBroadcast_ = now;
    out.push_back({cfg_.self, now, true});
  } else if (detecting_ && !(nearest <= cfg_.d_E2)) {
    detecting_ = false;
    out.push_back({cfg_.self, now, false});
  }
  updateMode();
  return out;
}

MessageOutcome EvasionProtocol::onMessage(const AlertMessage& msg, double now) {
  MessageOutcome outcome;
  if (cfg_.roster && !cfg_.roster->contains(msg.originId)) {
    outcome.droppedUnknownOrigin = true;
    return outcome;
  }

  if (msg.originId == cfg_.self) {
    // Someone is still relaying an old report of ours.
    if (msg.interfererPresent && !detecting_ && msg.timestamp > lastCorrected_) {
      lastCorrected_ = msg.timestamp;
      outcome.correction = AlertMessage{cfg_.self, now, false};
    }
    return outcome;
  }

  if (auto it = lastSeen_.find(msg.originId); it != lastSeen_.end()) {
    const Seen& seen = it->second;
    if (msg.timestamp < seen.timestamp) return outcome;
    // Equal timestamps: duplicates are dropped, clear beats presence.
    if (msg.timestamp == seen.timestamp && (msg.interfererPresent || !seen.present)) return outcome;
  }

  lastSeen_[msg.originId] = Seen{msg.timestamp, msg.interfererPresent};
  if (msg.interfererPresent) {
    activeOrigins_[msg.originId] = msg.timestamp;
  } else {
    activeOrigins_.erase(msg.originId);
  }
  outcome.forward = msg;
  updateMode();
  return outcome;
}

std::optional<AlertMessage> EvasionProtocol::periodicRebroadcast(double now) {
  // Slack absorbs step*dt rounding so a 1 s period fires every 10 steps at dt=0.1.
  if (!detecting_ || now - lastOwnBroadcast_ + 1e-9 < cfg_.rebroadcastPeriod) return std::nullopt;
  lastOwnBroadcast_ = now;
  return AlertMessage{cfg_.self, now, true};
}

void EvasionProtocol::expireStale(double now) {
  std::erase_if(activeOrigins_,
                [&](const auto& entry) { return now - entry.second > cfg_.originTimeout; });
  updateMode();
}

}  // namespace swarm_evade
