#pragma once

#include "swarm_evade/swarm_core.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace swarm_evade {

enum class EventKind { Detection, ModeChange, MessageSent };

inline const char* toString(EventKind k) {
  switch (k) {
    case EventKind::Detection: return "detection";
    case EventKind::ModeChange: return "mode_change";
    case EventKind::MessageSent: return "message_sent";
  }
  return "?";
}

struct RunEvent {
  double time = 0.0;
  EventKind kind = EventKind::Detection;
  AgentId agent;
  Mode mode = Mode::Normal;  // ModeChange only
};

struct Frame {
  double time = 0.0;
  std::vector<Vec3> positions;                      // parallel to RunRecord::agentIds
  std::vector<Mode> modes;
  std::vector<std::optional<Vec3>> interferers;    // nullopt while absent
};

struct RunRecord {
  std::vector<AgentId> agentIds;
  std::vector<AgentId> interfererIds;
  std::vector<Frame> frames;
  std::vector<RunEvent> events;
};

struct DistanceStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct FrameStats {
  std::optional<DistanceStats> agents;    // needs >= 2 agents
  std::optional<DistanceStats> intruder;  // needs >= 1 present interferer
};

FrameStats frameStats(const Frame& frame);
std::vector<FrameStats> distanceStats(const RunRecord& record);

struct EventTimes {
  std::optional<double> t_s;
  std::optional<double> t_d;
  std::optional<double> t_e;

  std::optional<double> t_ed() const {
    return t_e && t_d ? std::optional<double>(*t_e - *t_d) : std::nullopt;
  }
  std::optional<double> t_ds() const {
    return t_d && t_s ? std::optional<double>(*t_d - *t_s) : std::nullopt;
  }
};

EventTimes extractEventTimes(const RunRecord& record, double d_E1);

struct RunSummary {
  EventTimes events;
  std::optional<double> minInterAgentOverall;
  std::optional<double> minIntruderOverall;
};

RunSummary summarize(const RunRecord& record, double d_E1);
std::string summaryJson(const RunSummary& summary);

std::string csvHeader();
std::string toCsv(const RunRecord& record);
void exportCsv(const RunRecord& record, const std::filesystem::path& path);

struct CsvRow {
  double time = 0.0;
  AgentId agentId;
  Vec3 position = Vec3::Zero();
  Mode mode = Mode::Normal;
  std::optional<double> minDistAgents, meanDistAgents, minDistIntruder, meanDistIntruder;
};

std::vector<CsvRow> parseCsv(const std::string& text);

// Minimal SVG line chart of the per-step distance series.
std::string distanceChartSvg(const RunRecord& record, double d_E1);

}  // namespace swarm_evade
