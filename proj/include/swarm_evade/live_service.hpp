#pragma once

#include "swarm_evade/scenario.hpp"
#include "swarm_evade/sim_engine.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace swarm_evade {

// {type:"state", t, agents:[{id,x,y,mode}], interferers:[{id,x,y}], events:[{t,kind,agent}]}
// Interferers that have left the world are omitted.
nlohmann::json frameJson(const Engine& engine, std::span<const RunEvent> events);
std::string encodeFrame(const Engine& engine, std::span<const RunEvent> events);
std::string errorReply(std::string_view reason);

using ClientId = std::uint64_t;

inline constexpr double kMaxFrameRate = 20.0;    // [frames/s]
inline constexpr double kKeepAlivePeriod = 0.5;  // [s] wall time between paused frames

struct LiveCommand {
  enum class Kind { IntruderVel, Pause, Resume, Reset };
  Kind kind = Kind::Pause;
  AgentId interferer;  // IntruderVel target
  Vec3 velocity = Vec3::Zero();
  std::optional<Scenario> scenario;  // Reset; empty means the served scenario
};

// The simulation owner of the live mode. Transport code hands it raw client
// text through submit() and calls tick() once per simulation step of wall
// time; commands only take effect at the start of the next tick.
//
// Control commands take the pilot lock: the first client to send one becomes
// the pilot, and the lock is released when that client disconnects.
class LiveSimulation {
 public:
  explicit LiveSimulation(Scenario scenario);

  // Returns an error reply for invalid input; state is left untouched.
  std::optional<std::string> submit(ClientId client, std::string_view text);
  void disconnect(ClientId client);

  // Applies queued commands, then advances one step unless paused or the
  // run has reached its duration. Returns a frame when one is due.
  std::optional<std::string> tick();

  // Frame describing the current state without consuming pending events.
  std::string snapshotFrame() const;

  bool paused() const { return paused_; }
  std::optional<ClientId> pilot() const { return pilot_; }
  const Engine& engine() const { return *engine_; }
  const Scenario& scenario() const { return active_; }
  std::string scenarioJson() const;
  int frameStride() const { return frameStride_; }
  int keepAliveTicks() const { return keepAliveTicks_; }
  std::size_t pendingCommands() const { return queue_.size(); }

 private:
  LiveCommand parseCommand(const nlohmann::json& j) const;
  void apply(const LiveCommand& cmd);
  void restart(Scenario scenario);
  std::string takeFrame();

  Scenario served_;
  Scenario active_;
  std::unique_ptr<Engine> engine_;
  std::deque<LiveCommand> queue_;
  std::optional<ClientId> pilot_;
  bool paused_ = false;
  int frameStride_ = 1;
  int keepAliveTicks_ = 1;
  long stepsSinceFrame_ = 0;
  long idleTicks_ = 0;
  std::size_t eventCursor_ = 0;
  bool resetPending_ = false;
};

struct ServeOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  double realTimeFactor = 1.0;
  bool stopOnSignal = false;  // SIGINT/SIGTERM end run()
};

// HTTP GET /scenario and WebSocket /ws on one port, single-threaded.
class LiveServer {
 public:
  LiveServer(Scenario scenario, ServeOptions options);
  ~LiveServer();
  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  unsigned short port() const;
  // Blocks until stop() is called from another thread.
  void run();
  void stop();

  struct Impl;  // defined in the implementation file

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace swarm_evade
