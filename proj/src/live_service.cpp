#include "swarm_evade/live_service.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>

namespace swarm_evade {

using nlohmann::json;

json frameJson(const Engine& engine, std::span<const RunEvent> events) {
  json agents = json::array();
  for (const auto& a : engine.agents()) {
    agents.push_back({{"id", a.state.id},
                      {"x", a.state.position.x()},
                      {"y", a.state.position.y()},
                      {"mode", toString(a.state.mode)}});
  }
  json interferers = json::array();
  for (const auto& r : engine.interferers()) {
    if (!r.present) continue;
    interferers.push_back({{"id", r.id}, {"x", r.position.x()}, {"y", r.position.y()}});
  }
  json ev = json::array();
  for (const auto& e : events) {
    json item = {{"t", e.time}, {"kind", toString(e.kind)}, {"agent", e.agent}};
    if (e.kind == EventKind::ModeChange) item["mode"] = toString(e.mode);
    ev.push_back(std::move(item));
  }
  return {{"type", "state"},
          {"t", engine.time()},
          {"agents", std::move(agents)},
          {"interferers", std::move(interferers)},
          {"events", std::move(ev)}};
}

std::string encodeFrame(const Engine& engine, std::span<const RunEvent> events) {
  return frameJson(engine, events).dump();
}

std::string errorReply(std::string_view reason) {
  return json{{"type", "error"}, {"reason", reason}}.dump();
}

namespace {

void requireKeys(const json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; })) {
      throw std::invalid_argument("unknown field '" + key + "'");
    }
  }
}

double finiteNumber(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw std::invalid_argument(std::string("'") + key + "' must be a number");
  }
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("'") + key + "' must be finite");
  return v;
}

}  // namespace

LiveSimulation::LiveSimulation(Scenario scenario) : served_(std::move(scenario)) {
  restart(served_);
}

void LiveSimulation::restart(Scenario scenario) {
  auto engine = std::make_unique<Engine>(scenario);
  active_ = std::move(scenario);
  engine_ = std::move(engine);
  const double dt = active_.dt;
  frameStride_ = std::max(1, static_cast<int>(std::ceil(1.0 / (kMaxFrameRate * dt) - 1e-9)));
  keepAliveTicks_ = std::max(1, static_cast<int>(std::lround(kKeepAlivePeriod / dt)));
  stepsSinceFrame_ = 0;
  idleTicks_ = 0;
  eventCursor_ = 0;
  resetPending_ = true;
}

LiveCommand LiveSimulation::parseCommand(const json& j) const {
  if (!j.is_object()) throw std::invalid_argument("command must be a JSON object");
  if (!j.contains("type") || !j.at("type").is_string()) {
    throw std::invalid_argument("missing string field 'type'");
  }
  const std::string type = j.at("type").get<std::string>();
  LiveCommand cmd;
  if (type == "intruder_vel") {
    requireKeys(j, {"type", "vx", "vy", "id"});
    cmd.kind = LiveCommand::Kind::IntruderVel;
    cmd.velocity = Vec3(finiteNumber(j, "vx"), finiteNumber(j, "vy"), 0.0);
    std::optional<AgentId> wanted;
    if (j.contains("id")) {
      if (!j.at("id").is_string()) throw std::invalid_argument("'id' must be a string");
      wanted = j.at("id").get<std::string>();
    }
    for (const auto& r : engine_->interferers()) {
      if (r.policy.kind != PolicyKind::External) continue;
      if (!wanted || *wanted == r.id) {
        cmd.interferer = r.id;
        return cmd;
      }
    }
    throw std::invalid_argument(wanted ? "no piloted interferer '" + *wanted + "'"
                                       : std::string("scenario has no piloted interferer"));
  }
  if (type == "pause" || type == "resume") {
    requireKeys(j, {"type"});
    cmd.kind = type == "pause" ? LiveCommand::Kind::Pause : LiveCommand::Kind::Resume;
    return cmd;
  }
  if (type == "reset") {
    requireKeys(j, {"type", "scenario"});
    cmd.kind = LiveCommand::Kind::Reset;
    if (j.contains("scenario")) {
      try {
        Scenario s = parseScenario(j.at("scenario"));
        s.validate();
        cmd.scenario = std::move(s);
      } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("invalid scenario: ") + e.what());
      }
    }
    return cmd;
  }
  throw std::invalid_argument("unknown command type '" + type + "'");
}

std::optional<std::string> LiveSimulation::submit(ClientId client, std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) return errorReply("malformed JSON");
  LiveCommand cmd;
  try {
    cmd = parseCommand(j);
  } catch (const std::invalid_argument& e) {
    return errorReply(e.what());
  }
  if (pilot_ && *pilot_ != client) return errorReply("another client holds the pilot lock");
  pilot_ = client;
  queue_.push_back(std::move(cmd));
  return std::nullopt;
}

void LiveSimulation::disconnect(ClientId client) {
  if (pilot_ == client) pilot_.reset();
}

void LiveSimulation::apply(const LiveCommand& cmd) {
  switch (cmd.kind) {
    case LiveCommand::Kind::IntruderVel:
      try {
        engine_->commandInterferer(cmd.interferer, cmd.velocity);
      } catch (const std::invalid_argument& e) {
        // A reset queued ahead of this command may have removed the target.
        std::clog << "ignored intruder command: " << e.what() << "\n";
      }
      break;
    case LiveCommand::Kind::Pause: paused_ = true; break;
    case LiveCommand::Kind::Resume: paused_ = false; break;
    case LiveCommand::Kind::Reset: restart(cmd.scenario.value_or(served_)); break;
  }
}

std::string LiveSimulation::takeFrame() {
  const auto& events = engine_->record().events;
  std::span<const RunEvent> fresh(events.begin() + static_cast<std::ptrdiff_t>(eventCursor_),
                                  events.end());
  eventCursor_ = events.size();
  return encodeFrame(*engine_, fresh);
}

std::string LiveSimulation::snapshotFrame() const { return encodeFrame(*engine_, {}); }

std::optional<std::string> LiveSimulation::tick() {
  while (!queue_.empty()) {
    LiveCommand cmd = std::move(queue_.front());
    queue_.pop_front();
    apply(cmd);
  }
  if (resetPending_) {
    resetPending_ = false;
    return takeFrame();
  }
  if (paused_ || engine_->finished()) {
    stepsSinceFrame_ = 0;
    if (idleTicks_++ % keepAliveTicks_ == 0) return takeFrame();
    return std::nullopt;
  }
  idleTicks_ = 0;
  engine_->step();
  if (++stepsSinceFrame_ >= frameStride_) {
    stepsSinceFrame_ = 0;
    return takeFrame();
  }
  return std::nullopt;
}

std::string LiveSimulation::scenarioJson() const { return toJson(active_).dump(2); }

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

constexpr std::size_t kMaxOutbox = 256;

class WsSession;

}  // namespace

struct LiveServer::Impl {
  Impl(Scenario scenario, ServeOptions opt)
      : options(opt), sim(std::move(scenario)), acceptor(ioc), timer(ioc), signals(ioc) {}

  void start();
  void accept();
  void scheduleTick();
  void broadcast(const std::string& text);

  ServeOptions options;
  LiveSimulation sim;
  net::io_context ioc;
  tcp::acceptor acceptor;
  net::steady_timer timer;
  net::signal_set signals;
  std::set<std::shared_ptr<WsSession>> sessions;
  ClientId nextClient = 1;
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, LiveServer::Impl& server, ClientId id)
      : ws_(std::move(socket)), server_(server), id_(id) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->server_.sessions.insert(self);
      self->send(self->server_.sim.snapshotFrame());
      self->read();
    });
  }

  void send(std::string text) {
    if (outbox_.size() >= kMaxOutbox) return;  // slow viewer: drop frames
    outbox_.push_back(std::move(text));
    if (outbox_.size() == 1) write();
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      if (auto reply = self->server_.sim.submit(self->id_, text)) self->send(*reply);
      self->read();
    });
  }

  void write() {
    ws_.async_write(net::buffer(outbox_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) return self->close();
                      self->outbox_.pop_front();
                      if (!self->outbox_.empty()) self->write();
                    });
  }

  void close() {
    server_.sim.disconnect(id_);
    server_.sessions.erase(shared_from_this());
  }

  websocket::stream<beast::tcp_stream> ws_;
  LiveServer::Impl& server_;
  ClientId id_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, LiveServer::Impl& server)
      : stream_(std::move(socket)), server_(server) {}

  void start() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (!ec) self->dispatch();
                     });
  }

 private:
  void dispatch() {
    const bool isWs = websocket::is_upgrade(req_);
    if (isWs && req_.target() == "/ws") {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), server_, server_.nextClient++)
          ->start(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(false);
    res->set(http::field::server, "swarm-evade");
    if (!isWs && req_.method() == http::verb::get && req_.target() == "/scenario") {
      res->result(http::status::ok);
      res->set(http::field::content_type, "application/json");
      res->body() = server_.sim.scenarioJson();
    } else {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "text/plain");
      res->body() = "not found\n";
    }
    res->prepare_payload();
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res](beast::error_code, std::size_t) {
                        beast::error_code ignored;
                        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                      });
  }

  beast::tcp_stream stream_;
  LiveServer::Impl& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

void LiveServer::Impl::start() {
  const tcp::endpoint ep(net::ip::make_address(options.address), options.port);
  acceptor.open(ep.protocol());
  acceptor.set_option(net::socket_base::reuse_address(true));
  acceptor.bind(ep);
  acceptor.listen();
  accept();
  if (options.stopOnSignal) {
    signals.add(SIGINT);
    signals.add(SIGTERM);
    signals.async_wait([this](beast::error_code, int) { ioc.stop(); });
  }
  timer.expires_after(std::chrono::seconds(0));
  scheduleTick();
}

void LiveServer::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (!ec) std::make_shared<HttpSession>(std::move(socket), *this)->start();
    if (acceptor.is_open()) accept();
  });
}

void LiveServer::Impl::scheduleTick() {
  timer.async_wait([this](beast::error_code ec) {
    if (ec) return;
    if (auto frame = sim.tick()) broadcast(*frame);
    // Wall-clock pacing; the period follows the active scenario's dt.
    const auto period = std::chrono::duration<double>(sim.scenario().dt / options.realTimeFactor);
    timer.expires_at(timer.expiry() +
                     std::chrono::duration_cast<net::steady_timer::duration>(period));
    scheduleTick();
  });
}

void LiveServer::Impl::broadcast(const std::string& text) {
  for (const auto& s : sessions) s->send(text);
}

LiveServer::LiveServer(Scenario scenario, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(scenario), options)) {
  if (!(options.realTimeFactor > 0)) throw std::invalid_argument("real-time factor must be > 0");
  impl_->start();
}

LiveServer::~LiveServer() = default;

unsigned short LiveServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void LiveServer::run() { impl_->ioc.run(); }

void LiveServer::stop() { impl_->ioc.stop(); }

}  // namespace swarm_evade
