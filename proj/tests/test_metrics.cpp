#include "swarm_evade/metrics.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <random>

using namespace swarm_evade;

namespace {

RunRecord handmade() {
  RunRecord r;
  r.agentIds = {"a", "b", "c"};
  r.interfererIds = {"x"};
  auto frame = [](double t, double xr, std::vector<Mode> modes, bool present = true) {
    Frame f;
    f.time = t;
    f.positions = {Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 4, 0)};
    f.modes = std::move(modes);
    f.interferers = {present ? std::optional<Vec3>(Vec3(xr, 0, 0)) : std::nullopt};
    return f;
  };
  using M = Mode;
  r.frames = {frame(0.0, -20, {M::Normal, M::Normal, M::Normal}),
              frame(0.1, -9, {M::Normal, M::Normal, M::Normal}),
              frame(0.2, -7, {M::Normal, M::Normal, M::Normal}),
              frame(0.3, -6, {M::Active, M::Normal, M::Normal}),
              frame(0.4, -6, {M::Active, M::Passive, M::Passive}),
              frame(0.5, 0, {M::Active, M::Passive, M::Passive}, false)};
  r.events = {{0.3, EventKind::Detection, "a", M::Normal},
              {0.3, EventKind::ModeChange, "a", M::Active}};
  return r;
}

}  // namespace

TEST_CASE("frame distance statistics") {
  const RunRecord r = handmade();
  const FrameStats fs = frameStats(r.frames[1]);
  REQUIRE(fs.agents);
  // pair distances 3, 4, 5
  CHECK(fs.agents->min == 3.0);
  CHECK(fs.agents->mean == doctest::Approx(4.0));
  CHECK(fs.agents->max == 5.0);
  REQUIRE(fs.intruder);
  // distances from (-9,0): 9, 12, sqrt(97)
  CHECK(fs.intruder->min == 9.0);
  CHECK(fs.intruder->mean == doctest::Approx((9.0 + 12.0 + std::sqrt(97.0)) / 3.0));
  CHECK_FALSE(frameStats(r.frames[5]).intruder);
  Frame lone;
  lone.positions = {Vec3::Zero()};
  lone.modes = {Mode::Normal};
  CHECK_FALSE(frameStats(lone).agents);
}

TEST_CASE("event times") {
  const EventTimes et = extractEventTimes(handmade(), 8.0);
  CHECK(et.t_s == 0.2);
  CHECK(et.t_d == 0.3);
  CHECK(et.t_e == 0.4);
  CHECK(*et.t_ed() == doctest::Approx(0.1));
  CHECK(*et.t_ds() == doctest::Approx(0.1));
  EventTimes none;
  CHECK_FALSE(none.t_ed());
  CHECK_FALSE(none.t_ds());
}

TEST_CASE("summary json") {
  const RunSummary s = summarize(handmade(), 8.0);
  CHECK(s.minInterAgentOverall == 3.0);
  CHECK(s.minIntruderOverall == 6.0);
  const auto j = nlohmann::json::parse(summaryJson(s));
  for (const char* key : {"t_s", "t_d", "t_e", "t_ed", "t_ds", "min_interagent_overall",
                          "min_intruder_overall"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["t_e"] == 0.4);
  CHECK(nlohmann::json::parse(summaryJson(RunSummary{}))["t_s"].is_null());
}

TEST_CASE("csv round trip") {
  RunRecord r = handmade();
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(-50, 50);
  for (auto& f : r.frames)
    for (auto& p : f.positions) p = Vec3(u(g), u(g), u(g));
  const std::string csv = toCsv(r);
  CHECK(csv.rfind(csvHeader() + "\n", 0) == 0);
  const auto rows = parseCsv(csv);
  REQUIRE(rows.size() == r.frames.size() * r.agentIds.size());
  std::size_t k = 0;
  for (const auto& f : r.frames) {
    const FrameStats fs = frameStats(f);
    for (std::size_t i = 0; i < r.agentIds.size(); ++i, ++k) {
      const CsvRow& row = rows[k];
      CHECK(row.time == doctest::Approx(f.time).epsilon(1e-9));
      CHECK(row.agentId == r.agentIds[i]);
      CHECK((row.position - f.positions[i]).norm() <= 1e-6);
      CHECK(row.mode == f.modes[i]);
      CHECK(row.minDistAgents.value() == doctest::Approx(fs.agents->min).epsilon(1e-8));
      CHECK(row.minDistIntruder.has_value() == fs.intruder.has_value());
    }
  }
  CHECK(toCsv(r) == csv);
  CHECK_THROWS(parseCsv("time,agent\n"));
  CHECK_THROWS(parseCsv(csvHeader() + "\n1,a,0,0,0,flying,,,,\n"));
  CHECK_THROWS(parseCsv(csvHeader() + "\n1,a,0,0\n"));
}

TEST_CASE("distance chart is an svg document") {
  const std::string svg = distanceChartSvg(handmade(), 8.0);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("mode names") {
  CHECK(std::string(toString(EventKind::Detection)) == "detection");
  CHECK(std::string(toString(EventKind::ModeChange)) == "mode_change");
  CHECK(std::string(toString(Mode::Passive)) == "passive");
}
