#include "swarm_evade/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace swarm_evade {

namespace {

class Accumulator {
 public:
  void add(double d) {
    min_ = std::min(min_, d);
    max_ = std::max(max_, d);
    sum_ += d;
    ++n_;
  }
  std::optional<DistanceStats> stats() const {
    if (n_ == 0) return std::nullopt;
    return DistanceStats{min_, sum_ / static_cast<double>(n_), max_};
  }

 private:
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
  std::size_t n_ = 0;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

Mode parseMode(const std::string& s) {
  if (s == "normal") return Mode::Normal;
  if (s == "active") return Mode::Active;
  if (s == "passive") return Mode::Passive;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

}  // namespace

FrameStats frameStats(const Frame& frame) {
  Accumulator agents, intruder;
  const auto& p = frame.positions;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) agents.add((p[i] - p[j]).norm());
  }
  for (const auto& r : frame.interferers) {
    if (!r) continue;
    for (const auto& a : p) intruder.add((a - *r).norm());
  }
  return {agents.stats(), intruder.stats()};
}

std::vector<FrameStats> distanceStats(const RunRecord& record) {
  std::vector<FrameStats> out;
  out.reserve(record.frames.size());
  for (const auto& f : record.frames) out.push_back(frameStats(f));
  return out;
}

EventTimes extractEventTimes(const RunRecord& record, double d_E1) {
  EventTimes et;
  for (const auto& f : record.frames) {
    if (!et.t_s) {
      if (auto s = frameStats(f).intruder; s && s->min < d_E1) et.t_s = f.time;
    }
    if (!et.t_e && !f.modes.empty() &&
        std::all_of(f.modes.begin(), f.modes.end(), [](Mode m) { return m != Mode::Normal; })) {
      et.t_e = f.time;
    }
  }
  for (const auto& e : record.events) {
    if (e.kind == EventKind::Detection) {
      et.t_d = e.time;
      break;
    }
  }
  return et;
}

RunSummary summarize(const RunRecord& record, double d_E1) {
  RunSummary s;
  s.events = extractEventTimes(record, d_E1);
  for (const auto& fs : distanceStats(record)) {
    if (fs.agents) {
      s.minInterAgentOverall = std::min(s.minInterAgentOverall.value_or(fs.agents->min),
                                        fs.agents->min);
    }
    if (fs.intruder) {
      s.minIntruderOverall = std::min(s.minIntruderOverall.value_or(fs.intruder->min),
                                      fs.intruder->min);
    }
  }
  return s;
}

std::string summaryJson(const RunSummary& summary) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::ordered_json j;
  j["t_s"] = opt(summary.events.t_s);
  j["t_d"] = opt(summary.events.t_d);
  j["t_e"] = opt(summary.events.t_e);
  j["t_ed"] = opt(summary.events.t_ed());
  j["t_ds"] = opt(summary.events.t_ds());
  j["min_interagent_overall"] = opt(summary.minInterAgentOverall);
  j["min_intruder_overall"] = opt(summary.minIntruderOverall);
  return j.dump(2) + "\n";
}

std::string csvHeader() {
  return "time,agent_id,x,y,z,mode,min_dist_agents,mean_dist_agents,min_dist_intruder,"
         "mean_dist_intruder";
}

std::string toCsv(const RunRecord& record) {
  std::string out = csvHeader() + "\n";
  for (const auto& f : record.frames) {
    const FrameStats fs = frameStats(f);
    const std::string tail =
        fmt(fs.agents ? std::optional(fs.agents->min) : std::nullopt) + "," +
        fmt(fs.agents ? std::optional(fs.agents->mean) : std::nullopt) + "," +
        fmt(fs.intruder ? std::optional(fs.intruder->min) : std::nullopt) + "," +
        fmt(fs.intruder ? std::optional(fs.intruder->mean) : std::nullopt);
    for (std::size_t i = 0; i < record.agentIds.size(); ++i) {
      const Vec3& p = f.positions[i];
      out += fmt(f.time) + "," + record.agentIds[i] + "," + fmt(p.x()) + "," + fmt(p.y()) + "," +
             fmt(p.z()) + "," + toString(f.modes[i]) + "," + tail + "\n";
    }
  }
  return out;
}

void exportCsv(const RunRecord& record, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << toCsv(record);
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::vector<CsvRow> parseCsv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != csvHeader()) {
    throw std::invalid_argument("csv header mismatch");
  }
  std::vector<CsvRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 10) throw std::invalid_argument("csv row has wrong arity: " + line);
    auto num = [](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return std::stod(s);
    };
    CsvRow r;
    r.time = std::stod(cells[0]);
    r.agentId = cells[1];
    r.position = Vec3(std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]));
    r.mode = parseMode(cells[5]);
    r.minDistAgents = num(cells[6]);
    r.meanDistAgents = num(cells[7]);
    r.minDistIntruder = num(cells[8]);
    r.meanDistIntruder = num(cells[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string distanceChartSvg(const RunRecord& record, double d_E1) {
  constexpr double W = 800, H = 400, left = 60, right = 20, top = 20, bottom = 40;
  const auto stats = distanceStats(record);

  struct Series {
    const char* label;
    const char* color;
    std::vector<std::pair<double, double>> pts;
  };
  std::vector<Series> series{{"min agent-intruder", "#d62728", {}},
                             {"mean agent-intruder", "#ff9896", {}},
                             {"min agent-agent", "#1f77b4", {}},
                             {"mean agent-agent", "#aec7e8", {}}};
  double tMax = 0.0, dMax = d_E1;
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const double t = record.frames[k].time;
    tMax = std::max(tMax, t);
    if (stats[k].intruder) {
      series[0].pts.emplace_back(t, stats[k].intruder->min);
      series[1].pts.emplace_back(t, stats[k].intruder->mean);
    }
    if (stats[k].agents) {
      series[2].pts.emplace_back(t, stats[k].agents->min);
      series[3].pts.emplace_back(t, stats[k].agents->mean);
    }
  }
  for (const auto& s : series) {
    for (const auto& [t, d] : s.pts) dMax = std::max(dMax, d);
  }
  if (tMax <= 0) tMax = 1;
  dMax *= 1.05;

  auto X = [&](double t) { return left + (W - left - right) * t / tMax; };
  auto Y = [&](double d) { return H - bottom - (H - top - bottom) * d / dMax; };

  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << Y(0) << "\" x2=\"" << W - right << "\" y2=\""
     << Y(0) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << Y(0)
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double t = tMax * i / 5, d = dMax * i / 5;
    os << "<text x=\"" << X(t) << "\" y=\"" << H - bottom + 15 << "\" text-anchor=\"middle\">"
       << t << "</text>\n";
    os << "<text x=\"" << left - 5 << "\" y=\"" << Y(d) + 4 << "\" text-anchor=\"end\">" << d
       << "</text>\n";
  }
  os << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 5
     << "\" text-anchor=\"middle\">time [s]</text>\n";
  os << "<text x=\"15\" y=\"" << (top + H - bottom) / 2 << "\" transform=\"rotate(-90 15 "
     << (top + H - bottom) / 2 << ")\" text-anchor=\"middle\">distance [m]</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << Y(d_E1) << "\" x2=\"" << W - right << "\" y2=\""
     << Y(d_E1) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  int legend = 0;
  for (const auto& s : series) {
    if (s.pts.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [t, d] : s.pts) os << X(t) << "," << Y(d) << " ";
    os << "\"/>\n";
    const double ly = top + 14.0 * legend++;
    os << "<text x=\"" << W - right - 5 << "\" y=\"" << ly + 10 << "\" text-anchor=\"end\" fill=\""
       << s.color << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace swarm_evade
