#include "swarm_evade/live_service.hpp"
#include "swarm_evade/metrics.hpp"
#include "swarm_evade/scenario.hpp"
#include "swarm_evade/shock_study.hpp"
#include "swarm_evade/sim_engine.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace swarm_evade;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Seed precedence: --seed, then the scenario file, then SWARM_EVADE_SEED,
// then the built-in default.
std::uint64_t resolveSeed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> file) {
  if (flag) return *flag;
  if (file) return *file;
  if (const char* env = std::getenv("SWARM_EVADE_SEED"); env && *env) {
    std::size_t used = 0;
    try {
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("SWARM_EVADE_SEED is not an unsigned integer: ") + env);
  }
  return kDefaultSeed;
}

std::string readFile(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Loads a scenario and reports whether it pinned a seed itself.
std::pair<Scenario, std::optional<std::uint64_t>> loadWithSeed(const fs::path& path) {
  const std::string text = readFile(path);
  Scenario s = parseScenarioText(text);
  std::optional<std::uint64_t> fileSeed;
  if (nlohmann::json::parse(text).contains("seed")) fileSeed = s.seed;
  return {std::move(s), fileSeed};
}

void applyOverrides(SwarmParams<double>& p, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects name=value, got '" + kv + "'");
    double value = 0.0;
    std::size_t used = 0;
    const std::string text = kv.substr(eq + 1);
    try {
      value = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) throw UsageError("bad number in --set '" + kv + "'");
    setParam(p, kv.substr(0, eq), value);
  }
  p.validate();
}

// All outputs are rendered before anything touches the disk, so a failure
// never leaves partial results behind.
void writeAll(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& [name, content] : files) {
    std::ofstream os(dir / name, std::ios::binary);
    os << content;
    if (!os) throw UsageError("cannot write " + (dir / name).string());
  }
}

int cmdRun(const fs::path& scenarioPath, std::optional<std::string> out,
           std::optional<std::uint64_t> seed, bool noEvasion, bool enlarged) {
  auto [s, fileSeed] = loadWithSeed(scenarioPath);
  s.seed = resolveSeed(seed, fileSeed);
  if (noEvasion) s.evasionEnabled = false;
  if (enlarged) s.enlargedRange = true;
  const fs::path dir = out ? fs::path(*out) : fs::path(s.outDir.value_or("out"));

  Engine engine(s);
  engine.run();
  const RunSummary summary = summarize(engine.record(), s.params.d_E1);
  writeAll(dir, {{"record.csv", toCsv(engine.record())},
                 {"summary.json", summaryJson(summary)},
                 {"distances.svg", distanceChartSvg(engine.record(), s.params.d_E1)}});
  std::cout << summaryJson(summary);
  return kExitOk;
}

struct StudySetup {
  SwarmParams<double> params = SwarmParams<double>::defaults();
  NetConfig net;
  std::uint64_t seed = kDefaultSeed;
};

StudySetup studySetup(const std::optional<std::string>& config, std::optional<std::uint64_t> seed,
                      const std::vector<std::string>& sets) {
  StudySetup st;
  std::optional<std::uint64_t> fileSeed;
  if (config) {
    auto [s, fs] = loadWithSeed(*config);
    st.params = s.params;
    st.net = s.net;
    fileSeed = fs;
  }
  st.seed = resolveSeed(seed, fileSeed);
  applyOverrides(st.params, sets);
  return st;
}

nlohmann::json latticeJson(const LatticeStats& s) {
  return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}};
}

int cmdShock(int agents, std::optional<double> commRange, const std::string& out,
             const std::optional<std::string>& config, std::optional<std::uint64_t> seed,
             const std::vector<std::string>& sets) {
  if (agents < 2) throw UsageError("--agents must be at least 2");
  StudySetup st = studySetup(config, seed, sets);
  if (commRange) st.net.commRange = *commRange;
  st.net.hopLatency = 1;
  st.net.dropProbability = 0.0;
  st.net.minSendInterval = 0;
  st.net.validate();

  SettleOptions so;
  so.agents = agents;
  so.seed = st.seed;
  const SettledLattice lattice = settleLattice(st.params, so);
  ShockOptions opt;
  opt.net = st.net;
  const ShockResult res = runShock(lattice, st.params, opt, st.seed);

  nlohmann::json report = {{"lattice", latticeJson(lattice.stats)},
                           {"detector", res.detector},
                           {"eccentricity", res.eccentricity},
                           {"presence_steps", res.presenceSteps},
                           {"clear_steps", res.clearSteps}};
  writeAll(out, {{"spread.csv", spreadCsv(res)}, {"lattice.json", report.dump(2) + "\n"}});
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

int cmdCalibrate(double target, double band, const std::optional<std::string>& config,
                 std::optional<std::uint64_t> seed, const std::vector<std::string>& sets) {
  if (!std::isfinite(target) || target <= 0) throw UsageError("--target-mean must be positive");
  if (!std::isfinite(band) || band <= 0) throw UsageError("--band must be positive");
  StudySetup st = studySetup(config, seed, sets);
  SettleOptions so;
  so.seed = st.seed;
  const SettledLattice lattice = settleLattice(st.params, so);
  const bool pass = std::abs(lattice.stats.mean - target) <= band;
  nlohmann::json report = {{"lattice", latticeJson(lattice.stats)},
                           {"target_mean", target},
                           {"band", band},
                           {"pass", pass}};
  std::cout << report.dump(2) << "\n";
  return pass ? kExitOk : kExitFail;
}

int cmdServe(const fs::path& scenarioPath, unsigned short port, const std::string& address,
             double speed, std::optional<std::uint64_t> seed) {
  auto [s, fileSeed] = loadWithSeed(scenarioPath);
  s.seed = resolveSeed(seed, fileSeed);
  ServeOptions opt;
  opt.port = port;
  opt.address = address;
  opt.realTimeFactor = speed;
  opt.stopOnSignal = true;
  LiveServer server(std::move(s), opt);
  std::cerr << "serving on http://" << address << ":" << server.port()
            << " (GET /scenario, WebSocket /ws)\n";
  server.run();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Swarm control and collective evasion simulator"};
  app.require_subcommand(1);

  std::string scenarioPath;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool noEvasion = false;
  bool enlarged = false;
  auto* run = app.add_subcommand("run", "Run a scenario and write record.csv, summary.json, distances.svg");
  run->add_option("scenario", scenarioPath, "Scenario JSON file")->required();
  run->add_option("--out", out, "Output directory (default: scenario out_dir, else ./out)");
  run->add_option("--seed", seed, "Random seed");
  run->add_flag("--no-evasion", noEvasion, "Disable the evasion extension");
  run->add_flag("--enlarged-range", enlarged, "Scale interferer sensing and separation by 2");

  int agents = 50;
  std::optional<double> commRange;
  std::string shockOut = "out";
  std::optional<std::string> config;
  std::vector<std::string> sets;
  auto* shock = app.add_subcommand("shock", "Frozen-lattice shock propagation study");
  shock->add_option("--agents", agents, "Swarm size");
  shock->add_option("--comm-range", commRange, "Communication range [m] (default 5)");
  shock->add_option("--out", shockOut, "Output directory");
  shock->add_option("--config", config, "Scenario file supplying params, net and seed");
  shock->add_option("--seed", seed, "Random seed");
  shock->add_option("--set", sets, "Parameter override name=value");

  double target = 2.89;
  double band = 0.25;
  auto* calibrate = app.add_subcommand("calibrate", "Check settled lattice spacing against a band");
  calibrate->add_option("--target-mean", target, "Target mean nearest-neighbor spacing [m]");
  calibrate->add_option("--band", band, "Allowed deviation from the target [m]");
  calibrate->add_option("--config", config, "Scenario file supplying params and seed");
  calibrate->add_option("--seed", seed, "Random seed");
  calibrate->add_option("--set", sets, "Parameter override name=value");

  unsigned short port = 8080;
  std::string address = "127.0.0.1";
  double speed = 1.0;
  auto* serve = app.add_subcommand("serve", "Live mode: WebSocket /ws and GET /scenario");
  serve->add_option("--scenario", scenarioPath, "Scenario JSON file")->required();
  serve->add_option("--port", port, "TCP port (0 picks a free one)");
  serve->add_option("--address", address, "Bind address");
  serve->add_option("--speed", speed, "Real-time factor")->check(CLI::PositiveNumber);
  serve->add_option("--seed", seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmdRun(scenarioPath, out, seed, noEvasion, enlarged);
    if (*shock) return cmdShock(agents, commRange, shockOut, config, seed, sets);
    if (*calibrate) return cmdCalibrate(target, band, config, seed, sets);
    if (*serve) return cmdServe(scenarioPath, port, address, speed, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
