#include "part/runner.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <mutex>
#include <fstream>
#include <sstream>
#include <thread>

namespace part {

using nlohmann::json;

bool ExperimentResult::safe() const {
  return std::all_of(reports.begin(), reports.end(), [](const PropertyReport& r) { return r.safe(); });
}

ExperimentResult runExperiment(const ScenarioConfig& config, const RunOptions& opts) {
  config.validate();
  std::vector<RunMetrics> runs(opts.runs);
  std::vector<PropertyReport> reports(opts.checkProperties ? opts.runs : 0);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failureMutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < opts.runs; i = next++) {
      try {
        ScenarioConfig c = config;
        c.seed = config.seed + i;
        World w(c);
        w.run();
        runs[i] = summarize(w);
        if (opts.checkProperties) reports[i] = checkProperties(w);
      } catch (...) {
        std::lock_guard lock(failureMutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::size_t threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, opts.runs));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentResult res;
  res.aggregate = aggregate(config.name, runs);
  res.reports = std::move(reports);
  return res;
}

std::vector<EventMarker> eventMarkers(const ScenarioConfig& c) {
  std::vector<EventMarker> out;
  for (const auto& s : c.splits)
    out.push_back({s.round, "split " + std::to_string(s.parent) + " -> " + std::to_string(s.first) + "," +
                                std::to_string(s.second)});
  for (const auto& m : c.merges)
    out.push_back({m.round, "merge " + std::to_string(m.a) + "," + std::to_string(m.b) + " -> " +
                                std::to_string(m.merged)});
  for (const auto& w : c.detector.lieWindows) {
    out.push_back({w.fromRound, "detector error begins"});
    out.push_back({w.toRound, "detector recovers"});
  }
  std::stable_sort(out.begin(), out.end(), [](const EventMarker& a, const EventMarker& b) { return a.round < b.round; });
  return out;
}

std::string manifestJson(const ScenarioConfig& base, const RunOptions& opts, const std::vector<ManifestEntry>& entries) {
  json j;
  j["runs"] = opts.runs;
  j["base_seed"] = base.seed;
  j["rounds"] = base.rounds;
  j["columns"] = json::array();
  std::stringstream header(kCsvHeader);
  for (std::string col; std::getline(header, col, ',');) j["columns"].push_back(col);
  j["outputs"] = json::array();
  for (const auto& e : entries) {
    json o{{"csv", e.csv}, {"scenario", e.scenario}, {"point", json::object()}, {"events", json::array()}};
    for (const auto& [k, v] : e.point) o["point"][k] = v;
    for (const auto& ev : e.events) o["events"].push_back({{"round", ev.round}, {"label", ev.label}});
    j["outputs"].push_back(o);
  }
  return j.dump(2) + "\n";
}

bool SweepGrid::empty() const { return peers.empty() && maxDelay.empty() && lossRate.empty() && lieWindow.empty(); }

SweepGrid parseGrid(const std::string& text) {
  SweepGrid g;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid(std::string("grid: ") + e.what());
  }
  if (!j.is_object()) throw ConfigInvalid("grid: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    try {
      if (it.key() == "peers") g.peers = it->get<std::vector<std::size_t>>();
      else if (it.key() == "max_delay") g.maxDelay = it->get<std::vector<Round>>();
      else if (it.key() == "loss_rate") g.lossRate = it->get<std::vector<double>>();
      else if (it.key() == "lie_window") g.lieWindow = it->get<std::vector<Round>>();
      else throw ConfigInvalid("grid." + it.key() + ": unknown key");
    } catch (const json::exception&) {
      throw ConfigInvalid("grid." + it.key() + ": expected an array of numbers");
    }
  }
  return g;
}

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

std::vector<ManifestEntry> runSweep(const ScenarioConfig& base, const SweepGrid& grid, const RunOptions& opts,
                                    const std::string& dir, bool& safe) {
  safe = true;
  std::vector<ManifestEntry> entries;
  if (grid.empty()) return entries;

  // Unset axes keep the base value.
  auto axisOr = [](auto axis, auto value) {
    if (axis.empty()) axis.push_back(value);
    return axis;
  };
  Round baseLie = base.detector.lieWindows.empty()
                      ? 0
                      : base.detector.lieWindows.front().toRound - base.detector.lieWindows.front().fromRound;
  auto ns = axisOr(grid.peers, base.peers);
  auto ds = axisOr(grid.maxDelay, base.maxDelay);
  auto ls = axisOr(grid.lossRate, base.loss.rate);
  auto ws = axisOr(grid.lieWindow, baseLie);

  std::filesystem::create_directories(dir);
  for (auto n : ns)
    for (auto d : ds)
      for (auto l : ls)
        for (auto w : ws) {
          ScenarioConfig c = base;
          c.peers = n;
          c.maxDelay = d;
          c.loss.rate = l;
          if (l > 0) c.catchup = true;
          for (auto& s : c.splits)
            if (s.parent == kRootPartition) s.secondPeers = upperHalf(n);
          if (!c.detector.lieWindows.empty() && !grid.lieWindow.empty()) {
            auto& lw = c.detector.lieWindows.front();
            lw.toRound = lw.fromRound + w;
            if (w == 0) c.detector.lieWindows.erase(c.detector.lieWindows.begin());
          }
          ManifestEntry e;
          e.scenario = c.name;
          e.point = {{"peers", std::to_string(n)}, {"max_delay", std::to_string(d)}, {"loss_rate", fmt(l)},
                     {"lie_window", std::to_string(w)}};
          e.csv = c.name + "__n" + std::to_string(n) + "_d" + std::to_string(d) + "_loss" + fmt(l) + "_lie" +
                  std::to_string(w) + ".csv";
          e.events = eventMarkers(c);
          ExperimentResult res = runExperiment(c, opts);
          if (!res.safe()) safe = false;
          std::ofstream out(std::filesystem::path(dir) / e.csv);
          writeCsv(out, res.aggregate);
          entries.push_back(std::move(e));
        }
  std::ofstream manifest(std::filesystem::path(dir) / "manifest.json");
  manifest << manifestJson(base, opts, entries);
  return entries;
}

}  // namespace part
