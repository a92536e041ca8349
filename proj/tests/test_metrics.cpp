#include "doctest.h"

#include "part/runner.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace part;

namespace {

RunMetrics constant(std::size_t n, std::uint32_t confirmed) {
  RunMetrics m;
  for (std::size_t i = 0; i < n; ++i) {
    RoundRecord r;
    r.round = static_cast<Round>(i);
    r.submitted = 1;
    r.confirmed = confirmed;
    m.rounds.push_back(r);
  }
  std::vector<double> x(n, confirmed);
  m.rolling = rollingMean(x);
  return m;
}

std::string csvOf(const Aggregate& a) {
  std::ostringstream os;
  writeCsv(os, a);
  return os.str();
}

}  // namespace

TEST_CASE("rolling mean") {
  auto r = rollingMean({1, 2, 3, 4}, 2);
  CHECK(r == std::vector<double>{1, 1.5, 2.5, 3.5});
  CHECK(rollingMean({}).empty());
}

TEST_CASE("aggregation") {
  auto one = aggregate("x", {constant(5, 2)});
  CHECK(one.rows[3].meanRolling == doctest::Approx(2));
  CHECK(one.rows[4].confirmedCum == doctest::Approx(10));
  CHECK(one.rows[4].cumulativeRatio == doctest::Approx(2));

  auto two = aggregate("x", {constant(5, 2), constant(5, 0)});
  CHECK(two.runs == 2);
  CHECK(two.rows[2].meanRolling == doctest::Approx(1));
  CHECK(two.rows[2].sdRolling == doctest::Approx(1));
  CHECK(two.rows[0].excluded);

  CHECK_THROWS_AS(aggregate("x", {constant(5, 2), constant(4, 2)}), LengthMismatch);
  CHECK(aggregate("x", {}).rows.empty());
}

TEST_CASE("csv layout") {
  auto a = aggregate("demo", {constant(2, 1)});
  std::string csv = csvOf(a);
  CHECK(csv.rfind(std::string(kCsvHeader) + "\n", 0) == 0);
  CHECK(csv.find("\ndemo,1,1,1.000000,1.000000,2.000000,0.000000,1,1.000000\n") != std::string::npos);
  CHECK(meanRolling(a, 0, 2) == doctest::Approx(1));
}

TEST_CASE("dispersion shrinks with more runs") {
  ScenarioConfig c;
  c.rounds = 150;
  c.peers = 20;
  RunOptions o;
  o.threads = 1;
  auto sdOfMean = [&](std::size_t runs) {
    // Spread of the per-batch mean over disjoint seed batches.
    std::vector<double> means;
    for (std::uint64_t batch = 0; batch < 4; ++batch) {
      ScenarioConfig cb = c;
      cb.seed = 1000 + batch * runs;
      o.runs = runs;
      means.push_back(meanRolling(runExperiment(cb, o).aggregate, 100, 150));
    }
    double m = 0, v = 0;
    for (double x : means) m += x;
    m /= means.size();
    for (double x : means) v += (x - m) * (x - m);
    return std::sqrt(v / means.size());
  };
  CHECK(sdOfMean(16) < sdOfMean(1));
}

TEST_CASE("experiments are byte-deterministic") {
  ScenarioConfig c = preset("baseline");
  c.rounds = 150;
  c.seed = 7;
  RunOptions o;
  o.runs = 3;
  o.threads = 2;
  std::string a = csvOf(runExperiment(c, o).aggregate);
  o.threads = 1;
  std::string b = csvOf(runExperiment(c, o).aggregate);
  CHECK(a == b);
}

TEST_CASE("config errors name the field") {
  auto message = [](const std::string& text) {
    try {
      parseScenario(text);
    } catch (const ConfigInvalid& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(R"({"peerz": 3})").find("peerz") != std::string::npos);
  CHECK(message(R"({"peers": "many"})").find("peers") != std::string::npos);
  CHECK(message("{\n\"peers\": 3,\n}").find("line 3") != std::string::npos);
  CHECK(message(R"({"detector": {"kind": "WAGE"}})").find("detector") != std::string::npos);
  CHECK(message(R"({"smpart": true})").find("smpart") != std::string::npos);
  CHECK(message(R"({"preset": "nope"})").find("nope") != std::string::npos);
  CHECK(message(R"({"splits": [{"round": 5, "second_share": {"default": "3/2"}}]})") != "");
  CHECK(message(R"({"preset": "lagging-age", "rounds": 400})").empty());
  CHECK_THROWS_AS(loadScenario("/nonexistent/x.json"), ConfigInvalid);
}

TEST_CASE("presets") {
  CHECK(presetNames().size() == 5);
  for (const auto& n : presetNames()) {
    ScenarioConfig c = preset(n);
    CHECK_NOTHROW(c.validate());
    CHECK(parseScenario(toJson(c)).name == n);
  }
  auto lag = preset("lagging-age");
  REQUIRE(lag.splits.size() == 1);
  CHECK(lag.splits[0].round == 100);
  REQUIRE(lag.detector.lieWindows.size() == 1);
  CHECK(lag.detector.lieWindows[0].fromRound == 100);
  CHECK(lag.detector.lieWindows[0].toRound == 200);
  CHECK(preset("message-loss").maxDelay == 2);

  std::set<Round> events;
  for (const auto& m : eventMarkers(preset("multi-split-merge"))) events.insert(m.round);
  CHECK(events == std::set<Round>{100, 200, 300, 500});
}

TEST_CASE("sweeps") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "part_sweep_test";
  fs::remove_all(dir);
  ScenarioConfig c = preset("lagging-age");
  c.rounds = 120;
  RunOptions o;
  o.runs = 1;
  bool safe = false;

  CHECK(runSweep(c, parseGrid("{}"), o, dir.string(), safe).empty());
  CHECK_FALSE(fs::exists(dir));

  auto entries = runSweep(c, parseGrid(R"({"peers": [10, 20], "lie_window": [0, 50]})"), o, dir.string(), safe);
  CHECK(safe);
  CHECK(entries.size() == 4);
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(dir)) csvs += e.path().extension() == ".csv";
  CHECK(csvs == 4);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "lagging-age__n10_d1_loss0_lie50.csv"));
  fs::remove_all(dir);

  CHECK_THROWS_AS(parseGrid(R"({"peers": 3})"), ConfigInvalid);
  CHECK_THROWS_AS(parseGrid(R"({"colour": [1]})"), ConfigInvalid);
}
