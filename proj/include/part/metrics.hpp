#pragma once

// Throughput accounting, cross-run aggregation, CSV output and the
// end-of-run property checks.

#include "part/world.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace part {

class LengthMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::size_t kRollingWindow = 10;
constexpr Round kExcludedRounds = 100;

/// Trailing mean over the last `window` values (fewer at the start).
std::vector<double> rollingMean(const std::vector<double>& x, std::size_t window = kRollingWindow);

struct RunMetrics {
  std::vector<RoundRecord> rounds;
  std::vector<double> rolling;  // rolling mean of first confirmations
};

RunMetrics summarize(const World& w);

struct AggregateRow {
  Round round = 0;
  double meanRolling = 0;
  double sdRolling = 0;
  double submitted = 0;
  double confirmedCum = 0;
  double forks = 0;
  bool excluded = false;
  double cumulativeRatio = 0;
};

struct Aggregate {
  std::string scenario;
  std::size_t runs = 0;
  std::vector<AggregateRow> rows;
};

Aggregate aggregate(const std::string& scenario, const std::vector<RunMetrics>& runs);

/// Column order is a stable contract with downstream plotting.
extern const char* const kCsvHeader;
void writeCsv(std::ostream& out, const Aggregate& a);

/// Mean of `meanRolling` over rounds [from, to).
double meanRolling(const Aggregate& a, Round from, Round to);
double meanForks(const Aggregate& a, Round from, Round to);

struct PropertyReport {
  bool confirmationValidity = true;
  bool branchCompatibility = true;
  bool progress = true;
  std::vector<std::string> counterexamples;

  bool safe() const { return confirmationValidity && branchCompatibility; }
  bool ok() const { return safe() && progress; }
};

PropertyReport checkProperties(const World& w);

/// Seed block shared by every peer's main chain, if all main chains agree
/// on the whole prefix up to and including it.
std::optional<BlockId> commonSeed(const World& w);

/// Length of the longest prefix shared by every peer's main chain.
std::size_t commonPrefixLength(const World& w);

}  // namespace part
