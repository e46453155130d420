#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "jd2p/config.hpp"
#include "jd2p/report.hpp"
#include "jd2p/sim.hpp"

namespace jd2p {

/// Runs fn(0..count-1) on a small worker pool; the first exception is
/// rethrown after every worker stops. threads <= 0 uses the hardware count.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

/// JD2P (with rho from the pilot split when configured) followed by the
/// requested benchmarks at the JD2P feature budget. Keyed by method name.
std::map<std::string, SimResult> run_methods(const SimConfig& config, const PreparedData& data,
                                             const std::vector<BenchmarkKind>& methods);

std::vector<BenchmarkKind> all_methods();

/// JSON summary of one set of method results (energy, dB vs OSC, accuracy,
/// deepening ratio, feature count).
nlohmann::json summarize(const std::map<std::string, SimResult>& results);

struct ExperimentOutput {
  std::vector<std::pair<std::string, CsvTable>> tables;  // file name -> table
  nlohmann::json summary;
};

inline const std::vector<std::string> kExperimentKinds{
    "tradeoff-sweep", "depth-sweep", "energy-vs-tau", "rounds-sweep", "channel-shape-sweep"};

ExperimentOutput run_experiment(const AppConfig& config, const PreparedData& data);

/// Writes every table, summary.json and the resolved config into `dir`.
void write_experiment(const ExperimentOutput& output, const AppConfig& config,
                      const std::string& dir);

}  // namespace jd2p
