#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "jd2p/dataset.hpp"
#include "jd2p/sim.hpp"

namespace jd2p {

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | idx
  std::string images;
  std::string labels;
  std::vector<int> classes;        // empty keeps every class
  std::size_t train = 2000;
  std::size_t test = 1000;
  std::size_t pilot = 500;         // disjoint rows for rho estimation
  bool full = false;               // use every remaining row for training
  int features = 10;               // F
  std::size_t per_class = 1750;    // synthetic only
  int dim = 12;
  double separation = 3.0;
  std::uint64_t seed = 1;
  int quantize_bits = 0;           // 0 keeps features unquantised
};

struct ExperimentConfig {
  std::string kind = "tradeoff-sweep";
  int seeds = 3;
  std::vector<double> p_th{0.95, 0.97, 0.98, 0.99, 0.995};
  std::vector<double> z_th{0.01, 0.03, 0.05, 0.07, 0.09};
  std::vector<double> tau{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> shape{2.0, 4.0, 8.0};
  std::vector<int> rounds{1, 2, 3, 4, 5};
  int threads = 0;  // 0 = hardware concurrency
};

struct AppConfig {
  SimConfig sim;
  DatasetConfig data;
  ExperimentConfig experiment;
  std::string output = "out";
};

/// Reads a sectioned key = value file over the defaults. Unknown sections or
/// keys are errors, so the file plus defaults fully determine a run.
AppConfig load_config(const std::string& path);

/// Applies one "section.key=value" override.
void apply_override(AppConfig& config, const std::string& assignment);

/// The fully resolved configuration in the same format load_config reads.
std::string dump_config(const AppConfig& config);

struct PreparedData {
  std::shared_ptr<const EmbeddingModel> embedding;
  EmbeddedDataset train;
  EmbeddedDataset test;
  EmbeddedDataset pilot;
};

/// Loads or generates the raw data, splits train/test/pilot disjointly, fits
/// the embedding on the training rows only and embeds all three.
PreparedData prepare_data(const DatasetConfig& config);
RawDataset load_raw(const DatasetConfig& config);

}  // namespace jd2p
