#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "jd2p/deepening.hpp"
#include "jd2p/embedding.hpp"
#include "jd2p/prefetch.hpp"

namespace jd2p {

enum class BenchmarkKind { OSC, RandomData, RandomFeature, ImportanceAware, DeepeningOnly, JD2P };

std::string to_string(BenchmarkKind kind);
BenchmarkKind parse_benchmark_kind(const std::string& name);

enum class RhoMode { Constant, Pilot };

struct SimConfig {
  int rounds = 10;
  double t0 = 1.0;
  double tau = 0.5;
  double channel_shape = 2.0;  // infinity gives h == 1
  EnergyParams energy;
  DeepeningParams deepening;
  RhoMode rho_mode = RhoMode::Pilot;
  double rho_constant = 0.5;
  std::uint64_t seed = 1;
  /// Forces every prefetch count to this value (clamped to the candidate
  /// set) instead of the closed-form policy.
  std::optional<std::int64_t> prefetch_override;

  RoundTiming timing() const { return {t0, tau}; }
  void validate() const;
};

/// Independent per-run RNG streams derived from one seed, so switching off a
/// stage never perturbs the draws of another.
struct SeedStreams {
  std::uint64_t channel;
  std::uint64_t prefetch;
  std::uint64_t learning;
  std::uint64_t sampling;

  static SeedStreams from(std::uint64_t seed);
};

enum class TransmitKind { Offload, Prefetch };

/// One batched uplink transmission: `samples` each send feature `feature`.
struct TransmitEvent {
  int round = 0;
  TransmitKind kind = TransmitKind::Offload;
  int feature = 0;
  std::vector<std::size_t> samples;
  double bits = 0.0;
  double duration = 0.0;
  double gain = 1.0;
  double energy = 0.0;
};

struct RoundLedger {
  int round = 0;
  double gain = 1.0;           // h_k
  std::size_t acs_size = 0;    // s_k
  std::size_t offloaded = 0;   // n_k, feature k sent after round k-1
  std::size_t prefetched = 0;  // p_k, feature k+1 sent during round k
  std::size_t wasted = 0;      // prefetched members that settled in round k
  double rho = 0.0;
  double threshold = 0.0;
  double offload_energy = 0.0;
  double prefetch_energy = 0.0;
  double cumulative_energy = 0.0;
};

struct SimResult {
  BenchmarkKind kind = BenchmarkKind::JD2P;
  std::vector<RoundLedger> ledger;
  std::vector<TransmitEvent> events;
  std::vector<std::size_t> chain_sizes;
  std::optional<HierarchicalClassifier> classifier;
  std::vector<RoundLog> logs;
  double accuracy = 0.0;       // held-out
  double deepening_ratio = 0.0;
  std::size_t features_sent = 0;

  double total_energy() const { return ledger.empty() ? 0.0 : ledger.back().cumulative_energy; }
};

/// Sum over |S^(k)| divided by K * M; rounds after termination count as 0.
double deepening_ratio(std::span<const std::size_t> chain, int rounds, std::size_t num_samples);

/// rho_k = |S^(k+1)| / |S^(k)| for k = 1..K from a deepening run on `pilot`.
std::vector<double> estimate_rho(const EmbeddedDataset& pilot, const SimConfig& config,
                                 std::shared_ptr<const EmbeddingModel> embedding = nullptr);

/// Bundles the data a run needs. `rho` must hold K entries in pilot mode;
/// otherwise config.rho_constant is used.
struct SimInputs {
  const EmbeddedDataset* train = nullptr;
  const EmbeddedDataset* heldout = nullptr;
  std::shared_ptr<const EmbeddingModel> embedding;
  std::vector<double> rho;
};

SimResult run_jd2p(const SimConfig& config, const SimInputs& inputs);

/// Runs one benchmark. The sampling benchmarks spend exactly `budget`
/// features; pass the features_sent of a reference JD2P run.
SimResult run_benchmark(BenchmarkKind kind, const SimConfig& config, const SimInputs& inputs,
                        std::optional<std::size_t> budget = std::nullopt);

/// Sums tx_energy over the event log.
double replay_energy(std::span<const TransmitEvent> events, const EnergyParams& params);

/// Sample order for importance-aware sampling: lowest depth-1 MoC (most
/// uncertain) first, ties by index.
std::vector<std::size_t> rank_by_uncertainty(std::span<const double> moc_values);

struct RoundPairSample {
  double jd2p = 0.0;  // prefetch in round k plus offload in round k+1
  double osc = 0.0;   // one OSC round of M samples over t0
};

/// One Monte Carlo draw of the round-(k+1) JD2P energy against an OSC round,
/// with s_k = M candidates surviving independently with probability rho.
RoundPairSample simulate_round_pair(std::int64_t num_samples, double rho, const RoundTiming& timing,
                                    double channel_shape, const EnergyParams& params,
                                    std::uint64_t seed);

}  // namespace jd2p
