#include "jd2p/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "jd2p/stats.hpp"

namespace jd2p {

std::string to_string(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::OSC: return "osc";
    case BenchmarkKind::RandomData: return "random-data";
    case BenchmarkKind::RandomFeature: return "random-feature";
    case BenchmarkKind::ImportanceAware: return "importance-aware";
    case BenchmarkKind::DeepeningOnly: return "deepening-only";
    case BenchmarkKind::JD2P: return "jd2p";
  }
  return "unknown";
}

BenchmarkKind parse_benchmark_kind(const std::string& name) {
  for (auto k : {BenchmarkKind::OSC, BenchmarkKind::RandomData, BenchmarkKind::RandomFeature,
                 BenchmarkKind::ImportanceAware, BenchmarkKind::DeepeningOnly,
                 BenchmarkKind::JD2P}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown benchmark '" + name + "'");
}

void SimConfig::validate() const {
  if (rounds < 1) throw std::invalid_argument("config: rounds must be >= 1");
  RoundTiming check(t0, tau);
  energy.validate();
  if (!(channel_shape > 1.0)) throw std::invalid_argument("config: channel shape must exceed 1");
  if (!(rho_constant >= 0.0 && rho_constant <= 1.0)) {
    throw std::invalid_argument("config: rho outside [0, 1]");
  }
  deepening.train.validate();
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Appends an event and returns its energy. Empty batches are skipped.
double transmit(std::vector<TransmitEvent>& log, int round, TransmitKind kind, int feature,
                std::vector<std::size_t> samples, double duration, double gain,
                const EnergyParams& params) {
  if (samples.empty()) return 0.0;
  TransmitEvent e;
  e.round = round;
  e.kind = kind;
  e.feature = feature;
  e.bits = params.alpha * static_cast<double>(samples.size());
  e.samples = std::move(samples);
  e.duration = duration;
  e.gain = gain;
  e.energy = tx_energy(e.bits, duration, gain, params);
  log.push_back(std::move(e));
  return log.back().energy;
}

ChannelModel make_channel(const SimConfig& config, std::uint64_t seed) {
  return ChannelModel(config.channel_shape, seed);
}

std::size_t count_features(const std::vector<TransmitEvent>& events) {
  std::size_t n = 0;
  for (const auto& e : events) n += e.samples.size();
  return n;
}

int predict_label(const DepthClassifier& c, const EmbeddingModel* embedding,
                  const Eigen::Ref<const Eigen::VectorXd>& features, int depth) {
  if (const auto* svm = std::get_if<LinearSvm>(&c)) return svm->predict(features.head(depth));
  return std::get<Mlp>(c).predict(embedding->reconstruct(features, depth));
}

}  // namespace

SeedStreams SeedStreams::from(std::uint64_t seed) {
  const std::uint64_t base = splitmix(seed);
  return {splitmix(base ^ 0x1), splitmix(base ^ 0x2), splitmix(base ^ 0x3), splitmix(base ^ 0x4)};
}

double deepening_ratio(std::span<const std::size_t> chain, int rounds, std::size_t num_samples) {
  if (rounds < 1 || num_samples == 0) throw std::invalid_argument("deepening_ratio: empty run");
  double total = 0.0;
  for (std::size_t k = 0; k < chain.size() && k < static_cast<std::size_t>(rounds); ++k) {
    total += static_cast<double>(chain[k]);
  }
  return total / (static_cast<double>(rounds) * static_cast<double>(num_samples));
}

std::vector<double> estimate_rho(const EmbeddedDataset& pilot, const SimConfig& config,
                                 std::shared_ptr<const EmbeddingModel> embedding) {
  DeepeningParams params = config.deepening;
  params.train.seed = SeedStreams::from(config.seed).learning;
  const DeepeningResult r = run_deepening(pilot, config.rounds, params, std::move(embedding));
  std::vector<std::size_t> sizes;
  for (const auto& s : r.states) sizes.push_back(s.members.size());
  sizes.resize(static_cast<std::size_t>(config.rounds) + 1, 0);
  std::vector<double> rho(static_cast<std::size_t>(config.rounds), 0.0);
  for (std::size_t k = 0; k < rho.size(); ++k) {
    if (sizes[k] > 0) rho[k] = static_cast<double>(sizes[k + 1]) / static_cast<double>(sizes[k]);
  }
  return rho;
}

double replay_energy(std::span<const TransmitEvent> events, const EnergyParams& params) {
  double total = 0.0;
  for (const auto& e : events) {
    total += tx_energy(params.alpha * static_cast<double>(e.samples.size()), e.duration, e.gain,
                       params);
  }
  return total;
}

SimResult run_jd2p(const SimConfig& config, const SimInputs& inputs) {
  config.validate();
  if (!inputs.train) throw std::invalid_argument("run_jd2p: no training data");
  const EmbeddedDataset& train = *inputs.train;
  const auto K = static_cast<std::size_t>(config.rounds);
  if (config.rho_mode == RhoMode::Pilot && inputs.rho.size() < K) {
    throw std::invalid_argument("run_jd2p: pilot mode needs one rho per round");
  }
  const SeedStreams seeds = SeedStreams::from(config.seed);
  ChannelModel channel = make_channel(config, seeds.channel);
  std::mt19937_64 pick(seeds.prefetch);
  const double nu = inverse_mean_gain(channel);
  const RoundTiming timing = config.timing();
  const EnergyParams& ep = config.energy;

  DeepeningParams params = config.deepening;
  params.train.seed = seeds.learning;
  DeepeningSession session(train, config.rounds, params, inputs.embedding, inputs.heldout);

  SimResult out;
  out.kind = config.prefetch_override && *config.prefetch_override == 0 ? BenchmarkKind::DeepeningOnly
                                                                         : BenchmarkKind::JD2P;
  const std::size_t M = train.size();
  std::vector<std::size_t> everyone(M);
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});

  double h = channel.sample_gain();
  double cumulative = 0.0;
  RoundLedger row;
  row.round = 1;
  row.gain = h;
  row.acs_size = M;
  row.offloaded = M;
  row.offload_energy = transmit(out.events, 1, TransmitKind::Offload, 1, everyone,
                                timing.t_offload(), h, ep);

  std::vector<bool> prefetched(M, false);
  for (int k = 1;; ++k) {
    const AcsState& state = session.state();
    row.rho = config.rho_mode == RhoMode::Pilot ? inputs.rho[static_cast<std::size_t>(k - 1)]
                                                : config.rho_constant;
    session.train_round();

    // Prefetch during the training window; nothing to prefetch after round K.
    std::fill(prefetched.begin(), prefetched.end(), false);
    if (k < config.rounds) {
      const auto s = static_cast<std::int64_t>(state.members.size());
      std::int64_t p = 0;
      if (config.prefetch_override) {
        p = std::clamp<std::int64_t>(*config.prefetch_override, 0, s);
      } else {
        p = optimal_prefetch({static_cast<double>(s), row.rho, h, nu}, timing, ep).p_rounded;
      }
      std::vector<std::size_t> pool = state.members;
      for (std::int64_t i = 0; i < p; ++i) {
        std::uniform_int_distribution<std::size_t> u(static_cast<std::size_t>(i), pool.size() - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[u(pick)]);
      }
      pool.resize(static_cast<std::size_t>(p));
      std::sort(pool.begin(), pool.end());
      for (std::size_t m : pool) prefetched[m] = true;
      row.prefetched = pool.size();
      row.prefetch_energy = transmit(out.events, k, TransmitKind::Prefetch, k + 1, std::move(pool),
                                     timing.tau(), h, ep);
    }

    const AcsState& next = session.close_round();
    row.threshold = session.logs().back().threshold;
    std::vector<std::size_t> to_offload;
    std::size_t kept = 0;
    for (std::size_t m : next.members) {
      if (prefetched[m]) ++kept; else to_offload.push_back(m);
    }
    row.wasted = row.prefetched - kept;
    cumulative += row.offload_energy + row.prefetch_energy;
    row.cumulative_energy = cumulative;
    out.ledger.push_back(row);
    if (session.done()) break;

    h = channel.sample_gain();
    row = RoundLedger{};
    row.round = k + 1;
    row.gain = h;
    row.acs_size = next.members.size();
    row.offloaded = to_offload.size();
    row.offload_energy = transmit(out.events, k + 1, TransmitKind::Offload, k + 1,
                                  std::move(to_offload), timing.t_offload(), h, ep);
  }

  out.chain_sizes = session.chain_sizes();
  out.logs = session.logs();
  out.classifier = session.classifier();
  if (inputs.heldout && !out.logs.empty() && out.logs.back().heldout_accuracy) {
    out.accuracy = *out.logs.back().heldout_accuracy;
  }
  out.deepening_ratio = deepening_ratio(out.chain_sizes, config.rounds, M);
  out.features_sent = count_features(out.events);
  return out;
}

std::vector<std::size_t> rank_by_uncertainty(std::span<const double> moc_values) {
  std::vector<std::size_t> order(moc_values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return moc_values[a] < moc_values[b]; });
  return order;
}

namespace {

// received(m, j) says whether feature j of sample m reached the server.
using Mask = std::vector<std::vector<bool>>;

DepthClassifier train_on_mask(const SimConfig& config, const SimInputs& inputs, const Mask& mask,
                              int depth, std::uint64_t seed) {
  const EmbeddedDataset& train = *inputs.train;
  std::vector<Eigen::Index> rows;
  for (std::size_t m = 0; m < mask.size(); ++m) {
    if (std::find(mask[m].begin(), mask[m].end(), true) != mask[m].end()) {
      rows.push_back(static_cast<Eigen::Index>(m));
    }
  }
  Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), depth);
  std::vector<int> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto m = static_cast<std::size_t>(rows[i]);
    for (int j = 0; j < depth; ++j) {
      if (mask[m][static_cast<std::size_t>(j)]) feats(static_cast<Eigen::Index>(i), j) = train.features(rows[i], j);
    }
    labels.push_back(train.labels[m]);
  }
  TrainSpec spec = config.deepening.train;
  spec.seed = seed;
  if (config.deepening.uses_svm()) return train_svm(feats, labels, spec).model;
  const EmbeddingModel& e = *inputs.embedding;
  Eigen::MatrixXd raw = feats * e.components().topRows(depth);
  raw.rowwise() += e.mean().transpose();
  return train_mlp(raw, labels, train.num_classes, config.deepening.hidden, spec).model;
}

double heldout_accuracy(const DepthClassifier& c, const SimInputs& inputs, int depth) {
  if (!inputs.heldout || inputs.heldout->size() == 0) return 0.0;
  const EmbeddedDataset& test = *inputs.heldout;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto x = test.features.row(static_cast<Eigen::Index>(i)).transpose();
    correct += predict_label(c, inputs.embedding.get(), x, depth) == test.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

// Sends the masked features round by round: feature k in round k, rounds
// 1..K-1 over t0 and round K over t0 - tau.
void bill_mask(SimResult& out, const SimConfig& config, const Mask& mask, ChannelModel& channel) {
  const RoundTiming timing = config.timing();
  double cumulative = 0.0;
  for (int k = 1; k <= config.rounds; ++k) {
    std::vector<std::size_t> senders;
    for (std::size_t m = 0; m < mask.size(); ++m) {
      if (mask[m][static_cast<std::size_t>(k - 1)]) senders.push_back(m);
    }
    RoundLedger row;
    row.round = k;
    row.gain = channel.sample_gain();
    row.acs_size = senders.size();
    row.offloaded = senders.size();
    const double duration = k < config.rounds ? timing.t0() : timing.t_offload();
    row.offload_energy = transmit(out.events, k, TransmitKind::Offload, k, std::move(senders),
                                  duration, row.gain, config.energy);
    cumulative += row.offload_energy;
    row.cumulative_energy = cumulative;
    out.ledger.push_back(row);
  }
}

}  // namespace

SimResult run_benchmark(BenchmarkKind kind, const SimConfig& config, const SimInputs& inputs,
                        std::optional<std::size_t> budget) {
  if (kind == BenchmarkKind::JD2P) return run_jd2p(config, inputs);
  if (kind == BenchmarkKind::DeepeningOnly) {
    SimConfig c = config;
    c.prefetch_override = 0;
    return run_jd2p(c, inputs);
  }
  config.validate();
  if (!inputs.train) throw std::invalid_argument("run_benchmark: no training data");
  const EmbeddedDataset& train = *inputs.train;
  const std::size_t M = train.size();
  const auto K = static_cast<std::size_t>(config.rounds);
  if (static_cast<int>(K) > train.feature_dim()) throw std::invalid_argument("run_benchmark: K > F");
  if (!config.deepening.uses_svm() && !inputs.embedding) {
    throw std::invalid_argument("run_benchmark: network benchmarks need the embedding");
  }
  const SeedStreams seeds = SeedStreams::from(config.seed);
  ChannelModel channel = make_channel(config, seeds.channel);
  std::mt19937_64 rng(seeds.sampling);

  std::size_t B = M * K;
  if (kind != BenchmarkKind::OSC) {
    if (!budget) throw std::invalid_argument("run_benchmark: sampling benchmarks need a budget");
    B = std::min(*budget, M * K);
  }

  Mask mask(M, std::vector<bool>(K, false));
  auto give = [&](std::size_t m, std::size_t from, std::size_t count) {
    for (std::size_t j = from; j < from + count && j < K; ++j) mask[m][j] = true;
  };
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), std::size_t{0});

  switch (kind) {
    case BenchmarkKind::OSC:
      for (std::size_t m = 0; m < M; ++m) give(m, 0, K);
      break;
    case BenchmarkKind::RandomData: {
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t full = B / K;
      for (std::size_t i = 0; i < full; ++i) give(order[i], 0, K);
      if (full < M) give(order[full], 0, B % K);
      break;
    }
    case BenchmarkKind::RandomFeature: {
      std::vector<std::size_t> cells(M * K);
      std::iota(cells.begin(), cells.end(), std::size_t{0});
      for (std::size_t i = 0; i < B; ++i) {
        std::uniform_int_distribution<std::size_t> u(i, cells.size() - 1);
        std::swap(cells[i], cells[u(rng)]);
        mask[cells[i] / K][cells[i] % K] = true;
      }
      break;
    }
    case BenchmarkKind::ImportanceAware: {
      // Everyone sends feature 1; the most uncertain samples then take the rest.
      for (std::size_t m = 0; m < M; ++m) give(m, 0, 1);
      const DepthClassifier first = train_on_mask(config, inputs, mask, 1, seeds.learning);
      std::vector<double> clarity(M);
      for (std::size_t m = 0; m < M; ++m) {
        const auto x = train.features.row(static_cast<Eigen::Index>(m)).transpose();
        if (const auto* svm = std::get_if<LinearSvm>(&first)) {
          clarity[m] = moc(config.deepening.moc, *svm, x.head(1));
        } else {
          clarity[m] = moc(config.deepening.moc, std::get<Mlp>(first),
                           inputs.embedding->reconstruct(x, 1));
        }
      }
      order = rank_by_uncertainty(clarity);
      if (K > 1 && B > M) {
        const std::size_t extra = B - M;
        const std::size_t full = std::min(extra / (K - 1), M);
        for (std::size_t i = 0; i < full; ++i) give(order[i], 1, K - 1);
        if (full < M) give(order[full], 1, extra % (K - 1));
      }
      break;
    }
    default:
      throw std::invalid_argument("run_benchmark: unsupported kind");
  }

  SimResult out;
  out.kind = kind;
  bill_mask(out, config, mask, channel);
  const DepthClassifier model =
      train_on_mask(config, inputs, mask, static_cast<int>(K), seeds.learning + K);
  out.accuracy = heldout_accuracy(model, inputs, static_cast<int>(K));
  out.features_sent = count_features(out.events);
  out.deepening_ratio = static_cast<double>(out.features_sent) / static_cast<double>(M * K);
  for (const auto& row : out.ledger) out.chain_sizes.push_back(row.acs_size);
  return out;
}

RoundPairSample simulate_round_pair(std::int64_t num_samples, double rho, const RoundTiming& timing,
                                    double channel_shape, const EnergyParams& params,
                                    std::uint64_t seed) {
  if (num_samples < 1) throw std::invalid_argument("simulate_round_pair: need M >= 1");
  const SeedStreams seeds = SeedStreams::from(seed);
  ChannelModel channel(channel_shape, seeds.channel);
  std::mt19937_64 rng(seeds.sampling);
  const double nu = inverse_mean_gain(channel);
  const double h_k = channel.sample_gain();
  const double h_next = channel.sample_gain();
  const double h_osc = channel.sample_gain();

  const PrefetchDecision d =
      optimal_prefetch({static_cast<double>(num_samples), rho, h_k, nu}, timing, params);
  std::binomial_distribution<std::int64_t> survive(num_samples - d.p_rounded, rho);
  const std::int64_t n = survive(rng);

  RoundPairSample out;
  if (d.p_rounded > 0) {
    out.jd2p += tx_energy(params.alpha * static_cast<double>(d.p_rounded), timing.tau(), h_k, params);
  }
  if (n > 0) {
    out.jd2p += tx_energy(params.alpha * static_cast<double>(n), timing.t_offload(), h_next, params);
  }
  out.osc = tx_energy(params.alpha * static_cast<double>(num_samples), timing.t0(), h_osc, params);
  return out;
}

}  // namespace jd2p
