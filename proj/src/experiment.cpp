#include "jd2p/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace jd2p {

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

std::vector<BenchmarkKind> all_methods() {
  return {BenchmarkKind::JD2P, BenchmarkKind::DeepeningOnly, BenchmarkKind::OSC,
          BenchmarkKind::RandomData, BenchmarkKind::RandomFeature, BenchmarkKind::ImportanceAware};
}

std::map<std::string, SimResult> run_methods(const SimConfig& config, const PreparedData& data,
                                             const std::vector<BenchmarkKind>& methods) {
  SimInputs in{&data.train, &data.test, data.embedding, {}};
  if (config.rho_mode == RhoMode::Pilot) {
    if (data.pilot.size() == 0) throw std::invalid_argument("pilot rho mode needs pilot rows");
    in.rho = estimate_rho(data.pilot, config, data.embedding);
  }
  std::map<std::string, SimResult> out;
  const SimResult reference = run_jd2p(config, in);
  for (BenchmarkKind kind : methods) {
    if (kind == BenchmarkKind::JD2P) {
      out[to_string(kind)] = reference;
    } else {
      out[to_string(kind)] = run_benchmark(kind, config, in, reference.features_sent);
    }
  }
  return out;
}

nlohmann::json summarize(const std::map<std::string, SimResult>& results) {
  nlohmann::json j = nlohmann::json::object();
  const auto osc = results.find(to_string(BenchmarkKind::OSC));
  for (const auto& [name, r] : results) {
    nlohmann::json m;
    m["total_energy_j"] = r.total_energy();
    if (osc != results.end() && r.total_energy() > 0.0) {
      m["energy_db_vs_osc"] = 10.0 * std::log10(r.total_energy() / osc->second.total_energy());
    }
    m["accuracy"] = r.accuracy;
    m["deepening_ratio"] = r.deepening_ratio;
    m["features_sent"] = r.features_sent;
    j[name] = m;
  }
  return j;
}

namespace {

struct Stat {
  double mean = 0.0;
  double stderr_ = 0.0;
};

Stat stat(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return s;
}

CsvTable point_table(const std::string& x_meaning, const std::string& y_meaning,
                     const std::string& param_meaning) {
  CsvTable t;
  t.columns = {"series", "param", "x", "x_stderr", "y", "y_stderr", "runs"};
  t.descriptions = {"method or derived series", param_meaning, x_meaning + " (mean over seeds)",
                    "standard error of x", y_meaning + " (mean over seeds)", "standard error of y",
                    "number of seeds"};
  return t;
}

// One measured quantity per (series, param) cell, accumulated over seeds.
struct Accumulator {
  struct Cell {
    std::vector<double> x, y;
  };
  std::vector<std::pair<std::string, double>> order;
  std::map<std::pair<std::string, double>, Cell> cells;

  void add(const std::string& series, double param, double x, double y) {
    const auto key = std::make_pair(series, param);
    if (!cells.count(key)) order.push_back(key);
    cells[key].x.push_back(x);
    cells[key].y.push_back(y);
  }

  void emit(CsvTable& t) const {
    for (const auto& key : order) {
      const Cell& c = cells.at(key);
      const Stat sx = stat(c.x), sy = stat(c.y);
      t.add_row({key.first, format_number(key.second), format_number(sx.mean),
                 format_number(sx.stderr_), format_number(sy.mean), format_number(sy.stderr_),
                 std::to_string(c.x.size())});
    }
  }
};

using Grid = std::vector<double>;

// Runs methods for every (grid value, seed) pair in parallel and returns the
// results in grid-major, seed-minor order.
std::vector<std::map<std::string, SimResult>> sweep(
    const AppConfig& config, const PreparedData& data, const Grid& grid,
    const std::function<void(SimConfig&, double)>& apply, const std::vector<BenchmarkKind>& methods) {
  const auto seeds = static_cast<std::size_t>(config.experiment.seeds);
  std::vector<std::map<std::string, SimResult>> results(grid.size() * seeds);
  parallel_for(results.size(), config.experiment.threads, [&](std::size_t i) {
    SimConfig c = config.sim;
    apply(c, grid[i / seeds]);
    c.seed = config.sim.seed + i % seeds;
    c.validate();
    results[i] = run_methods(c, data, methods);
  });
  return results;
}

Grid to_grid(const std::vector<int>& v) { return Grid(v.begin(), v.end()); }

}  // namespace

ExperimentOutput run_experiment(const AppConfig& config, const PreparedData& data) {
  const ExperimentConfig& e = config.experiment;
  const auto seeds = static_cast<std::size_t>(e.seeds);
  ExperimentOutput out;
  out.summary["experiment"] = e.kind;
  out.summary["seeds"] = e.seeds;
  out.summary["moc"] = to_string(config.sim.deepening.moc);

  if (e.kind == "tradeoff-sweep") {
    const bool svm = config.sim.deepening.uses_svm();
    const Grid grid = svm ? e.p_th : e.z_th;
    if (grid.empty()) throw std::invalid_argument("tradeoff-sweep: empty threshold grid");
    const auto results = sweep(config, data, grid, [&](SimConfig& c, double g) {
      if (svm) c.deepening.p_th = g; else c.deepening.z_th = g;
      c.rho_mode = RhoMode::Constant;  // energy is not reported here
    }, {BenchmarkKind::DeepeningOnly, BenchmarkKind::OSC});
    Accumulator acc;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      const double g = grid[i / seeds];
      acc.add("jd2p", g, r.at("deepening-only").deepening_ratio, r.at("deepening-only").accuracy);
      acc.add("osc", g, 1.0, r.at("osc").accuracy);
    }
    CsvTable t = point_table("deepening ratio", "held-out accuracy",
                             svm ? "p_th" : "z_th");
    acc.emit(t);
    out.tables.emplace_back("tradeoff.csv", std::move(t));
  } else if (e.kind == "depth-sweep" || e.kind == "rounds-sweep") {
    const Grid grid = to_grid(e.rounds);
    if (grid.empty()) throw std::invalid_argument(e.kind + ": empty rounds grid");
    for (int k : e.rounds) {
      if (k < 1 || k > data.train.feature_dim()) {
        throw std::invalid_argument(e.kind + ": rounds grid value outside [1, F]");
      }
    }
    const auto results = sweep(config, data, grid, [](SimConfig& c, double k) {
      c.rounds = static_cast<int>(k);
    }, all_methods());
    Accumulator depth, energy, rounds;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const double k = grid[i / seeds];
      for (const auto& [name, r] : results[i]) {
        depth.add(name, k, k, r.accuracy);
        energy.add(name, k, r.total_energy(), r.accuracy);
        rounds.add(name, k, k, r.total_energy());
      }
    }
    if (e.kind == "depth-sweep") {
      CsvTable a = point_table("number of features K", "held-out accuracy", "K");
      depth.emit(a);
      CsvTable b = point_table("total energy (J)", "held-out accuracy", "K");
      energy.emit(b);
      out.tables.emplace_back("depth_accuracy.csv", std::move(a));
      out.tables.emplace_back("energy_accuracy.csv", std::move(b));
    } else {
      CsvTable t = point_table("number of rounds K", "total energy (J)", "K");
      rounds.emit(t);
      out.tables.emplace_back("rounds_energy.csv", std::move(t));
    }
  } else if (e.kind == "energy-vs-tau" || e.kind == "channel-shape-sweep") {
    const bool tau = e.kind == "energy-vs-tau";
    const Grid grid = tau ? e.tau : e.shape;
    if (grid.empty()) throw std::invalid_argument(e.kind + ": empty grid");
    const auto results = sweep(config, data, grid, [&](SimConfig& c, double v) {
      if (tau) c.tau = v; else c.channel_shape = v;
    }, {BenchmarkKind::JD2P, BenchmarkKind::DeepeningOnly, BenchmarkKind::OSC});
    Accumulator acc;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const double v = grid[i / seeds];
      const auto& r = results[i];
      const double osc = r.at("osc").total_energy();
      for (const auto& [name, res] : r) acc.add("energy-" + name, v, v, res.total_energy());
      acc.add("gain-db-jd2p", v, v, 10.0 * std::log10(osc / r.at("jd2p").total_energy()));
      acc.add("gain-db-deepening-only", v, v,
              10.0 * std::log10(osc / r.at("deepening-only").total_energy()));
    }
    CsvTable t = point_table(tau ? "training window tau (s)" : "channel shape beta",
                             "total energy (J) or gain over OSC (dB)", tau ? "tau" : "beta");
    acc.emit(t);
    out.tables.emplace_back(tau ? "energy_vs_tau.csv" : "energy_vs_shape.csv", std::move(t));
  } else {
    throw std::invalid_argument("unknown experiment kind '" + e.kind + "'");
  }

  // Training-loss curves of the first seed, for network runs.
  if (!config.sim.deepening.uses_svm()) {
    SimConfig c = config.sim;
    c.rho_mode = RhoMode::Constant;
    SimInputs in{&data.train, &data.test, data.embedding, {}};
    const SimResult r = run_benchmark(BenchmarkKind::DeepeningOnly, c, in);
    out.tables.emplace_back("loss.csv", loss_table(r.logs));
  }

  nlohmann::json files = nlohmann::json::array();
  for (const auto& [name, table] : out.tables) files.push_back(name);
  out.summary["files"] = files;
  return out;
}

void write_experiment(const ExperimentOutput& output, const AppConfig& config,
                      const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, table] : output.tables) write_csv(dir + "/" + name, table);
  write_text(dir + "/summary.json", output.summary.dump(2) + "\n");
  write_text(dir + "/config.resolved.ini", dump_config(config));
}

}  // namespace jd2p
