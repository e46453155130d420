// jd2p: embed / deepen / simulate / experiment / report.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "jd2p/config.hpp"
#include "jd2p/experiment.hpp"
#include "jd2p/report.hpp"

namespace fs = std::filesystem;
using namespace jd2p;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "config file (sections with key = value)");
  cmd->add_option("-s,--set", c.overrides, "override, e.g. deepening.p_th=0.99")->take_all();
  cmd->add_option("--seed", c.seed, "run seed");
  cmd->add_option("-o,--out", c.out, "output directory");
}

AppConfig resolve(const Common& c) {
  AppConfig cfg = c.config_path.empty() ? AppConfig{} : load_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (c.seed) cfg.sim.seed = *c.seed;
  if (!c.out.empty()) cfg.output = c.out;
  fs::create_directories(cfg.output);
  write_text(cfg.output + "/config.resolved.ini", dump_config(cfg));
  return cfg;
}

void cmd_embed(const AppConfig& cfg) {
  const PreparedData data = prepare_data(cfg.data);
  std::ofstream model(cfg.output + "/embedding.txt");
  save(model, *data.embedding);
  CsvTable eig;
  eig.columns = {"feature", "eigenvalue", "explained"};
  eig.descriptions = {"feature index in importance order", "variance along the component",
                      "cumulative fraction of the captured variance"};
  const Eigen::VectorXd& ev = data.embedding->eigenvalues();
  double run = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    run += ev(i);
    eig.add_row({std::to_string(i + 1), format_number(ev(i)), format_number(run / ev.sum())});
  }
  write_csv(cfg.output + "/eigenvalues.csv", eig);
  CsvTable feats;
  feats.columns = {"split", "label"};
  feats.descriptions = {"train or test", "class index"};
  for (int f = 1; f <= data.train.feature_dim(); ++f) {
    feats.columns.push_back("f" + std::to_string(f));
    feats.descriptions.push_back("feature " + std::to_string(f));
  }
  for (const auto* part : {&data.train, &data.test}) {
    for (std::size_t i = 0; i < part->size(); ++i) {
      std::vector<std::string> row{part == &data.train ? "train" : "test",
                                   std::to_string(part->labels[i])};
      for (Eigen::Index f = 0; f < part->features.cols(); ++f) {
        row.push_back(format_number(part->features(static_cast<Eigen::Index>(i), f)));
      }
      feats.add_row(std::move(row));
    }
  }
  write_csv(cfg.output + "/features.csv", feats);
  std::cout << "embedded " << data.train.size() << " train / " << data.test.size()
            << " test samples into " << data.train.feature_dim() << " features\n";
}

void cmd_deepen(const AppConfig& cfg) {
  const PreparedData data = prepare_data(cfg.data);
  DeepeningParams params = cfg.sim.deepening;
  params.train.seed = SeedStreams::from(cfg.sim.seed).learning;
  const DeepeningResult r =
      run_deepening(data.train, cfg.sim.rounds, params, data.embedding, &data.test);
  write_csv(cfg.output + "/rounds.csv", round_table(r.logs));
  if (!params.uses_svm()) write_csv(cfg.output + "/loss.csv", loss_table(r.logs));
  std::ofstream model(cfg.output + "/cascade.txt");
  save(model, r.classifier);
  nlohmann::json j;
  j["rounds_run"] = r.logs.size();
  j["deepening_ratio"] = deepening_ratio(r.chain_sizes, cfg.sim.rounds, data.train.size());
  j["heldout_accuracy"] = r.logs.back().heldout_accuracy.value_or(0.0);
  j["chain_sizes"] = r.chain_sizes;
  write_text(cfg.output + "/summary.json", j.dump(2) + "\n");
  std::cout << j.dump() << "\n";
}

void cmd_simulate(const AppConfig& cfg, const std::vector<std::string>& method_names) {
  const PreparedData data = prepare_data(cfg.data);
  std::vector<BenchmarkKind> methods;
  for (const auto& m : method_names) methods.push_back(parse_benchmark_kind(m));
  if (methods.empty()) methods = all_methods();
  const auto results = run_methods(cfg.sim, data, methods);
  for (const auto& [name, r] : results) {
    write_csv(cfg.output + "/ledger_" + name + ".csv", ledger_table(r));
    write_csv(cfg.output + "/events_" + name + ".csv", event_table(r));
  }
  const nlohmann::json j = summarize(results);
  write_text(cfg.output + "/summary.json", j.dump(2) + "\n");
  std::cout << j.dump() << "\n";
}

void cmd_experiment(AppConfig cfg, const std::string& kind) {
  if (!kind.empty()) cfg.experiment.kind = kind;
  const PreparedData data = prepare_data(cfg.data);
  const ExperimentOutput out = run_experiment(cfg, data);
  write_experiment(out, cfg, cfg.output);
  std::cout << out.summary.dump() << "\n";
}

// Re-reads every CSV in a directory and prints a compact per-series table.
void cmd_report(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("report: no directory " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::ostringstream md;
  for (const auto& path : files) {
    const CsvTable t = read_csv(path.string());
    md << "## " << path.filename().string() << " (" << t.rows.size() << " rows)\n\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i) md << "| " << t.columns[i] << ' ';
    md << "|\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i) md << "|---";
    md << "|\n";
    const std::size_t shown = std::min<std::size_t>(t.rows.size(), 60);
    for (std::size_t r = 0; r < shown; ++r) {
      for (const auto& cell : t.rows[r]) md << "| " << cell << ' ';
      md << "|\n";
    }
    if (shown < t.rows.size()) md << "\n(" << t.rows.size() - shown << " more rows)\n";
    md << "\n";
  }
  write_text(dir + "/report.md", md.str());
  std::cout << md.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint data deepening and prefetching simulator"};
  app.require_subcommand(1);

  Common common;
  auto* embed = app.add_subcommand("embed", "fit the embedding and write embedded features");
  auto* deepen = app.add_subcommand("deepen", "run data deepening and hierarchical inference");
  auto* simulate = app.add_subcommand("simulate", "run JD2P and benchmarks with energy ledgers");
  auto* experiment = app.add_subcommand("experiment", "run a parameter sweep");
  auto* report = app.add_subcommand("report", "summarise the CSV files of an output directory");
  for (auto* cmd : {embed, deepen, simulate, experiment}) add_common(cmd, common);
  std::vector<std::string> methods;
  simulate->add_option("-m,--method", methods, "methods to run (default: all)")->take_all();
  std::string kind;
  experiment->add_option("-k,--kind", kind, "tradeoff-sweep | depth-sweep | energy-vs-tau | "
                                            "rounds-sweep | channel-shape-sweep");
  std::string report_dir;
  report->add_option("dir", report_dir, "directory with CSV outputs")->required();

  std::string verb = "jd2p";
  try {
    app.parse(argc, argv);
    verb = app.get_subcommands().front()->get_name();
    if (verb == "report") {
      cmd_report(report_dir);
    } else {
      const AppConfig cfg = resolve(common);
      if (verb == "embed") cmd_embed(cfg);
      else if (verb == "deepen") cmd_deepen(cfg);
      else if (verb == "simulate") cmd_simulate(cfg, methods);
      else cmd_experiment(cfg, kind);
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << nlohmann::json{{"error", e.what()}, {"verb", verb}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}, {"verb", verb}}.dump() << "\n";
    return 1;
  }
  return 0;
}
