#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "jd2p/config.hpp"
#include "jd2p/experiment.hpp"
#include "jd2p/report.hpp"

using namespace jd2p;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "jd2p_test_cli";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

AppConfig small_config() {
  AppConfig c;
  c.data.per_class = 200;
  c.data.train = 200;
  c.data.test = 100;
  c.data.pilot = 100;
  c.data.features = 5;
  c.sim.rounds = 5;
  c.experiment.seeds = 2;
  c.experiment.threads = 2;
  return c;
}

fs::path small_config_file(const std::string& name) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << "[run]\nrounds = 5\n\n[dataset]\nper_class = 200\ntrain = 200\ntest = 100\n"
                      "pilot = 100\nfeatures = 5\n\n[experiment]\nseeds = 2\nthreads = 2\n";
  return p;
}

int run_cli(const std::string& args, const fs::path& stderr_file) {
  const std::string cmd = std::string("\"") + JD2P_CLI + "\" " + args + " > /dev/null 2> \"" +
                          stderr_file.string() + "\"";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config file, overrides and the resolved dump round-trip") {
  const fs::path p = small_config_file("a.ini");
  AppConfig c = load_config(p.string());
  CHECK(c.sim.rounds == 5);
  CHECK(c.data.per_class == 200);
  CHECK(c.sim.deepening.train.epochs == TrainSpec::svm_defaults().epochs);
  apply_override(c, "deepening.p_th=0.99");
  CHECK(c.sim.deepening.p_th == 0.99);
  apply_override(c, "deepening.moc=posterior-gap");
  CHECK(c.sim.deepening.train.epochs == TrainSpec::mlp_defaults().epochs);
  apply_override(c, "dataset.quantize_bits=8");
  apply_override(c, "prefetch.override=0");
  CHECK(*c.sim.prefetch_override == 0);

  const std::string dumped = dump_config(c);
  const fs::path q = kRoot / "dump.ini";
  std::ofstream(q) << dumped;
  CHECK(dump_config(load_config(q.string())) == dumped);

  CHECK_THROWS_WITH(apply_override(c, "deepening.pth=1"), doctest::Contains("unknown key"));
  CHECK_THROWS(apply_override(c, "nonsense"));
  CHECK_THROWS(apply_override(c, "timing.tau=2"));
  CHECK_THROWS(apply_override(c, "run.rounds=abc"));
  std::ofstream(kRoot / "bad.ini") << "[energy]\nell = 3\ncolour = red\n";
  CHECK_THROWS_WITH(load_config((kRoot / "bad.ini").string()), doctest::Contains("energy.colour"));
}

TEST_CASE("prepared data splits are disjoint and sized") {
  AppConfig c = small_config();
  const PreparedData d = prepare_data(c.data);
  CHECK(d.train.size() == 200);
  CHECK(d.test.size() == 100);
  CHECK(d.pilot.size() == 100);
  CHECK(d.train.feature_dim() == 5);
  c.data.quantize_bits = 2;
  const PreparedData q = prepare_data(c.data);
  for (Eigen::Index j = 0; j < 5; ++j) {
    std::vector<double> values(q.train.features.col(j).data(), q.train.features.col(j).data() + 200);
    std::sort(values.begin(), values.end());
    CHECK(std::unique(values.begin(), values.end()) - values.begin() <= 4);
  }
}

TEST_CASE("csv schema line and round-trip") {
  CsvTable t;
  t.columns = {"a", "b"};
  t.descriptions = {"first", "second, with a comma"};
  t.add_row({"x", format_number(0.1)});
  t.add_row({"y", format_number(-1e-300)});
  CHECK_THROWS(t.add_row({"only one"}));
  const fs::path p = kRoot / "t.csv";
  fs::create_directories(kRoot);
  write_csv(p.string(), t);
  const std::string text = slurp(p);
  CHECK(text.rfind("# schema: ", 0) == 0);
  const CsvTable back = read_csv(p.string());
  CHECK(back.columns == t.columns);
  CHECK(back.descriptions == t.descriptions);
  CHECK(back.rows == t.rows);
  CHECK(back.number(0, "b") == 0.1);
  CHECK(back.number(1, "b") == -1e-300);
  CHECK_THROWS(back.column("c"));
}

TEST_CASE("embedding save and load are bit-exact") {
  const PreparedData d = prepare_data(small_config().data);
  std::stringstream s;
  save(s, *d.embedding);
  const EmbeddingModel back = load_embedding(s);
  CHECK(back.mean() == d.embedding->mean());
  CHECK(back.components() == d.embedding->components());
  CHECK(back.eigenvalues() == d.embedding->eigenvalues());
  std::stringstream junk("not a model");
  CHECK_THROWS(load_embedding(junk));
}

TEST_CASE("rounds sweep has one row per method and K") {
  AppConfig c = small_config();
  c.experiment.kind = "rounds-sweep";
  c.sim.rho_mode = RhoMode::Constant;
  const PreparedData d = prepare_data(c.data);
  const ExperimentOutput out = run_experiment(c, d);
  REQUIRE(out.tables.size() == 1);
  const CsvTable& t = out.tables[0].second;
  CHECK(out.tables[0].first == "rounds_energy.csv");
  std::map<std::string, int> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) ++rows[t.rows[i][t.column("series")]];
  CHECK(rows.size() == all_methods().size());
  for (const auto& [name, n] : rows) CHECK(n == 5);
  c.experiment.kind = "bogus";
  CHECK_THROWS(run_experiment(c, d));
}

TEST_CASE("energy gain shrinks as the training window grows") {
  AppConfig c = small_config();
  c.experiment.kind = "energy-vs-tau";
  c.experiment.tau = {0.1, 0.3, 0.5, 0.7, 0.9};
  c.experiment.seeds = 6;
  c.sim.rho_mode = RhoMode::Constant;
  c.sim.rho_constant = 0.6;
  const PreparedData d = prepare_data(c.data);
  const CsvTable t = run_experiment(c, d).tables.at(0).second;
  std::vector<double> x, y, se;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][t.column("series")] != "gain-db-jd2p") continue;
    x.push_back(t.number(i, "x"));
    y.push_back(t.number(i, "y"));
    se.push_back(t.number(i, "y_stderr"));
  }
  REQUIRE(x.size() == 5);
  // Least-squares slope and a two-sided trend check against its noise.
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / 5, my = std::accumulate(y.begin(), y.end(), 0.0) / 5;
  double sxx = 0.0, sxy = 0.0, var = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  for (std::size_t i = 0; i < 5; ++i) var += (x[i] - mx) * (x[i] - mx) * se[i] * se[i];
  const double slope = sxy / sxx, slope_se = std::sqrt(var) / sxx;
  CHECK(slope <= 2.0 * slope_se);
  // Adjacent points never rise by more than their combined noise.
  for (std::size_t i = 1; i < 5; ++i) CHECK(y[i] - y[i - 1] <= 2.0 * std::hypot(se[i], se[i - 1]));
}

TEST_CASE("parallel_for runs every index and rethrows") {
  std::vector<int> hit(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
    if (i == 7) throw std::runtime_error("boom");
  }), std::runtime_error);
}

TEST_CASE("binary: verbs, byte-identical reruns, error line") {
  const fs::path cfg = small_config_file("cli.ini");
  const fs::path err = kRoot / "stderr.txt";
  const fs::path a = kRoot / "run_a", b = kRoot / "run_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::string common = "-c \"" + cfg.string() + "\" -s experiment.threads=2 ";
  REQUIRE(run_cli("experiment -k rounds-sweep " + common + "-o \"" + a.string() + "\"", err) == 0);
  REQUIRE(run_cli("experiment -k rounds-sweep " + common + "-o \"" + b.string() + "\"", err) == 0);
  for (const char* f : {"rounds_energy.csv", "summary.json"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(fs::exists(a / "config.resolved.ini"));
  const CsvTable t = read_csv((a / "rounds_energy.csv").string());
  CHECK(t.rows.size() == 5 * all_methods().size());

  const fs::path s1 = kRoot / "sim_a", s2 = kRoot / "sim_b";
  REQUIRE(run_cli("simulate -m jd2p osc " + common + "--seed 4 -o \"" + s1.string() + "\"", err) == 0);
  REQUIRE(run_cli("simulate -m jd2p osc " + common + "--seed 4 -o \"" + s2.string() + "\"", err) == 0);
  CHECK(slurp(s1 / "ledger_jd2p.csv") == slurp(s2 / "ledger_jd2p.csv"));
  CHECK(slurp(s1 / "events_jd2p.csv") == slurp(s2 / "events_jd2p.csv"));
  CHECK(fs::exists(s1 / "ledger_osc.csv"));

  const fs::path e = kRoot / "embed";
  REQUIRE(run_cli("embed " + common + "-o \"" + e.string() + "\"", err) == 0);
  CHECK(read_csv((e / "eigenvalues.csv").string()).rows.size() == 5);
  const fs::path dp = kRoot / "deepen";
  REQUIRE(run_cli("deepen " + common + "-o \"" + dp.string() + "\"", err) == 0);
  CHECK(fs::exists(dp / "cascade.txt"));
  CHECK(read_csv((dp / "rounds.csv").string()).rows.size() >= 1);
  REQUIRE(run_cli("report \"" + a.string() + "\"", err) == 0);
  CHECK(slurp(a / "report.md").find("rounds_energy.csv") != std::string::npos);

  CHECK(run_cli("simulate " + common + "-s energy.colour=red -o \"" + (kRoot / "bad").string() + "\"", err) == 1);
  const auto line = nlohmann::json::parse(slurp(err));
  CHECK(line["verb"] == "simulate");
  CHECK(line["error"].get<std::string>().find("energy.colour") != std::string::npos);
  CHECK(run_cli("report \"" + (kRoot / "nowhere").string() + "\"", err) == 1);
  CHECK(nlohmann::json::parse(slurp(err))["verb"] == "report");
}
