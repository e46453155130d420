#include "jd2p/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace jd2p {

namespace pt = boost::property_tree;

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) out += fmt(values[i]); else out += std::to_string(values[i]);
  }
  return out;
}

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + s + "'");
  }
}

long long to_int(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + s + "'");
  }
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + s + "'");
}

template <typename T>
std::vector<T> to_list(const std::string& key, const std::string& s) {
  std::vector<T> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    if constexpr (std::is_floating_point_v<T>) out.push_back(to_double(key, item));
    else out.push_back(static_cast<T>(to_int(key, item)));
  }
  return out;
}

pt::ptree to_tree(const AppConfig& c) {
  pt::ptree t;
  const SimConfig& s = c.sim;
  t.put("run.seed", std::to_string(s.seed));
  t.put("run.rounds", std::to_string(s.rounds));
  t.put("run.output", c.output);
  t.put("timing.t0", fmt(s.t0));
  t.put("timing.tau", fmt(s.tau));
  t.put("channel.shape", fmt(s.channel_shape));
  t.put("energy.lambda", fmt(s.energy.lambda));
  t.put("energy.ell", std::to_string(s.energy.ell));
  t.put("energy.alpha", fmt(s.energy.alpha));
  const DeepeningParams& d = s.deepening;
  t.put("deepening.moc", to_string(d.moc));
  t.put("deepening.p_th", fmt(d.p_th));
  t.put("deepening.z_th", fmt(d.z_th));
  t.put("deepening.strategy", std::to_string(static_cast<int>(d.strategy)));
  t.put("deepening.epochs", std::to_string(d.train.epochs));
  t.put("deepening.batch_size", std::to_string(d.train.batch_size));
  t.put("deepening.learning_rate", fmt(d.train.learning_rate));
  t.put("deepening.momentum", fmt(d.train.momentum));
  t.put("deepening.c_slack", fmt(d.train.c_slack));
  t.put("deepening.hidden", join(d.hidden));
  t.put("rho.mode", s.rho_mode == RhoMode::Pilot ? "pilot" : "constant");
  t.put("rho.constant", fmt(s.rho_constant));
  t.put("prefetch.override", s.prefetch_override ? std::to_string(*s.prefetch_override) : "none");
  const DatasetConfig& ds = c.data;
  t.put("dataset.kind", ds.kind);
  t.put("dataset.images", ds.images);
  t.put("dataset.labels", ds.labels);
  t.put("dataset.classes", join(ds.classes));
  t.put("dataset.train", std::to_string(ds.train));
  t.put("dataset.test", std::to_string(ds.test));
  t.put("dataset.pilot", std::to_string(ds.pilot));
  t.put("dataset.full", ds.full ? "true" : "false");
  t.put("dataset.features", std::to_string(ds.features));
  t.put("dataset.per_class", std::to_string(ds.per_class));
  t.put("dataset.dim", std::to_string(ds.dim));
  t.put("dataset.separation", fmt(ds.separation));
  t.put("dataset.seed", std::to_string(ds.seed));
  t.put("dataset.quantize_bits", std::to_string(ds.quantize_bits));
  const ExperimentConfig& e = c.experiment;
  t.put("experiment.kind", e.kind);
  t.put("experiment.seeds", std::to_string(e.seeds));
  t.put("experiment.p_th", join(e.p_th));
  t.put("experiment.z_th", join(e.z_th));
  t.put("experiment.tau", join(e.tau));
  t.put("experiment.shape", join(e.shape));
  t.put("experiment.rounds", join(e.rounds));
  t.put("experiment.threads", std::to_string(e.threads));
  return t;
}

AppConfig from_tree(const pt::ptree& t) {
  auto get = [&](const std::string& key) { return t.get<std::string>(key); };
  AppConfig c;
  SimConfig& s = c.sim;
  s.seed = static_cast<std::uint64_t>(to_int("run.seed", get("run.seed")));
  s.rounds = static_cast<int>(to_int("run.rounds", get("run.rounds")));
  c.output = get("run.output");
  s.t0 = to_double("timing.t0", get("timing.t0"));
  s.tau = to_double("timing.tau", get("timing.tau"));
  s.channel_shape = to_double("channel.shape", get("channel.shape"));
  s.energy.lambda = to_double("energy.lambda", get("energy.lambda"));
  s.energy.ell = static_cast<int>(to_int("energy.ell", get("energy.ell")));
  s.energy.alpha = to_double("energy.alpha", get("energy.alpha"));
  DeepeningParams& d = s.deepening;
  d.moc = parse_moc_kind(get("deepening.moc"));
  // Each learner has its own epoch default; an explicit value wins.
  d.train = d.uses_svm() ? TrainSpec::svm_defaults() : TrainSpec::mlp_defaults();
  d.p_th = to_double("deepening.p_th", get("deepening.p_th"));
  d.z_th = to_double("deepening.z_th", get("deepening.z_th"));
  const auto strategy = to_int("deepening.strategy", get("deepening.strategy"));
  if (strategy != 1 && strategy != 2) throw std::invalid_argument("config: deepening.strategy must be 1 or 2");
  d.strategy = static_cast<TrainingStrategy>(strategy);
  const std::string epochs = get("deepening.epochs");
  if (epochs != "auto") d.train.epochs = static_cast<int>(to_int("deepening.epochs", epochs));
  d.train.batch_size = static_cast<int>(to_int("deepening.batch_size", get("deepening.batch_size")));
  d.train.learning_rate = to_double("deepening.learning_rate", get("deepening.learning_rate"));
  d.train.momentum = to_double("deepening.momentum", get("deepening.momentum"));
  d.train.c_slack = to_double("deepening.c_slack", get("deepening.c_slack"));
  d.hidden = to_list<int>("deepening.hidden", get("deepening.hidden"));
  const std::string mode = get("rho.mode");
  if (mode == "pilot") s.rho_mode = RhoMode::Pilot;
  else if (mode == "constant") s.rho_mode = RhoMode::Constant;
  else throw std::invalid_argument("config: rho.mode must be pilot or constant");
  s.rho_constant = to_double("rho.constant", get("rho.constant"));
  const std::string ov = get("prefetch.override");
  if (ov != "none") s.prefetch_override = to_int("prefetch.override", ov);
  DatasetConfig& ds = c.data;
  ds.kind = get("dataset.kind");
  if (ds.kind != "synthetic" && ds.kind != "idx") {
    throw std::invalid_argument("config: dataset.kind must be synthetic or idx");
  }
  ds.images = get("dataset.images");
  ds.labels = get("dataset.labels");
  ds.classes = to_list<int>("dataset.classes", get("dataset.classes"));
  ds.train = static_cast<std::size_t>(to_int("dataset.train", get("dataset.train")));
  ds.test = static_cast<std::size_t>(to_int("dataset.test", get("dataset.test")));
  ds.pilot = static_cast<std::size_t>(to_int("dataset.pilot", get("dataset.pilot")));
  ds.full = to_bool("dataset.full", get("dataset.full"));
  ds.features = static_cast<int>(to_int("dataset.features", get("dataset.features")));
  ds.per_class = static_cast<std::size_t>(to_int("dataset.per_class", get("dataset.per_class")));
  ds.dim = static_cast<int>(to_int("dataset.dim", get("dataset.dim")));
  ds.separation = to_double("dataset.separation", get("dataset.separation"));
  ds.seed = static_cast<std::uint64_t>(to_int("dataset.seed", get("dataset.seed")));
  ds.quantize_bits = static_cast<int>(to_int("dataset.quantize_bits", get("dataset.quantize_bits")));
  if (ds.quantize_bits < 0 || ds.quantize_bits > 52) {
    throw std::invalid_argument("config: dataset.quantize_bits must be in [0, 52]");
  }
  ExperimentConfig& e = c.experiment;
  e.kind = get("experiment.kind");
  e.seeds = static_cast<int>(to_int("experiment.seeds", get("experiment.seeds")));
  e.p_th = to_list<double>("experiment.p_th", get("experiment.p_th"));
  e.z_th = to_list<double>("experiment.z_th", get("experiment.z_th"));
  e.tau = to_list<double>("experiment.tau", get("experiment.tau"));
  e.shape = to_list<double>("experiment.shape", get("experiment.shape"));
  e.rounds = to_list<int>("experiment.rounds", get("experiment.rounds"));
  e.threads = static_cast<int>(to_int("experiment.threads", get("experiment.threads")));
  if (e.seeds < 1) throw std::invalid_argument("config: experiment.seeds must be >= 1");
  if (s.rounds > ds.features) throw std::invalid_argument("config: run.rounds exceeds dataset.features");
  s.validate();
  return c;
}

void set_key(pt::ptree& tree, const std::string& key, const std::string& value) {
  if (!tree.get_optional<std::string>(key)) {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  tree.put(key, value);
}

}  // namespace

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  pt::ptree file;
  try {
    pt::read_ini(in, file);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }
  pt::ptree tree = to_tree(AppConfig{});
  // The epoch default follows the learner unless set explicitly.
  tree.put("deepening.epochs", "auto");
  for (const auto& [section, body] : file) {
    if (body.empty()) throw std::invalid_argument("config: top-level key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set_key(tree, section + "." + key, value.data());
  }
  return from_tree(tree);
}

void apply_override(AppConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || assignment.find('.') > eq) {
    throw std::invalid_argument("override must look like section.key=value: '" + assignment + "'");
  }
  pt::ptree tree = to_tree(config);
  const std::string key = assignment.substr(0, eq);
  set_key(tree, key, assignment.substr(eq + 1));
  if (key == "deepening.moc") tree.put("deepening.epochs", "auto");
  config = from_tree(tree);
}

std::string dump_config(const AppConfig& config) {
  std::ostringstream out;
  pt::write_ini(out, to_tree(config));
  return out.str();
}

RawDataset load_raw(const DatasetConfig& c) {
  if (c.kind == "idx") {
    RawDataset raw = load_idx(c.images, c.labels);
    if (!c.classes.empty()) raw = select_classes(raw, c.classes);
    return raw;
  }
  return gen_synthetic(blob_params(c.per_class, c.dim, c.separation, c.seed));
}

PreparedData prepare_data(const DatasetConfig& c) {
  const RawDataset raw = load_raw(c);
  std::size_t n_train = c.train;
  if (c.full) {
    if (c.test + c.pilot >= raw.size()) throw std::invalid_argument("dataset: test + pilot exhaust the data");
    n_train = raw.size() - c.test - c.pilot;
  }
  // One shuffle; train, then test, then pilot rows.
  const Split first = split(raw, n_train, c.test + c.pilot, c.seed);
  std::vector<std::size_t> test_rows(c.test), pilot_rows(c.pilot);
  for (std::size_t i = 0; i < c.test; ++i) test_rows[i] = i;
  for (std::size_t i = 0; i < c.pilot; ++i) pilot_rows[i] = c.test + i;

  PreparedData out;
  auto model = std::make_shared<EmbeddingModel>(fit_pca(first.train.samples, c.features));
  out.train = embed_dataset(first.train, *model);
  out.test = embed_dataset(take_rows(first.test, test_rows), *model);
  out.pilot = embed_dataset(take_rows(first.test, pilot_rows), *model);
  if (c.quantize_bits > 0) {
    // The range comes from the training rows, as a deployed quantiser would.
    const FeatureRange range = feature_range(out.train);
    quantize_features(out.train, range, c.quantize_bits);
    quantize_features(out.test, range, c.quantize_bits);
    if (out.pilot.size() > 0) quantize_features(out.pilot, range, c.quantize_bits);
  }
  out.embedding = std::move(model);
  return out;
}

}  // namespace jd2p
