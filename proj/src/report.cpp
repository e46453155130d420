#include "jd2p/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace jd2p {

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw std::invalid_argument("csv: row width differs from header");
  rows.push_back(std::move(row));
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw std::out_of_range("csv: no column '" + name + "'");
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const std::string& s = rows.at(row).at(column(name));
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw std::invalid_argument("csv: '" + s + "' is not a number");
  return v;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const CsvTable& table) {
  if (table.descriptions.size() != table.columns.size()) {
    throw std::invalid_argument("csv: every column needs a description");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# schema:";
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    out << (i ? "; " : " ") << table.columns[i] << '=' << table.descriptions[i];
  }
  out << '\n';
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i].find_first_of(",\n\"") != std::string::npos) {
        throw std::invalid_argument("csv: field needs quoting: " + row[i]);
      }
      out << (i ? "," : "") << row[i];
    }
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# schema:", 0) != 0) {
    throw std::runtime_error(path + ": missing schema line");
  }
  CsvTable t;
  std::string schema = line.substr(9);
  for (std::string part : split_line(schema, ';')) {
    part.erase(0, part.find_first_not_of(' '));
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path + ": malformed schema entry");
    t.columns.push_back(part.substr(0, eq));
    t.descriptions.push_back(part.substr(eq + 1));
  }
  if (!std::getline(in, line) || split_line(line, ',') != t.columns) {
    throw std::runtime_error(path + ": header does not match schema");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.add_row(split_line(line, ','));
  }
  return t;
}

CsvTable ledger_table(const SimResult& r) {
  CsvTable t;
  t.columns = {"round", "gain", "acs_size", "offloaded", "prefetched", "wasted", "rho",
               "threshold", "offload_energy_j", "prefetch_energy_j", "cumulative_energy_j"};
  t.descriptions = {"round index k",
                    "channel gain h_k",
                    "candidate set size s_k",
                    "samples whose feature k was offloaded at the start of round k",
                    "samples whose feature k+1 was prefetched during round k",
                    "prefetched samples that settled in round k",
                    "reduction ratio used by the prefetch policy",
                    "clarity threshold of round k",
                    "offload energy in joules",
                    "prefetch energy in joules",
                    "energy spent up to and including round k"};
  for (const auto& l : r.ledger) {
    t.add_row({std::to_string(l.round), format_number(l.gain), std::to_string(l.acs_size),
               std::to_string(l.offloaded), std::to_string(l.prefetched), std::to_string(l.wasted),
               format_number(l.rho), format_number(l.threshold), format_number(l.offload_energy),
               format_number(l.prefetch_energy), format_number(l.cumulative_energy)});
  }
  return t;
}

CsvTable event_table(const SimResult& r) {
  CsvTable t;
  t.columns = {"round", "kind", "feature", "count", "bits", "duration_s", "gain", "energy_j"};
  t.descriptions = {"round index", "offload or prefetch", "feature index sent",
                    "number of samples in the batch", "bits sent", "transmission time",
                    "channel gain", "batch energy in joules"};
  for (const auto& e : r.events) {
    t.add_row({std::to_string(e.round), e.kind == TransmitKind::Offload ? "offload" : "prefetch",
               std::to_string(e.feature), std::to_string(e.samples.size()), format_number(e.bits),
               format_number(e.duration), format_number(e.gain), format_number(e.energy)});
  }
  return t;
}

CsvTable round_table(std::span<const RoundLog> logs) {
  CsvTable t;
  t.columns = {"round", "acs_size", "training_size", "threshold", "next_size", "train_accuracy",
               "heldout_accuracy", "note"};
  t.descriptions = {"round index k", "candidate set size", "rows used to train",
                    "clarity threshold", "candidates kept for round k+1",
                    "accuracy on the training rows", "cascade accuracy on held-out data (nan if none)",
                    "free-text remark"};
  for (const auto& l : logs) {
    t.add_row({std::to_string(l.round), std::to_string(l.acs_size), std::to_string(l.training_size),
               format_number(l.threshold), std::to_string(l.next_size),
               format_number(l.train_accuracy), format_number(l.heldout_accuracy.value_or(NAN)),
               l.note});
  }
  return t;
}

CsvTable loss_table(std::span<const RoundLog> logs) {
  CsvTable t;
  t.columns = {"round", "epoch", "global_epoch", "loss"};
  t.descriptions = {"round index", "epoch within the round (1-based)",
                    "epoch counted across rounds", "mean training cross-entropy"};
  int global = 0;
  for (const auto& l : logs) {
    for (std::size_t e = 0; e < l.epoch_loss.size(); ++e) {
      t.add_row({std::to_string(l.round), std::to_string(e + 1), std::to_string(++global),
                 format_number(l.epoch_loss[e])});
    }
  }
  return t;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

namespace {

void put_hex(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  out << buf;
}

double get_hex(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw std::runtime_error("embedding: truncated model");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (*end != '\0') throw std::runtime_error("embedding: bad number '" + tok + "'");
  return v;
}

}  // namespace

void save(std::ostream& out, const EmbeddingModel& m) {
  out << "jd2p-embedding 1\n" << m.raw_dim() << ' ' << m.feature_dim() << '\n';
  for (Eigen::Index i = 0; i < m.mean().size(); ++i) {
    put_hex(out, m.mean()(i));
    out << (i + 1 < m.mean().size() ? ' ' : '\n');
  }
  for (Eigen::Index i = 0; i < m.eigenvalues().size(); ++i) {
    put_hex(out, m.eigenvalues()(i));
    out << (i + 1 < m.eigenvalues().size() ? ' ' : '\n');
  }
  for (Eigen::Index r = 0; r < m.components().rows(); ++r) {
    for (Eigen::Index c = 0; c < m.components().cols(); ++c) {
      put_hex(out, m.components()(r, c));
      out << (c + 1 < m.components().cols() ? ' ' : '\n');
    }
  }
}

EmbeddingModel load_embedding(std::istream& in) {
  std::string magic;
  int version = 0, d = 0, f = 0;
  if (!(in >> magic >> version) || magic != "jd2p-embedding" || version != 1) {
    throw std::runtime_error("embedding: not a jd2p-embedding v1 file");
  }
  if (!(in >> d >> f) || d < 1 || f < 1) throw std::runtime_error("embedding: bad dimensions");
  Eigen::VectorXd mean(d), eig(f);
  Eigen::MatrixXd comp(f, d);
  for (int i = 0; i < d; ++i) mean(i) = get_hex(in);
  for (int i = 0; i < f; ++i) eig(i) = get_hex(in);
  for (int r = 0; r < f; ++r) {
    for (int c = 0; c < d; ++c) comp(r, c) = get_hex(in);
  }
  return EmbeddingModel(std::move(mean), std::move(comp), std::move(eig));
}

void save(std::ostream& out, const HierarchicalClassifier& cascade) {
  out << "jd2p-cascade 1 " << to_string(cascade.kind()) << ' ' << cascade.depth() << '\n';
  for (const auto& stage : cascade.stages()) {
    out << "threshold ";
    put_hex(out, stage.threshold);
    out << '\n';
    std::visit([&](const auto& c) { jd2p::save(out, c); }, stage.classifier);
  }
}

}  // namespace jd2p
