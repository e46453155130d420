#pragma once

#include <string>
#include <vector>

#include "jd2p/deepening.hpp"
#include "jd2p/sim.hpp"

namespace jd2p {

/// A CSV file whose first line is "# schema: col=meaning; ..." documenting
/// every column.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::string> descriptions;  // one per column
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

std::string format_number(double v);

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

CsvTable ledger_table(const SimResult& result);
CsvTable event_table(const SimResult& result);
CsvTable round_table(std::span<const RoundLog> logs);
/// One row per (round, epoch) for network runs.
CsvTable loss_table(std::span<const RoundLog> logs);

void write_text(const std::string& path, const std::string& text);

void save(std::ostream& out, const EmbeddingModel& model);
EmbeddingModel load_embedding(std::istream& in);
void save(std::ostream& out, const HierarchicalClassifier& cascade);

}  // namespace jd2p
