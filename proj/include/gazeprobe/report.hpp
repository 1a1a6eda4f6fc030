#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gazeprobe/probe.hpp"

namespace gazeprobe::report {

enum class Format { Csv, Json, Svg };

// Deterministic: same report -> same bytes. Undefined numbers are null.
std::string to_json(const probe::ProbeReport& report);
// Inverse of to_json for the fields the emitters use (tables, groups, config
// echo, counts). Pairs are not stored in JSON.
probe::ProbeReport from_json(std::string_view text);

enum class CsvField { Coefficient, PValue, N };

// Row label column then one column per table column. Undefined cells are "NA".
std::string table_csv(const probe::CorrelationTable& table, CsvField field = CsvField::Coefficient);

struct CsvMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<double>> values;  // NaN for NA
};
CsvMatrix parse_csv(std::string_view text);

// scope, signal, measure, task, sentence, word, model value, gaze value.
std::string pairs_tsv(const std::vector<probe::PairRecord>& pairs);

// File stem shared by the CSV and SVG emitted for a table.
std::string table_stem(const probe::ProbeReport& report, const probe::CorrelationTable& table);

// Shortest decimal that reads back to the same double.
std::string format_double(double v);

// Writes into `dir` (created if missing); returns the files written.
std::vector<std::filesystem::path> emit_report(const probe::ProbeReport& report, const std::filesystem::path& dir,
                                               const std::vector<Format>& formats = {Format::Csv, Format::Json,
                                                                                     Format::Svg});

}  // namespace gazeprobe::report
