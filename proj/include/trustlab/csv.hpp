#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "trustlab/dataset.hpp"
#include "trustlab/matrix.hpp"

namespace trustlab {

struct CsvTable {
    std::vector<std::string> header;  // empty when the input had none
    Matrix values;
};

/// Reads comma-separated numeric records (LF or CRLF, double-quoted fields
/// allowed). The first record is treated as a header when any of its cells
/// is not a number. Blank lines are ignored. Throws ParseError carrying the
/// 1-based line number for ragged rows and non-numeric or non-finite cells,
/// and when there are no data rows.
CsvTable read_csv_table(std::string_view bytes);

/// The last `target_columns` columns become targets, the rest are min-max
/// normalized features.
Dataset parse_csv(std::string_view bytes, std::size_t target_columns, std::string name = {});

/// Header plus raw features and targets, shortest round-trip formatting.
/// Columns are named from `dataset.columns`, else x0.., y0...
std::string write_csv(const Dataset& dataset);

/// Number of trailing header columns whose name starts with 'y'; 0 when
/// the input has no header.
std::size_t infer_target_columns(std::string_view bytes);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace trustlab
