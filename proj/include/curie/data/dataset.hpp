#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "curie/cpl/ast.hpp"
#include "curie/error.hpp"

namespace curie::data {

CURIE_DEFINE_ERROR(UnknownColumn);
CURIE_DEFINE_ERROR(MissingValue);
CURIE_DEFINE_ERROR(DegenerateColumn);
CURIE_DEFINE_ERROR(InvalidProfile);

enum class ColumnType { kInteger, kReal, kCategorical, kBoolean };

struct ColumnSpec {
  std::string name;
  ColumnType type = ColumnType::kReal;
  std::vector<std::string> levels;  // categorical only; first is the reference
  // Public domain bounds used for consortium-wide normalization.
  std::optional<std::pair<double, double>> range;

  bool is_numeric() const {
    return type == ColumnType::kInteger || type == ColumnType::kReal;
  }
  bool operator==(const ColumnSpec&) const = default;
};

class Schema {
 public:
  Schema() = default;
  // Throws SchemaMismatch on duplicate names, a missing or non-real target,
  // or a categorical column without levels.
  Schema(std::vector<ColumnSpec> columns, std::string target);

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const std::string& target() const { return target_; }
  std::size_t target_index() const { return target_index_; }
  std::size_t size() const { return columns_.size(); }

  std::optional<std::size_t> find(std::string_view name) const;
  // Throws UnknownColumn.
  std::size_t index_of(std::string_view name) const;
  const ColumnSpec& column(std::string_view name) const {
    return columns_[index_of(name)];
  }

 private:
  std::vector<ColumnSpec> columns_;
  std::string target_;
  std::size_t target_index_ = 0;
};

std::string_view column_type_name(ColumnType type);

// Columnar table. Every cell is stored as a double: integers and reals as
// themselves, categoricals as their level index, booleans as 0/1.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Schema schema, std::string provenance = {});

  const Schema& schema() const { return schema_; }
  const std::string& provenance() const { return provenance_; }
  std::size_t rows() const { return rows_; }

  std::span<const double> column(std::size_t index) const {
    return columns_[index];
  }
  std::span<const double> column(std::string_view name) const {
    return columns_[schema_.index_of(name)];
  }
  double cell(std::size_t row, std::size_t col) const {
    return columns_[col][row];
  }
  std::vector<double> row(std::size_t index) const;
  std::span<const double> target() const {
    return columns_[schema_.target_index()];
  }

  // Cells must already be encoded and in schema order; throws TypeError on
  // a value the column type cannot hold.
  void append_row(std::span<const double> cells);
  void reserve(std::size_t rows);

  Dataset take_rows(std::span<const std::size_t> indices) const;
  // Rows of `other` appended to a copy of this (schemas must be equal).
  Dataset concat(const Dataset& other) const;

  // Human-readable cell (level name for categoricals).
  std::string cell_text(std::size_t row, std::size_t col) const;

 private:
  Schema schema_;
  std::string provenance_;
  std::vector<std::vector<double>> columns_;
  std::size_t rows_ = 0;
};

// Parses one textual cell according to its column type.
double parse_cell(const ColumnSpec& spec, std::string_view text);

// CSV ingestion. The header must name exactly the schema's columns in any
// order; empty cells are rejected with their row number (1-based, header = 0).
Dataset load_dataset(std::istream& csv, const Schema& schema,
                     std::string provenance = {});
void write_dataset(std::ostream& csv, const Dataset& ds);

// A selection with its value(s) already resolved to literals.
using Literal = std::variant<double, std::string>;
struct RowFilter {
  std::string column;
  cpl::Op op = cpl::Op::kEq;
  std::vector<Literal> values;  // exactly one unless op == kIn
  bool operator==(const RowFilter&) const = default;
};

std::string to_string(const RowFilter& filter);

// Rows satisfying every filter. Throws UnknownColumn or TypeError.
Dataset apply_selections(const Dataset& ds, std::span<const RowFilter> filters);
std::size_t count_selected(const Dataset& ds, std::span<const RowFilter> filters);

struct ColumnRange {
  std::string column;
  double min = 0.0;
  double max = 0.0;
  bool operator==(const ColumnRange&) const = default;
};

// Affine [min, max] -> [-1, 1] maps for every numeric column and the target.
class NormalizationMap {
 public:
  NormalizationMap() = default;
  explicit NormalizationMap(std::vector<ColumnRange> ranges);

  const std::vector<ColumnRange>& ranges() const { return ranges_; }
  const ColumnRange* find(std::string_view column) const;
  bool empty() const { return ranges_.empty(); }

  double normalize(std::string_view column, double v) const;
  double denormalize(std::string_view column, double v) const;

  // From the schema's declared ranges; throws DegenerateColumn or
  // SchemaMismatch when a numeric column has no declared range.
  static NormalizationMap from_schema(const Schema& schema);

 private:
  std::vector<ColumnRange> ranges_;
};

// Per-column min/max of `ds` itself; throws DegenerateColumn when max == min.
std::pair<Dataset, NormalizationMap> normalize_columns(const Dataset& ds);
// Applies an existing map. Values outside a column's range are clamped into
// [-1, 1] when `clamp` is set, otherwise they throw TypeError.
Dataset normalize_with(const Dataset& ds, const NormalizationMap& map,
                       bool clamp = true);

struct SchemaReport {
  bool ok = true;
  std::vector<std::string> mismatches;
};

// Name, type and level equality, order-insensitive.
SchemaReport check_shared_schema(const Schema& a, const Schema& b);

}  // namespace curie::data
