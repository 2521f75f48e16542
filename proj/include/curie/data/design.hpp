#pragma once

#include <span>
#include <string>
#include <vector>

#include "curie/data/dataset.hpp"

namespace curie::data {

// One column of the design matrix and where it comes from.
struct DesignColumn {
  enum class Kind { kIntercept, kNumeric, kIndicator };
  Kind kind = Kind::kIntercept;
  std::string name;          // e.g. "weight", "race=Asian"
  std::size_t source = 0;    // schema column index (unused for intercept)
  double level = 0.0;        // indicator fires when the cell equals this
  bool operator==(const DesignColumn&) const = default;
};

// Deterministic encoding derived from the schema alone, so every member of a
// consortium produces the same columns: intercept, numeric columns in schema
// order, then one indicator per non-reference categorical level (booleans
// count as a two-level categorical) in schema and level order.
class DesignEncoding {
 public:
  DesignEncoding() = default;
  explicit DesignEncoding(const Schema& schema);

  const std::vector<DesignColumn>& columns() const { return columns_; }
  std::size_t width() const { return columns_.size(); }

  // `cells` is a full dataset row in schema order (the target is ignored).
  void encode_row(std::span<const double> cells, std::span<double> out) const;

 private:
  std::vector<DesignColumn> columns_;
};

struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;  // row-major rows x cols
  std::vector<double> y;
  DesignEncoding encoding;

  std::span<const double> row(std::size_t r) const {
    return {x.data() + r * cols, cols};
  }
};

DesignMatrix to_design_matrix(const Dataset& ds);

}  // namespace curie::data
