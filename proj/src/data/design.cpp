#include "curie/data/design.hpp"

namespace curie::data {

DesignEncoding::DesignEncoding(const Schema& schema) {
  columns_.push_back({DesignColumn::Kind::kIntercept, "intercept", 0, 0.0});
  const auto& cols = schema.columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c == schema.target_index() || !cols[c].is_numeric()) continue;
    columns_.push_back({DesignColumn::Kind::kNumeric, cols[c].name, c, 0.0});
  }
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c == schema.target_index()) continue;
    const ColumnSpec& spec = cols[c];
    if (spec.type == ColumnType::kCategorical) {
      for (std::size_t level = 1; level < spec.levels.size(); ++level) {
        columns_.push_back({DesignColumn::Kind::kIndicator,
                            spec.name + "=" + spec.levels[level], c,
                            static_cast<double>(level)});
      }
    } else if (spec.type == ColumnType::kBoolean) {
      columns_.push_back({DesignColumn::Kind::kIndicator, spec.name, c, 1.0});
    }
  }
}

void DesignEncoding::encode_row(std::span<const double> cells,
                                std::span<double> out) const {
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const DesignColumn& d = columns_[j];
    switch (d.kind) {
      case DesignColumn::Kind::kIntercept: out[j] = 1.0; break;
      case DesignColumn::Kind::kNumeric: out[j] = cells[d.source]; break;
      case DesignColumn::Kind::kIndicator:
        out[j] = cells[d.source] == d.level ? 1.0 : 0.0;
        break;
    }
  }
}

DesignMatrix to_design_matrix(const Dataset& ds) {
  DesignMatrix dm;
  dm.encoding = DesignEncoding(ds.schema());
  dm.rows = ds.rows();
  dm.cols = dm.encoding.width();
  dm.x.resize(dm.rows * dm.cols);
  dm.y.assign(ds.target().begin(), ds.target().end());
  std::vector<double> cells(ds.schema().size());
  for (std::size_t r = 0; r < dm.rows; ++r) {
    for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = ds.cell(r, c);
    dm.encoding.encode_row(cells, {dm.x.data() + r * dm.cols, dm.cols});
  }
  return dm;
}

}  // namespace curie::data
