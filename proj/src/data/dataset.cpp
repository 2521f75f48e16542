#include "curie/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

namespace curie::data {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<double> parse_bool(std::string_view text) {
  const std::string t = lower(text);
  if (t == "1" || t == "true" || t == "yes") return 1.0;
  if (t == "0" || t == "false" || t == "no") return 0.0;
  return std::nullopt;
}

std::optional<double> parse_number(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

// One logical CSV record; supports quoted fields with doubled quotes and
// embedded separators/newlines.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c = 0;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (quoted) throw TypeError("unterminated quoted CSV field");
  fields.push_back(std::move(field));
  return any;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

bool matches(const ColumnSpec& spec, double cell, const RowFilter& f,
             const std::vector<double>& encoded) {
  switch (f.op) {
    case cpl::Op::kEq: return cell == encoded.front();
    case cpl::Op::kNe: return cell != encoded.front();
    case cpl::Op::kLt: return cell < encoded.front();
    case cpl::Op::kGt: return cell > encoded.front();
    case cpl::Op::kIn:
      return std::find(encoded.begin(), encoded.end(), cell) != encoded.end();
  }
  (void)spec;
  return false;
}

// Converts the filter's literals into the column's cell encoding.
std::vector<double> encode_filter(const ColumnSpec& spec, const RowFilter& f) {
  if (f.values.empty() || (f.op != cpl::Op::kIn && f.values.size() != 1)) {
    throw TypeError("filter on '" + f.column + "' has " +
                    std::to_string(f.values.size()) + " values");
  }
  if ((f.op == cpl::Op::kLt || f.op == cpl::Op::kGt) && !spec.is_numeric()) {
    throw TypeError("ordering comparison on " +
                    std::string(column_type_name(spec.type)) + " column '" +
                    spec.name + "'");
  }
  std::vector<double> out;
  for (const Literal& lit : f.values) {
    if (spec.is_numeric()) {
      if (const double* d = std::get_if<double>(&lit)) {
        out.push_back(*d);
        continue;
      }
      throw TypeError("column '" + spec.name + "' is numeric but filter value '" +
                      std::get<std::string>(lit) + "' is text");
    }
    if (spec.type == ColumnType::kBoolean) {
      std::optional<double> b;
      if (const double* d = std::get_if<double>(&lit)) {
        if (*d == 0.0 || *d == 1.0) b = *d;
      } else {
        b = parse_bool(std::get<std::string>(lit));
      }
      if (!b) throw TypeError("column '" + spec.name + "' expects a boolean");
      out.push_back(*b);
      continue;
    }
    const std::string* text = std::get_if<std::string>(&lit);
    if (text == nullptr) {
      throw TypeError("categorical column '" + spec.name +
                      "' compared with a number");
    }
    auto it = std::find(spec.levels.begin(), spec.levels.end(), *text);
    if (it == spec.levels.end()) {
      throw TypeError("'" + *text + "' is not a level of column '" + spec.name +
                      "'");
    }
    out.push_back(static_cast<double>(it - spec.levels.begin()));
  }
  return out;
}

std::vector<std::size_t> selected_rows(const Dataset& ds,
                                       std::span<const RowFilter> filters) {
  struct Prepared {
    std::size_t col;
    const RowFilter* filter;
    std::vector<double> encoded;
  };
  std::vector<Prepared> prepared;
  for (const RowFilter& f : filters) {
    const auto col = ds.schema().find(f.column);
    if (!col) throw UnknownColumn("unknown column '" + f.column + "'");
    const ColumnSpec& spec = ds.schema().columns()[*col];
    prepared.push_back({*col, &f, encode_filter(spec, f)});
  }
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    bool ok = true;
    for (const Prepared& p : prepared) {
      const ColumnSpec& spec = ds.schema().columns()[p.col];
      if (!matches(spec, ds.cell(r, p.col), *p.filter, p.encoded)) {
        ok = false;
        break;
      }
    }
    if (ok) keep.push_back(r);
  }
  return keep;
}

}  // namespace

Schema::Schema(std::vector<ColumnSpec> columns, std::string target)
    : columns_(std::move(columns)), target_(std::move(target)) {
  std::set<std::string> seen;
  for (const ColumnSpec& c : columns_) {
    if (!seen.insert(c.name).second) {
      throw SchemaMismatch("duplicate column '" + c.name + "'");
    }
    if (c.type == ColumnType::kCategorical && c.levels.empty()) {
      throw SchemaMismatch("categorical column '" + c.name + "' has no levels");
    }
    if (c.range && !(c.range->first < c.range->second)) {
      throw SchemaMismatch("column '" + c.name + "' has an empty range");
    }
  }
  const auto idx = find(target_);
  if (!idx) throw SchemaMismatch("target column '" + target_ + "' not declared");
  if (columns_[*idx].type != ColumnType::kReal) {
    throw SchemaMismatch("target column '" + target_ + "' must be real");
  }
  target_index_ = *idx;
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Schema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw UnknownColumn("unknown column '" + std::string(name) + "'");
}

std::string_view column_type_name(ColumnType type) {
  switch (type) {
    case ColumnType::kInteger: return "integer";
    case ColumnType::kReal: return "real";
    case ColumnType::kCategorical: return "categorical";
    case ColumnType::kBoolean: return "boolean";
  }
  return "?";
}

Dataset::Dataset(Schema schema, std::string provenance)
    : schema_(std::move(schema)),
      provenance_(std::move(provenance)),
      columns_(schema_.size()) {}

std::vector<double> Dataset::row(std::size_t index) const {
  std::vector<double> out(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) out[c] = columns_[c][index];
  return out;
}

void Dataset::append_row(std::span<const double> cells) {
  if (cells.size() != columns_.size()) {
    throw SchemaMismatch("row has " + std::to_string(cells.size()) +
                         " cells, schema has " + std::to_string(columns_.size()));
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const ColumnSpec& spec = schema_.columns()[c];
    const double v = cells[c];
    bool ok = std::isfinite(v);
    switch (spec.type) {
      case ColumnType::kInteger: ok = ok && v == std::floor(v); break;
      case ColumnType::kReal: break;
      case ColumnType::kCategorical:
        ok = ok && v == std::floor(v) && v >= 0 &&
             v < static_cast<double>(spec.levels.size());
        break;
      case ColumnType::kBoolean: ok = ok && (v == 0.0 || v == 1.0); break;
    }
    if (!ok) {
      throw TypeError("value " + format_double(v) + " is not a valid " +
                      std::string(column_type_name(spec.type)) +
                      " for column '" + spec.name + "'");
    }
  }
  for (std::size_t c = 0; c < cells.size(); ++c) columns_[c].push_back(cells[c]);
  ++rows_;
}

void Dataset::reserve(std::size_t rows) {
  for (auto& c : columns_) c.reserve(rows);
}

Dataset Dataset::take_rows(std::span<const std::size_t> indices) const {
  Dataset out(schema_, provenance_);
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    out.columns_[c].reserve(indices.size());
    for (std::size_t r : indices) out.columns_[c].push_back(columns_[c][r]);
  }
  out.rows_ = indices.size();
  return out;
}

Dataset Dataset::concat(const Dataset& other) const {
  if (!(other.schema_.columns() == schema_.columns())) {
    throw SchemaMismatch("cannot concatenate datasets with different schemas");
  }
  Dataset out = *this;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    out.columns_[c].insert(out.columns_[c].end(), other.columns_[c].begin(),
                           other.columns_[c].end());
  }
  out.rows_ += other.rows_;
  return out;
}

std::string Dataset::cell_text(std::size_t row, std::size_t col) const {
  const ColumnSpec& spec = schema_.columns()[col];
  const double v = columns_[col][row];
  switch (spec.type) {
    case ColumnType::kCategorical: return spec.levels[static_cast<std::size_t>(v)];
    case ColumnType::kBoolean: return v != 0.0 ? "yes" : "no";
    default: return format_double(v);
  }
}

double parse_cell(const ColumnSpec& spec, std::string_view text) {
  if (text.empty()) throw MissingValue("missing value in column '" + spec.name + "'");
  switch (spec.type) {
    case ColumnType::kInteger:
    case ColumnType::kReal: {
      auto v = parse_number(text);
      if (!v || (spec.type == ColumnType::kInteger && *v != std::floor(*v))) {
        throw TypeError("'" + std::string(text) + "' is not a valid " +
                        std::string(column_type_name(spec.type)));
      }
      return *v;
    }
    case ColumnType::kBoolean: {
      auto v = parse_bool(text);
      if (!v) throw TypeError("'" + std::string(text) + "' is not a boolean");
      return *v;
    }
    case ColumnType::kCategorical: {
      auto it = std::find(spec.levels.begin(), spec.levels.end(), text);
      if (it == spec.levels.end()) {
        throw TypeError("'" + std::string(text) + "' is not a level of '" +
                        spec.name + "'");
      }
      return static_cast<double>(it - spec.levels.begin());
    }
  }
  return 0.0;
}

Dataset load_dataset(std::istream& csv, const Schema& schema,
                     std::string provenance) {
  std::vector<std::string> fields;
  if (!read_record(csv, fields)) {
    throw SchemaMismatch("CSV input has no header row");
  }
  std::vector<std::size_t> slot(fields.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto idx = schema.find(fields[i]);
    if (!idx) throw SchemaMismatch("CSV column '" + fields[i] + "' is not in the schema");
    if (!seen.insert(fields[i]).second) {
      throw SchemaMismatch("CSV column '" + fields[i] + "' appears twice");
    }
    slot[i] = *idx;
  }
  for (const ColumnSpec& c : schema.columns()) {
    if (!seen.contains(c.name)) {
      throw SchemaMismatch("CSV is missing schema column '" + c.name + "'");
    }
  }
  Dataset ds(schema, std::move(provenance));
  std::vector<double> cells(schema.size());
  std::size_t row = 0;
  while (read_record(csv, fields)) {
    ++row;
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != slot.size()) {
      throw SchemaMismatch("row " + std::to_string(row) + " has " +
                           std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(slot.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const ColumnSpec& spec = schema.columns()[slot[i]];
      try {
        cells[slot[i]] = parse_cell(spec, fields[i]);
      } catch (const MissingValue&) {
        throw MissingValue("row " + std::to_string(row) + " column '" +
                           spec.name + "': missing value");
      } catch (const TypeError& e) {
        throw TypeError("row " + std::to_string(row) + " column '" + spec.name +
                        "': " + e.what());
      }
    }
    ds.append_row(cells);
  }
  return ds;
}

void write_dataset(std::ostream& csv, const Dataset& ds) {
  const auto& cols = ds.schema().columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    csv << (c ? "," : "") << csv_escape(cols[c].name);
  }
  csv << '\n';
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      csv << (c ? "," : "") << csv_escape(ds.cell_text(r, c));
    }
    csv << '\n';
  }
}

std::string to_string(const RowFilter& filter) {
  auto lit = [](const Literal& l) {
    if (const double* d = std::get_if<double>(&l)) return format_double(*d);
    return "\"" + std::get<std::string>(l) + "\"";
  };
  std::string out = filter.column + " " + std::string(cpl::op_symbol(filter.op)) + " ";
  if (filter.op == cpl::Op::kIn) {
    out += "{";
    for (std::size_t i = 0; i < filter.values.size(); ++i) {
      out += (i ? ", " : "") + lit(filter.values[i]);
    }
    out += "}";
  } else if (!filter.values.empty()) {
    out += lit(filter.values.front());
  }
  return out;
}

Dataset apply_selections(const Dataset& ds, std::span<const RowFilter> filters) {
  if (filters.empty()) return ds;
  const auto keep = selected_rows(ds, filters);
  return ds.take_rows(keep);
}

std::size_t count_selected(const Dataset& ds, std::span<const RowFilter> filters) {
  if (filters.empty()) return ds.rows();
  return selected_rows(ds, filters).size();
}

NormalizationMap::NormalizationMap(std::vector<ColumnRange> ranges)
    : ranges_(std::move(ranges)) {
  for (const ColumnRange& r : ranges_) {
    if (!(r.max > r.min)) {
      throw DegenerateColumn("column '" + r.column + "' has max <= min");
    }
  }
}

const ColumnRange* NormalizationMap::find(std::string_view column) const {
  for (const ColumnRange& r : ranges_) {
    if (r.column == column) return &r;
  }
  return nullptr;
}

double NormalizationMap::normalize(std::string_view column, double v) const {
  const ColumnRange* r = find(column);
  if (r == nullptr) return v;
  return 2.0 * (v - r->min) / (r->max - r->min) - 1.0;
}

double NormalizationMap::denormalize(std::string_view column, double v) const {
  const ColumnRange* r = find(column);
  if (r == nullptr) return v;
  return (v + 1.0) * 0.5 * (r->max - r->min) + r->min;
}

NormalizationMap NormalizationMap::from_schema(const Schema& schema) {
  std::vector<ColumnRange> ranges;
  for (const ColumnSpec& c : schema.columns()) {
    if (!c.is_numeric()) continue;
    if (!c.range) {
      throw SchemaMismatch("numeric column '" + c.name +
                           "' has no declared range for normalization");
    }
    ranges.push_back({c.name, c.range->first, c.range->second});
  }
  return NormalizationMap(std::move(ranges));
}

std::pair<Dataset, NormalizationMap> normalize_columns(const Dataset& ds) {
  std::vector<ColumnRange> ranges;
  for (std::size_t c = 0; c < ds.schema().size(); ++c) {
    const ColumnSpec& spec = ds.schema().columns()[c];
    if (!spec.is_numeric()) continue;
    const auto col = ds.column(c);
    if (col.empty()) throw DegenerateColumn("column '" + spec.name + "' is empty");
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    if (!(*hi > *lo)) {
      throw DegenerateColumn("column '" + spec.name + "' is constant");
    }
    ranges.push_back({spec.name, *lo, *hi});
  }
  NormalizationMap map(std::move(ranges));
  return {normalize_with(ds, map, /*clamp=*/false), std::move(map)};
}

Dataset normalize_with(const Dataset& ds, const NormalizationMap& map, bool clamp) {
  // Normalized integer columns are no longer integral, so the result uses a
  // schema where every numeric column is real.
  std::vector<ColumnSpec> cols = ds.schema().columns();
  for (ColumnSpec& c : cols) {
    if (c.type == ColumnType::kInteger) c.type = ColumnType::kReal;
    if (c.is_numeric()) c.range = std::make_pair(-1.0, 1.0);
  }
  Dataset out(Schema(std::move(cols), ds.schema().target()), ds.provenance());
  out.reserve(ds.rows());
  std::vector<double> cells(ds.schema().size());
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const ColumnSpec& spec = ds.schema().columns()[c];
      double v = ds.cell(r, c);
      if (spec.is_numeric()) {
        v = map.normalize(spec.name, v);
        if (v < -1.0 || v > 1.0) {
          if (!clamp) {
            throw TypeError("value in column '" + spec.name +
                            "' lies outside the normalization range");
          }
          v = std::clamp(v, -1.0, 1.0);
        }
      }
      cells[c] = v;
    }
    out.append_row(cells);
  }
  return out;
}

SchemaReport check_shared_schema(const Schema& a, const Schema& b) {
  SchemaReport report;
  auto fail = [&](std::string msg) {
    report.ok = false;
    report.mismatches.push_back(std::move(msg));
  };
  for (const ColumnSpec& ca : a.columns()) {
    const auto j = b.find(ca.name);
    if (!j) {
      fail("column '" + ca.name + "' missing from second schema");
      continue;
    }
    const ColumnSpec& cb = b.columns()[*j];
    if (ca.type != cb.type) {
      fail("column '" + ca.name + "' type " +
           std::string(column_type_name(ca.type)) + " vs " +
           std::string(column_type_name(cb.type)));
    } else if (ca.levels != cb.levels) {
      fail("column '" + ca.name + "' levels differ");
    }
  }
  for (const ColumnSpec& cb : b.columns()) {
    if (!a.find(cb.name)) fail("column '" + cb.name + "' missing from first schema");
  }
  if (a.target() != b.target()) {
    fail("target '" + a.target() + "' vs '" + b.target() + "'");
  }
  return report;
}

}  // namespace curie::data
