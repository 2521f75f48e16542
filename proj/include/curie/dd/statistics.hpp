#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "curie/cpl/ast.hpp"
#include "curie/data/dataset.hpp"
#include "curie/error.hpp"
#include "json.hpp"

namespace curie::dd {

CURIE_DEFINE_ERROR(EmptyUnion);
CURIE_DEFINE_ERROR(ZeroVariance);
CURIE_DEFINE_ERROR(ZeroNorm);
CURIE_DEFINE_ERROR(LengthMismatch);
CURIE_DEFINE_ERROR(ColumnMismatch);

// Set statistics work on distinct values; duplicates are collapsed.
std::size_t intersection_size(std::span<const std::string> a,
                              std::span<const std::string> b);
std::size_t union_size(std::span<const std::string> a,
                       std::span<const std::string> b);
// |A n B| / |A u B|. Throws EmptyUnion.
double jaccard(std::span<const std::string> a, std::span<const std::string> b);

// Sample Pearson correlation. Throws LengthMismatch (or fewer than 2
// entries) and ZeroVariance.
double pearson(std::span<const double> a, std::span<const double> b);
// a.b / (|a||b|). Throws LengthMismatch and ZeroNorm.
double cosine(std::span<const double> a, std::span<const double> b);

// One member's view of a shared column.
struct DataRef {
  std::string member_id;
  std::string column;
  std::vector<std::string> items;  // textual cells, for set statistics
  std::vector<double> values;      // numeric cells, for vector statistics
  bool numeric = false;
};

// Throws ColumnMismatch when the column does not exist.
DataRef extract(const data::Dataset& ds, std::string_view column,
                std::string member_id);

// Plain statistic of the requested algorithm.
double statistic(cpl::Algorithm algorithm, const DataRef& a, const DataRef& b);

enum class Mode { kPlain, kBlinded };
// kBelow: "statistic < threshold" holds. kAbove flips it to ">".
enum class Comparator { kBelow, kAbove };

struct DDMessage {
  std::string from;
  std::string to;
  std::string kind;
  nlohmann::json payload;
};

struct DDOutcome {
  bool decision = false;
  double statistic = 0.0;
  std::vector<DDMessage> transcript;
};

struct DDOptions {
  Mode mode = Mode::kBlinded;
  Comparator comparator = Comparator::kBelow;
  bool audit = false;             // include the statistic in the response
  std::uint64_t session_seed = 0; // salts and masks derive from this
};

// Evaluates `cond` between the requester's and the owner's column. The owner
// computes the statistic and returns the decision. In blinded mode the
// requester's column only crosses as salted digests (set statistics) or as
// masked shares of a dealer-assisted scalar product (vector statistics).
DDOutcome evaluate_dd(const cpl::Evaluate& cond, const DataRef& requester,
                      const DataRef& owner, const DDOptions& options = {});

bool decide(double statistic, double threshold, Comparator comparator);

// JSON record of one evaluation: algorithm, threshold, statistic, decision.
nlohmann::json audit_record(const cpl::Evaluate& cond, const DDOutcome& outcome);

}  // namespace curie::dd
