#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace curie::cpl {

// Byte-offset span into the source text plus 1-based line/column of both ends.
struct SourceSpan {
  std::size_t offset = 0;
  std::size_t length = 0;
  std::uint32_t line = 1;
  std::uint32_t column = 1;
  std::uint32_t end_line = 1;
  std::uint32_t end_column = 1;

  // Locations never participate in structural AST equality.
  friend bool operator==(const SourceSpan&, const SourceSpan&) { return true; }
};

struct StringLit {
  std::string text;
  bool operator==(const StringLit&) const = default;
};
struct NumberLit {
  double value = 0.0;
  bool operator==(const NumberLit&) const = default;
};
// A bare word used as a value, e.g. the `Asian` in `race=Asian`.
struct Identifier {
  std::string name;
  bool operator==(const Identifier&) const = default;
};
// `$name`
struct VarRef {
  std::string name;
  bool operator==(const VarRef&) const = default;
};

using Value = std::variant<StringLit, NumberLit, Identifier, VarRef>;

enum class Op { kEq, kLt, kGt, kNe, kIn };

struct Filter {
  std::string column;
  bool column_is_var = false;  // written as `$column`
  Op op = Op::kEq;
  Value value;
  SourceSpan span;
  bool operator==(const Filter&) const = default;
};

// The `size(data)` built-in.
struct SizeOfData {
  bool operator==(const SizeOfData&) const = default;
};

using Operand = std::variant<VarRef, Identifier, SizeOfData>;

struct Comparison {
  Operand lhs;
  Op op = Op::kEq;
  Value rhs;
  bool operator==(const Comparison&) const = default;
};

enum class Algorithm {
  kIntersectionSize,
  kJaccardIndex,
  kPearsonCorrelation,
  kCosineSimilarity,
};

struct Evaluate {
  std::string data_ref;  // identifier after '&'
  Algorithm algorithm = Algorithm::kIntersectionSize;
  double threshold = 0.0;
  bool operator==(const Evaluate&) const = default;
};

struct Conditional {
  std::variant<Comparison, Evaluate> body;
  SourceSpan span;
  bool operator==(const Conditional&) const = default;

  bool is_data_dependent() const {
    return std::holds_alternative<Evaluate>(body);
  }
};

struct TagRef {
  std::string tag;
  SourceSpan span;
  bool operator==(const TagRef&) const = default;
};

using Selections = std::variant<std::vector<Filter>, TagRef>;

enum class ClauseKind { kShare, kAcquire, kSub };

struct Clause {
  ClauseKind kind = ClauseKind::kShare;
  std::string tag;                   // only for kSub
  std::vector<std::string> members;  // empty = every member; never set for kSub
  std::vector<Conditional> conditionals;
  Selections selections;
  SourceSpan span;
  bool operator==(const Clause&) const = default;

  bool applies_to(std::string_view member) const;
};

struct Attribute {
  std::string name;
  std::vector<Value> values;
  bool is_list = false;  // written with the `<{..}, {..}>` list form
  SourceSpan span;
  bool operator==(const Attribute&) const = default;
};

struct PolicyAst {
  std::vector<Attribute> attributes;
  std::vector<Clause> clauses;      // share/acquire, in source order
  std::vector<Clause> sub_clauses;  // member-defined tags, in source order
  bool operator==(const PolicyAst&) const = default;

  const Attribute* find_attribute(std::string_view name) const;
  std::size_t clause_count() const {
    return clauses.size() + sub_clauses.size();
  }
};

std::string_view op_symbol(Op op);
std::string_view algorithm_name(Algorithm algorithm);
std::string_view clause_kind_name(ClauseKind kind);

}  // namespace curie::cpl
