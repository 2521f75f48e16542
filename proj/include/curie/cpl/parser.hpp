#pragma once

#include <bitset>
#include <string>
#include <string_view>
#include <vector>

#include "curie/cpl/ast.hpp"
#include "curie/cpl/lexer.hpp"

namespace curie::cpl {

class ParseError : public SyntaxError {
 public:
  ParseError(const std::string& message, SourceSpan span,
             std::vector<std::string> expected)
      : SyntaxError("ParseError", message, span),
        expected_(std::move(expected)) {}
  const std::vector<std::string>& expected() const noexcept {
    return expected_;
  }

 private:
  std::vector<std::string> expected_;
};

// Grammar productions (and their alternatives) the parser can record as it
// descends. Used by the corpus coverage test.
enum class Production {
  kCuriePolicy,
  kStatements,
  kShareClause,
  kAcquireClause,
  kAttributeValue,
  kAttributeValueList,
  kSubClause,
  kConditionalComparison,
  kConditionalEvaluate,
  kConditionalsEmpty,
  kSelectionsFilters,
  kSelectionsTag,
  kFiltersMultiple,
  kFilter,
  kFilterEmpty,
  kDataRef,
  kAlgIntersectionSize,
  kAlgJaccardIndex,
  kAlgPearsonCorrelation,
  kAlgCosineSimilarity,
  kThresholdFloat,
  kOpEq,
  kOpLt,
  kOpGt,
  kOpNe,
  kOpIn,
  kValueListMultiple,
  kMembersMultiple,
  kMemberEmpty,
  kVar,
  kValueString,
  kValueNumber,
  kValueIdentifier,
  kSizeOfData,
  kCount,
};

using ProductionSet = std::bitset<static_cast<std::size_t>(Production::kCount)>;

std::string_view production_name(Production p);

// Parses a complete policy document. Throws LexError or ParseError on the
// first problem found. When `coverage` is non-null the productions visited
// are OR-ed into it.
PolicyAst parse_policy(std::string_view text, ProductionSet* coverage = nullptr);

}  // namespace curie::cpl
