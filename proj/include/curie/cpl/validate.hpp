#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "curie/cpl/ast.hpp"

namespace curie::cpl {

enum class Severity { kError, kWarning };

struct Diagnostic {
  Severity severity = Severity::kError;
  SourceSpan location;
  std::string code;
  std::string message;

  // `file:line:col: severity[code]: message`
  std::string format(std::string_view file) const;
};

// Diagnostic codes.
inline constexpr std::string_view kUnresolvedTag = "E001";
inline constexpr std::string_view kDuplicateSubClause = "E002";
inline constexpr std::string_view kTagCycle = "E003";
inline constexpr std::string_view kTagShadowsAttribute = "E004";
inline constexpr std::string_view kUnreachableClause = "W001";
inline constexpr std::string_view kUnusedSubClause = "W002";

// Static checks over a parsed policy.
//
// Errors: a selection names a tag with no sub-clause; the same tag is defined
// twice with identical conditionals (the later one can never be chosen);
// tag references form a cycle; a tag reuses an attribute name.
// Warnings: a share/acquire clause follows an unconditional clause of the
// same kind that already covers all of its members; a sub-clause tag is
// never referenced.
std::vector<Diagnostic> validate(const PolicyAst& ast);

bool has_errors(const std::vector<Diagnostic>& diagnostics);

}  // namespace curie::cpl
