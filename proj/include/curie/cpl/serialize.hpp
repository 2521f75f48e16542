#pragma once

#include <string>

#include "curie/cpl/ast.hpp"

namespace curie::cpl {

// Canonical CPL text: attributes, then share/acquire clauses, then
// sub-clauses, one statement per line. Reparses to an equal AST.
std::string serialize(const PolicyAst& ast);

std::string to_string(const Value& value);
std::string to_string(const Filter& filter);
std::string to_string(const Conditional& conditional);
std::string to_string(const Clause& clause);

}  // namespace curie::cpl
