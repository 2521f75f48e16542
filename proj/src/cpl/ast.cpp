#include "curie/cpl/ast.hpp"

#include <algorithm>

namespace curie::cpl {

bool Clause::applies_to(std::string_view member) const {
  return members.empty() ||
         std::find(members.begin(), members.end(), member) != members.end();
}

const Attribute* PolicyAst::find_attribute(std::string_view name) const {
  for (const Attribute& a : attributes) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::string_view op_symbol(Op op) {
  switch (op) {
    case Op::kEq: return "=";
    case Op::kLt: return "<";
    case Op::kGt: return ">";
    case Op::kNe: return "!=";
    case Op::kIn: return "in";
  }
  return "?";
}

std::string_view algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kIntersectionSize: return "Intersection size";
    case Algorithm::kJaccardIndex: return "Jaccard index";
    case Algorithm::kPearsonCorrelation: return "Pearson correlation";
    case Algorithm::kCosineSimilarity: return "Cosine similarity";
  }
  return "?";
}

std::string_view clause_kind_name(ClauseKind kind) {
  switch (kind) {
    case ClauseKind::kShare: return "share";
    case ClauseKind::kAcquire: return "acquire";
    case ClauseKind::kSub: return "sub-clause";
  }
  return "?";
}

}  // namespace curie::cpl
