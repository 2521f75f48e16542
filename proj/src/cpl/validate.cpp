#include "curie/cpl/validate.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

namespace curie::cpl {
namespace {

bool covers(const Clause& earlier, const Clause& later) {
  if (earlier.members.empty()) return true;
  if (later.members.empty()) return false;
  return std::all_of(later.members.begin(), later.members.end(),
                     [&](const std::string& m) { return earlier.applies_to(m); });
}

const TagRef* tag_of(const Clause& clause) {
  return std::get_if<TagRef>(&clause.selections);
}

Diagnostic make(Severity severity, const SourceSpan& span, std::string_view code,
                std::string message) {
  return Diagnostic{severity, span, std::string(code), std::move(message)};
}

}  // namespace

std::string Diagnostic::format(std::string_view file) const {
  std::string out(file);
  out += ":" + std::to_string(location.line) + ":" +
         std::to_string(location.column) + ": ";
  out += severity == Severity::kError ? "error" : "warning";
  out += "[" + code + "]: " + message;
  return out;
}

std::vector<Diagnostic> validate(const PolicyAst& ast) {
  std::vector<Diagnostic> out;

  std::map<std::string, std::vector<const Clause*>> by_tag;
  for (const Clause& sub : ast.sub_clauses) by_tag[sub.tag].push_back(&sub);

  std::set<std::string> referenced;
  auto check_ref = [&](const Clause& clause) {
    const TagRef* ref = tag_of(clause);
    if (ref == nullptr) return;
    referenced.insert(ref->tag);
    if (!by_tag.contains(ref->tag)) {
      out.push_back(make(Severity::kError, ref->span, kUnresolvedTag,
                         "selection refers to undefined sub-clause '" +
                             ref->tag + "'"));
    }
  };
  for (const Clause& c : ast.clauses) check_ref(c);
  for (const Clause& c : ast.sub_clauses) check_ref(c);

  for (const auto& [tag, defs] : by_tag) {
    if (ast.find_attribute(tag) != nullptr) {
      out.push_back(make(Severity::kError, defs.front()->span,
                         kTagShadowsAttribute,
                         "sub-clause tag '" + tag +
                             "' reuses the name of an attribute"));
    }
    for (std::size_t j = 1; j < defs.size(); ++j) {
      for (std::size_t i = 0; i < j; ++i) {
        if (defs[i]->conditionals == defs[j]->conditionals) {
          out.push_back(make(
              Severity::kError, defs[j]->span, kDuplicateSubClause,
              "sub-clause '" + tag + "' repeats the conditionals of line " +
                  std::to_string(defs[i]->span.line) +
                  "; this alternative can never be chosen"));
          break;
        }
      }
    }
    if (!referenced.contains(tag)) {
      out.push_back(make(Severity::kWarning, defs.front()->span,
                         kUnusedSubClause,
                         "sub-clause '" + tag + "' is never referenced"));
    }
  }

  // Cycle detection over the tag graph (tag -> tags its alternatives name).
  std::map<std::string, int> state;  // 0 unseen, 1 on stack, 2 done
  std::set<std::string> reported;
  std::function<void(const std::string&)> visit = [&](const std::string& tag) {
    state[tag] = 1;
    for (const Clause* def : by_tag[tag]) {
      const TagRef* ref = tag_of(*def);
      if (ref == nullptr || !by_tag.contains(ref->tag)) continue;
      if (state[ref->tag] == 1) {
        if (reported.insert(ref->tag).second) {
          out.push_back(make(Severity::kError, ref->span, kTagCycle,
                             "sub-clause '" + ref->tag +
                                 "' is reachable from itself"));
        }
      } else if (state[ref->tag] == 0) {
        visit(ref->tag);
      }
    }
    state[tag] = 2;
  };
  for (const auto& entry : by_tag) {
    if (state[entry.first] == 0) visit(entry.first);
  }

  for (std::size_t j = 0; j < ast.clauses.size(); ++j) {
    const Clause& later = ast.clauses[j];
    for (std::size_t i = 0; i < j; ++i) {
      const Clause& earlier = ast.clauses[i];
      if (earlier.kind == later.kind && earlier.conditionals.empty() &&
          covers(earlier, later)) {
        out.push_back(make(
            Severity::kWarning, later.span, kUnreachableClause,
            std::string(clause_kind_name(later.kind)) +
                " clause is unreachable: the unconditional clause on line " +
                std::to_string(earlier.span.line) +
                " already matches every member it names"));
        break;
      }
    }
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const Diagnostic& a, const Diagnostic& b) {
                     return a.location.offset < b.location.offset;
                   });
  return out;
}

bool has_errors(const std::vector<Diagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) {
                       return d.severity == Severity::kError;
                     });
}

}  // namespace curie::cpl
