#include "curie/cpl/serialize.hpp"

#include <charconv>
#include <string_view>

namespace curie::cpl {
namespace {

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// Thresholds are written as floating_point_number, i.e. always with a '.'.
std::string format_threshold(double v) {
  std::string s = format_number(v);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string quote(std::string_view text) {
  const char q = text.find('"') == std::string_view::npos ? '"' : '\'';
  std::string out;
  out.reserve(text.size() + 2);
  out.push_back(q);
  out.append(text);
  out.push_back(q);
  return out;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void append_join(std::string& out, const std::vector<std::string>& parts) {
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i != 0) out += ", ";
    out += parts[i];
  }
}

}  // namespace

std::string to_string(const Value& value) {
  return std::visit(
      Overloaded{
          [](const StringLit& s) { return quote(s.text); },
          [](const NumberLit& n) { return format_number(n.value); },
          [](const Identifier& i) { return i.name; },
          [](const VarRef& v) { return "$" + v.name; },
      },
      value);
}

std::string to_string(const Filter& filter) {
  return (filter.column_is_var ? "$" : "") + filter.column + " " +
         std::string(op_symbol(filter.op)) + " " + to_string(filter.value);
}

std::string to_string(const Conditional& conditional) {
  return std::visit(
      Overloaded{
          [](const Comparison& c) {
            std::string lhs = std::visit(
                Overloaded{
                    [](const VarRef& v) { return "$" + v.name; },
                    [](const Identifier& i) { return i.name; },
                    [](const SizeOfData&) { return std::string("size(data)"); },
                },
                c.lhs);
            return lhs + " " + std::string(op_symbol(c.op)) + " " +
                   to_string(c.rhs);
          },
          [](const Evaluate& e) {
            return "evaluate(&" + e.data_ref + ", '" +
                   std::string(algorithm_name(e.algorithm)) + "', " +
                   format_threshold(e.threshold) + ")";
          },
      },
      conditional.body);
}

std::string to_string(const Clause& clause) {
  std::string out;
  switch (clause.kind) {
    case ClauseKind::kShare: out = "share : "; break;
    case ClauseKind::kAcquire: out = "acquire : "; break;
    case ClauseKind::kSub: out = clause.tag + " : "; break;
  }
  if (clause.kind != ClauseKind::kSub) {
    append_join(out, clause.members);
    out += clause.members.empty() ? ": " : " : ";
  }
  std::vector<std::string> conds;
  for (const Conditional& c : clause.conditionals) conds.push_back(to_string(c));
  append_join(out, conds);
  out += conds.empty() ? ":: " : " :: ";
  if (const auto* tag = std::get_if<TagRef>(&clause.selections)) {
    out += tag->tag;
  } else {
    std::vector<std::string> filters;
    for (const Filter& f : std::get<std::vector<Filter>>(clause.selections)) {
      filters.push_back(to_string(f));
    }
    append_join(out, filters);
  }
  if (out.back() == ' ') out.pop_back();
  return out;
}

std::string serialize(const PolicyAst& ast) {
  std::string out;
  for (const Attribute& a : ast.attributes) {
    out += a.name + " := <";
    if (a.is_list) {
      std::vector<std::string> parts;
      for (const Value& v : a.values) parts.push_back("{" + to_string(v) + "}");
      append_join(out, parts);
    } else if (!a.values.empty()) {
      out += to_string(a.values.front());
    }
    out += ">;\n";
  }
  for (const Clause& c : ast.clauses) out += to_string(c) + ";\n";
  for (const Clause& c : ast.sub_clauses) out += to_string(c) + ";\n";
  return out;
}

}  // namespace curie::cpl
