#include "curie/cpl/parser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>

namespace curie::cpl {
namespace {

std::optional<Algorithm> lookup_algorithm(std::string_view raw) {
  std::string key;
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (c == ' ' || c == '_' || c == '-' || c == '\t') {
      pending_space = !key.empty();
      continue;
    }
    if (pending_space) key.push_back(' ');
    pending_space = false;
    key.push_back(static_cast<char>(std::tolower(c)));
  }
  if (key == "intersection size" || key == "intersection") {
    return Algorithm::kIntersectionSize;
  }
  if (key == "jaccard index" || key == "jaccard") return Algorithm::kJaccardIndex;
  if (key == "pearson correlation" || key == "pearson") {
    return Algorithm::kPearsonCorrelation;
  }
  if (key == "cosine similarity" || key == "cosine") {
    return Algorithm::kCosineSimilarity;
  }
  return std::nullopt;
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, ProductionSet* coverage)
      : coverage_(coverage) {
    // `::` is also two adjacent single colons; splitting here lets the
    // grammar rules ask for exactly the colons they need (e.g. `share:::;`).
    for (Token& t : tokens) {
      if (t.kind != TokenKind::kColon2) {
        tokens_.push_back(std::move(t));
        continue;
      }
      Token first = t;
      first.kind = TokenKind::kColon;
      first.span.length = 1;
      first.span.end_line = first.span.line;
      first.span.end_column = first.span.column + 1;
      Token second = first;
      second.span.offset += 1;
      second.span.column += 1;
      second.span.end_column += 1;
      tokens_.push_back(first);
      tokens_.push_back(second);
    }
  }

  PolicyAst run() {
    mark(Production::kCuriePolicy);
    PolicyAst ast;
    if (at(TokenKind::kEnd)) {
      error("a policy must contain at least one statement",
            {"'share'", "'acquire'", "identifier"});
    }
    std::size_t statements = 0;
    while (!at(TokenKind::kEnd)) {
      statement(ast);
      expect(TokenKind::kSemicolon, "to end the statement");
      if (++statements > 1) mark(Production::kStatements);
    }
    return ast;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t i = std::min(pos_ + ahead, tokens_.size() - 1);
    return tokens_[i];
  }
  bool at(TokenKind kind, std::size_t ahead = 0) const {
    return peek(ahead).kind == kind;
  }
  const Token& take() {
    const Token& t = tokens_[pos_];
    if (pos_ + 1 < tokens_.size()) ++pos_;
    return t;
  }
  void mark(Production p) {
    if (coverage_ != nullptr) coverage_->set(static_cast<std::size_t>(p));
  }

  [[noreturn]] void error(const std::string& message,
                          std::vector<std::string> expected) const {
    const Token& t = peek();
    std::string full = message;
    if (!expected.empty()) {
      full += " (expected ";
      for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i != 0) full += i + 1 == expected.size() ? " or " : ", ";
        full += expected[i];
      }
      full += ", found ";
      full += token_kind_name(t.kind);
      if (t.kind == TokenKind::kIdent || t.kind == TokenKind::kNumber) {
        full += " '" + t.text + "'";
      }
      full += ")";
    }
    throw ParseError(full, t.span, std::move(expected));
  }

  const Token& expect(TokenKind kind, std::string_view context) {
    if (!at(kind)) {
      error(std::string("unexpected token ") + std::string(context),
            {std::string(token_kind_name(kind))});
    }
    return take();
  }

  bool at_double_colon() const {
    return at(TokenKind::kColon) && at(TokenKind::kColon, 1) &&
           peek(1).span.offset == peek().span.offset + 1;
  }
  void expect_double_colon() {
    if (!at_double_colon()) {
      error("unexpected token before selections", {"'::'"});
    }
    take();
    take();
  }

  void statement(PolicyAst& ast) {
    switch (peek().kind) {
      case TokenKind::kShare:
      case TokenKind::kAcquire:
        ast.clauses.push_back(member_clause());
        return;
      case TokenKind::kIdent:
        if (at(TokenKind::kAssign, 1)) {
          ast.attributes.push_back(attribute());
          return;
        }
        if (at(TokenKind::kColon, 1)) {
          ast.sub_clauses.push_back(sub_clause());
          return;
        }
        take();
        error("unexpected token after identifier", {"':'", "':='"});
      default:
        error("unexpected token at start of statement",
              {"'share'", "'acquire'", "identifier"});
    }
  }

  Clause member_clause() {
    Clause clause;
    const Token& head = take();
    clause.span = head.span;
    clause.kind = head.kind == TokenKind::kShare ? ClauseKind::kShare
                                                 : ClauseKind::kAcquire;
    mark(clause.kind == ClauseKind::kShare ? Production::kShareClause
                                           : Production::kAcquireClause);
    expect(TokenKind::kColon, "after clause keyword");
    clause.members = members();
    expect(TokenKind::kColon, "after member list");
    clause.conditionals = conditionals();
    expect_double_colon();
    clause.selections = selections();
    close_span(clause.span);
    return clause;
  }

  Clause sub_clause() {
    mark(Production::kSubClause);
    Clause clause;
    const Token& head = take();
    clause.span = head.span;
    clause.kind = ClauseKind::kSub;
    clause.tag = head.text;
    expect(TokenKind::kColon, "after sub-clause tag");
    clause.conditionals = conditionals();
    expect_double_colon();
    clause.selections = selections();
    close_span(clause.span);
    return clause;
  }

  void close_span(SourceSpan& span) const {
    const Token& last = tokens_[pos_ == 0 ? 0 : pos_ - 1];
    span.length = last.span.offset + last.span.length - span.offset;
    span.end_line = last.span.end_line;
    span.end_column = last.span.end_column;
  }

  std::vector<std::string> members() {
    std::vector<std::string> out;
    bool saw_comma = false;
    for (;;) {
      if (at(TokenKind::kIdent)) {
        out.push_back(take().text);
      } else if (at(TokenKind::kComma) || (saw_comma && at(TokenKind::kColon))) {
        mark(Production::kMemberEmpty);
      } else if (!saw_comma) {
        return out;  // whole field empty
      } else {
        error("unexpected token in member list", {"identifier", "','"});
      }
      if (!at(TokenKind::kComma)) return out;
      take();
      saw_comma = true;
      mark(Production::kMembersMultiple);
    }
  }

  std::vector<Conditional> conditionals() {
    std::vector<Conditional> out;
    if (at_double_colon()) {
      mark(Production::kConditionalsEmpty);
      return out;
    }
    for (;;) {
      if (at(TokenKind::kComma) || at_double_colon()) {
        mark(Production::kConditionalsEmpty);
      } else {
        out.push_back(conditional());
      }
      if (!at(TokenKind::kComma)) return out;
      take();
    }
  }

  Conditional conditional() {
    Conditional cond;
    cond.span = peek().span;
    if (at(TokenKind::kEvaluate)) {
      mark(Production::kConditionalEvaluate);
      cond.body = evaluate();
    } else {
      mark(Production::kConditionalComparison);
      Comparison cmp;
      cmp.lhs = operand();
      cmp.op = operation();
      cmp.rhs = value();
      cond.body = std::move(cmp);
    }
    close_span(cond.span);
    return cond;
  }

  Evaluate evaluate() {
    take();
    expect(TokenKind::kLParen, "after 'evaluate'");
    Evaluate ev;
    mark(Production::kDataRef);
    ev.data_ref = expect(TokenKind::kDataRef, "as first evaluate argument").text;
    expect(TokenKind::kComma, "after data reference");
    if (!at(TokenKind::kString)) {
      error("algorithm must be a quoted name",
            {"'Intersection size'", "'Jaccard index'", "'Pearson correlation'",
             "'Cosine similarity'"});
    }
    const auto algorithm = lookup_algorithm(peek().text);
    if (!algorithm) {
      error("unknown data-dependent algorithm '" + peek().text + "'",
            {"'Intersection size'", "'Jaccard index'", "'Pearson correlation'",
             "'Cosine similarity'"});
    }
    take();
    ev.algorithm = *algorithm;
    switch (ev.algorithm) {
      case Algorithm::kIntersectionSize: mark(Production::kAlgIntersectionSize); break;
      case Algorithm::kJaccardIndex: mark(Production::kAlgJaccardIndex); break;
      case Algorithm::kPearsonCorrelation: mark(Production::kAlgPearsonCorrelation); break;
      case Algorithm::kCosineSimilarity: mark(Production::kAlgCosineSimilarity); break;
    }
    expect(TokenKind::kComma, "after algorithm");
    const Token& threshold = expect(TokenKind::kNumber, "as threshold");
    if (!std::isfinite(threshold.number)) {
      error("threshold must be finite", {"number"});
    }
    if (threshold.text.find('.') != std::string::npos) {
      mark(Production::kThresholdFloat);
    }
    ev.threshold = threshold.number;
    expect(TokenKind::kRParen, "to close 'evaluate'");
    return ev;
  }

  Operand operand() {
    if (at(TokenKind::kVar)) {
      mark(Production::kVar);
      return VarRef{take().text};
    }
    if (at(TokenKind::kIdent)) {
      if (peek().text == "size" && at(TokenKind::kLParen, 1)) {
        take();
        take();
        const Token& arg = expect(TokenKind::kIdent, "inside size()");
        if (arg.text != "data") error("size() only accepts 'data'", {"'data'"});
        expect(TokenKind::kRParen, "to close size(");
        mark(Production::kSizeOfData);
        return SizeOfData{};
      }
      return Identifier{take().text};
    }
    error("unexpected token at start of conditional",
          {"variable", "identifier", "'size(data)'", "'evaluate'"});
  }

  Op operation() {
    switch (peek().kind) {
      case TokenKind::kEq: take(); mark(Production::kOpEq); return Op::kEq;
      case TokenKind::kLt: take(); mark(Production::kOpLt); return Op::kLt;
      case TokenKind::kGt: take(); mark(Production::kOpGt); return Op::kGt;
      case TokenKind::kNe: take(); mark(Production::kOpNe); return Op::kNe;
      case TokenKind::kIn: take(); mark(Production::kOpIn); return Op::kIn;
      default:
        error("expected an operation", {"'='", "'<'", "'>'", "'!='", "'in'"});
    }
  }

  Value value() {
    switch (peek().kind) {
      case TokenKind::kString:
        mark(Production::kValueString);
        return StringLit{take().text};
      case TokenKind::kNumber:
        mark(Production::kValueNumber);
        return NumberLit{take().number};
      case TokenKind::kIdent:
        mark(Production::kValueIdentifier);
        return Identifier{take().text};
      case TokenKind::kVar:
        mark(Production::kVar);
        return VarRef{take().text};
      default:
        error("expected a value", {"string", "number", "identifier", "variable"});
    }
  }

  Selections selections() {
    if (at(TokenKind::kIdent) && at(TokenKind::kSemicolon, 1)) {
      mark(Production::kSelectionsTag);
      const Token& t = take();
      return TagRef{t.text, t.span};
    }
    mark(Production::kSelectionsFilters);
    std::vector<Filter> out;
    std::size_t entries = 0;
    for (;;) {
      ++entries;
      if (at(TokenKind::kComma) || at(TokenKind::kSemicolon)) {
        mark(Production::kFilterEmpty);
      } else {
        out.push_back(filter());
      }
      if (!at(TokenKind::kComma)) break;
      take();
    }
    if (entries > 1) mark(Production::kFiltersMultiple);
    return out;
  }

  Filter filter() {
    mark(Production::kFilter);
    Filter f;
    f.span = peek().span;
    if (at(TokenKind::kVar)) {
      mark(Production::kVar);
      f.column = take().text;
      f.column_is_var = true;
    } else if (at(TokenKind::kIdent)) {
      f.column = take().text;
    } else {
      error("expected a column in filter", {"identifier", "variable", "';'"});
    }
    f.op = operation();
    f.value = value();
    close_span(f.span);
    return f;
  }

  Attribute attribute() {
    Attribute attr;
    const Token& name = take();
    attr.name = name.text;
    attr.span = name.span;
    take();  // :=
    expect(TokenKind::kLt, "to open attribute value");
    if (at(TokenKind::kLBrace)) {
      attr.is_list = true;
      mark(Production::kAttributeValueList);
      for (;;) {
        expect(TokenKind::kLBrace, "to open list element");
        attr.values.push_back(value());
        expect(TokenKind::kRBrace, "to close list element");
        if (!at(TokenKind::kComma)) break;
        take();
        mark(Production::kValueListMultiple);
      }
    } else {
      attr.values.push_back(value());
      while (at(TokenKind::kComma)) {
        take();
        attr.values.push_back(value());
      }
      attr.is_list = attr.values.size() > 1;
      mark(attr.is_list ? Production::kAttributeValueList
                        : Production::kAttributeValue);
    }
    expect(TokenKind::kGt, "to close attribute value");
    close_span(attr.span);
    return attr;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  ProductionSet* coverage_;
};

}  // namespace

PolicyAst parse_policy(std::string_view text, ProductionSet* coverage) {
  return Parser(tokenize(text), coverage).run();
}

std::string_view production_name(Production p) {
  switch (p) {
    case Production::kCuriePolicy: return "curie_policy";
    case Production::kStatements: return "statements (repeated)";
    case Production::kShareClause: return "share_clause";
    case Production::kAcquireClause: return "acquire_clause";
    case Production::kAttributeValue: return "attribute <value>";
    case Production::kAttributeValueList: return "attribute <value_list>";
    case Production::kSubClause: return "sub_clause";
    case Production::kConditionalComparison: return "conditionals var=value";
    case Production::kConditionalEvaluate: return "conditionals evaluate(...)";
    case Production::kConditionalsEmpty: return "conditionals ''";
    case Production::kSelectionsFilters: return "selections filters";
    case Production::kSelectionsTag: return "selections tag";
    case Production::kFiltersMultiple: return "filters (repeated)";
    case Production::kFilter: return "filter";
    case Production::kFilterEmpty: return "filter ''";
    case Production::kDataRef: return "data_ref";
    case Production::kAlgIntersectionSize: return "algorithms 'Intersection size'";
    case Production::kAlgJaccardIndex: return "algorithms 'Jaccard index'";
    case Production::kAlgPearsonCorrelation: return "algorithms 'Pearson correlation'";
    case Production::kAlgCosineSimilarity: return "algorithms 'Cosine similarity'";
    case Production::kThresholdFloat: return "floating_point_number";
    case Production::kOpEq: return "operation '='";
    case Production::kOpLt: return "operation '<'";
    case Production::kOpGt: return "operation '>'";
    case Production::kOpNe: return "operation '!='";
    case Production::kOpIn: return "operation in";
    case Production::kValueListMultiple: return "value_list (repeated)";
    case Production::kMembersMultiple: return "members (repeated)";
    case Production::kMemberEmpty: return "member ''";
    case Production::kVar: return "var";
    case Production::kValueString: return "string";
    case Production::kValueNumber: return "value number";
    case Production::kValueIdentifier: return "value identifier";
    case Production::kSizeOfData: return "size(data)";
    case Production::kCount: break;
  }
  return "?";
}

}  // namespace curie::cpl
