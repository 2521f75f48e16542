#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "curie/cpl/ast.hpp"
#include "curie/error.hpp"

namespace curie::cpl {

enum class TokenKind {
  kShare,     // share
  kAcquire,   // acquire
  kEvaluate,  // evaluate
  kIn,        // in
  kIdent,     // word
  kVar,       // $word (text holds the word)
  kDataRef,   // &word (text holds the word)
  kString,    // '...' or "..." (text holds the contents)
  kNumber,    // 12, 0.3, 1e-3, 1K (number holds the value)
  kColon,     // :
  kColon2,    // ::
  kAssign,    // :=
  kSemicolon,
  kComma,
  kLParen,
  kRParen,
  kLBrace,
  kRBrace,
  kEq,  // =
  kNe,  // !=
  kLt,  // <
  kGt,  // >
  kEnd,
};

struct Token {
  TokenKind kind = TokenKind::kEnd;
  std::string text;
  double number = 0.0;
  SourceSpan span;
};

// Base for lexer and parser failures; carries the offending location.
class SyntaxError : public Error {
 public:
  SyntaxError(std::string code, const std::string& message, SourceSpan span)
      : Error(std::move(code), message), span_(span) {}
  const SourceSpan& span() const noexcept { return span_; }

 private:
  SourceSpan span_;
};

class LexError : public SyntaxError {
 public:
  LexError(const std::string& message, SourceSpan span)
      : SyntaxError("LexError", message, span) {}
};

// Splits `text` into tokens. Whitespace and `#` comments are skipped; the
// returned stream always ends with a kEnd token.
std::vector<Token> tokenize(std::string_view text);

std::string_view token_kind_name(TokenKind kind);

}  // namespace curie::cpl
