#include "curie/cpl/lexer.hpp"

#include <cctype>
#include <charconv>
#include <string>

namespace curie::cpl {
namespace {

bool is_word_start(unsigned char c) {
  return std::isalnum(c) != 0 || c == '_' || c >= 0x80;
}
bool is_word_char(unsigned char c) { return is_word_start(c) || c == '-'; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_blank();
      if (pos_ >= text_.size()) {
        out.push_back(make(TokenKind::kEnd, pos_, pos_, line_, col_));
        return out;
      }
      out.push_back(next());
    }
  }

 private:
  unsigned char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size()
               ? static_cast<unsigned char>(text_[pos_ + ahead])
               : '\0';
  }
  bool at_end(std::size_t ahead = 0) const {
    return pos_ + ahead >= text_.size();
  }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_blank() {
    while (!at_end()) {
      const unsigned char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
          c == '\v') {
        advance();
      } else if (c == '#') {
        while (!at_end() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  Token make(TokenKind kind, std::size_t begin, std::size_t end,
             std::uint32_t line, std::uint32_t col) const {
    Token t;
    t.kind = kind;
    t.span.offset = begin;
    t.span.length = end - begin;
    t.span.line = line;
    t.span.column = col;
    t.span.end_line = line_;
    t.span.end_column = col_;
    return t;
  }

  [[noreturn]] void fail(const std::string& message) const {
    SourceSpan span;
    span.offset = pos_;
    span.length = at_end() ? 0 : 1;
    span.line = span.end_line = line_;
    span.column = col_;
    span.end_column = col_ + static_cast<std::uint32_t>(span.length);
    throw LexError(message, span);
  }

  Token next() {
    const std::size_t begin = pos_;
    const std::uint32_t line = line_;
    const std::uint32_t col = col_;
    const unsigned char c = peek();

    auto single = [&](TokenKind kind) {
      advance();
      return make(kind, begin, pos_, line, col);
    };

    switch (c) {
      case ':':
        advance();
        if (peek() == ':') {
          advance();
          return make(TokenKind::kColon2, begin, pos_, line, col);
        }
        if (peek() == '=') {
          advance();
          return make(TokenKind::kAssign, begin, pos_, line, col);
        }
        return make(TokenKind::kColon, begin, pos_, line, col);
      case ';': return single(TokenKind::kSemicolon);
      case ',': return single(TokenKind::kComma);
      case '(': return single(TokenKind::kLParen);
      case ')': return single(TokenKind::kRParen);
      case '{': return single(TokenKind::kLBrace);
      case '}': return single(TokenKind::kRBrace);
      case '=': return single(TokenKind::kEq);
      case '<': return single(TokenKind::kLt);
      case '>': return single(TokenKind::kGt);
      case '!':
        if (peek(1) == '=') {
          advance();
          advance();
          return make(TokenKind::kNe, begin, pos_, line, col);
        }
        fail("expected '=' after '!'");
      case '\'':
      case '"':
        return string_literal(begin, line, col);
      case '$':
      case '&': {
        advance();
        if (at_end() || !is_word_start(peek())) {
          fail(std::string("expected identifier after '") +
               static_cast<char>(c) + "'");
        }
        Token t = word(begin, line, col, /*allow_number=*/false);
        t.kind = c == '$' ? TokenKind::kVar : TokenKind::kDataRef;
        return t;
      }
      default:
        break;
    }
    if (c == '-' && is_digit(peek(1))) return number(begin, line, col);
    if (is_word_start(c)) return word(begin, line, col, /*allow_number=*/true);
    if (c >= 0x20 && c < 0x7f) {
      fail(std::string("unexpected character '") + static_cast<char>(c) + "'");
    }
    fail("unexpected byte 0x" + hex(c));
  }

  static std::string hex(unsigned char c) {
    static constexpr char kDigits[] = "0123456789abcdef";
    return {kDigits[c >> 4], kDigits[c & 0xf]};
  }

  Token string_literal(std::size_t begin, std::uint32_t line,
                       std::uint32_t col) {
    const char quote = static_cast<char>(peek());
    advance();
    const std::size_t body = pos_;
    while (!at_end() && text_[pos_] != quote) advance();
    if (at_end()) {
      pos_ = begin;
      line_ = line;
      col_ = col;
      fail("unterminated string literal");
    }
    Token t;
    std::string contents(text_.substr(body, pos_ - body));
    advance();
    t = make(TokenKind::kString, begin, pos_, line, col);
    t.text = std::move(contents);
    return t;
  }

  // Numbers: -?digits[.digits*][e[+-]digits][K]. A digit-led run that
  // continues with other word characters is a plain word (e.g. `2C9`).
  Token number(std::size_t begin, std::uint32_t line, std::uint32_t col) {
    std::size_t i = pos_;
    if (text_[i] == '-') ++i;
    while (i < text_.size() && is_digit(text_[i])) ++i;
    if (i < text_.size() && text_[i] == '.') {
      ++i;
      while (i < text_.size() && is_digit(text_[i])) ++i;
    }
    if (i < text_.size() && (text_[i] == 'e' || text_[i] == 'E')) {
      std::size_t j = i + 1;
      if (j < text_.size() && (text_[j] == '+' || text_[j] == '-')) ++j;
      if (j < text_.size() && is_digit(text_[j])) {
        while (j < text_.size() && is_digit(text_[j])) ++j;
        i = j;
      }
    }
    const std::size_t numeric_end = i;
    double scale = 1.0;
    if (i < text_.size() && text_[i] == 'K' &&
        (i + 1 >= text_.size() ||
         !is_word_char(static_cast<unsigned char>(text_[i + 1])))) {
      scale = 1000.0;
      ++i;
    }
    double value = 0.0;
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + numeric_end;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) fail("malformed number");
    while (pos_ < i) advance();
    Token t = make(TokenKind::kNumber, begin, pos_, line, col);
    t.number = value * scale;
    t.text = std::string(text_.substr(begin, pos_ - begin));
    return t;
  }

  Token word(std::size_t begin, std::uint32_t line, std::uint32_t col,
             bool allow_number) {
    const std::size_t word_begin = pos_;
    std::size_t end = pos_;
    while (end < text_.size() &&
           is_word_char(static_cast<unsigned char>(text_[end]))) {
      ++end;
    }
    if (allow_number && is_digit(peek())) {
      // Treat as a number when the whole run is numeric (with optional K)
      // or the run is followed by a decimal point / exponent.
      std::size_t i = word_begin;
      while (i < end && is_digit(text_[i])) ++i;
      const bool numeric_run =
          i == end || (i + 1 == end && text_[i] == 'K') ||
          (i < text_.size() && (text_[i] == '.' || text_[i] == 'e' ||
                                text_[i] == 'E'));
      if (numeric_run) return number(begin, line, col);
    }
    while (pos_ < end) advance();
    Token t = make(TokenKind::kIdent, begin, pos_, line, col);
    t.text = std::string(text_.substr(word_begin, end - word_begin));
    if (begin == word_begin) {
      if (t.text == "share") t.kind = TokenKind::kShare;
      else if (t.text == "acquire") t.kind = TokenKind::kAcquire;
      else if (t.text == "evaluate") t.kind = TokenKind::kEvaluate;
      else if (t.text == "in") t.kind = TokenKind::kIn;
    }
    return t;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::uint32_t line_ = 1;
  std::uint32_t col_ = 1;
};

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  return Lexer(text).run();
}

std::string_view token_kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::kShare: return "'share'";
    case TokenKind::kAcquire: return "'acquire'";
    case TokenKind::kEvaluate: return "'evaluate'";
    case TokenKind::kIn: return "'in'";
    case TokenKind::kIdent: return "identifier";
    case TokenKind::kVar: return "variable";
    case TokenKind::kDataRef: return "data reference";
    case TokenKind::kString: return "string";
    case TokenKind::kNumber: return "number";
    case TokenKind::kColon: return "':'";
    case TokenKind::kColon2: return "'::'";
    case TokenKind::kAssign: return "':='";
    case TokenKind::kSemicolon: return "';'";
    case TokenKind::kComma: return "','";
    case TokenKind::kLParen: return "'('";
    case TokenKind::kRParen: return "')'";
    case TokenKind::kLBrace: return "'{'";
    case TokenKind::kRBrace: return "'}'";
    case TokenKind::kEq: return "'='";
    case TokenKind::kNe: return "'!='";
    case TokenKind::kLt: return "'<'";
    case TokenKind::kGt: return "'>'";
    case TokenKind::kEnd: return "end of input";
  }
  return "token";
}

}  // namespace curie::cpl
