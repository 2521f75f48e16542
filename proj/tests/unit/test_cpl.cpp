#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "curie/cpl/parser.hpp"
#include "curie/cpl/serialize.hpp"
#include "curie/cpl/validate.hpp"
#include "doctest.h"
#include "test_paths.hpp"

using namespace curie::cpl;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::filesystem::path> corpus_files() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(curie::test::corpus_dir())) {
    if (e.path().extension() == ".cpl") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool has_code(const std::vector<Diagnostic>& ds, std::string_view code) {
  return std::any_of(ds.begin(), ds.end(), [&](const Diagnostic& d) { return d.code == code; });
}

}  // namespace

TEST_CASE("lexer recognises keywords, suffixed numbers and comments") {
  const auto toks = tokenize("share : $NATO :: size(data) > 1K ; # tail\n&col 'a b' 0.3");
  std::vector<TokenKind> kinds;
  for (const auto& t : toks) kinds.push_back(t.kind);
  const std::vector<TokenKind> expected = {
      TokenKind::kShare,  TokenKind::kColon,   TokenKind::kVar,    TokenKind::kColon2,
      TokenKind::kIdent,  TokenKind::kLParen,  TokenKind::kIdent,  TokenKind::kRParen,
      TokenKind::kGt,     TokenKind::kNumber,  TokenKind::kSemicolon, TokenKind::kDataRef,
      TokenKind::kString, TokenKind::kNumber,  TokenKind::kEnd};
  CHECK(kinds == expected);
  CHECK(toks[2].text == "NATO");
  CHECK(toks[9].number == doctest::Approx(1000.0));
  CHECK(toks[12].text == "a b");
  CHECK(toks[13].number == doctest::Approx(0.3));
}

TEST_CASE("lexer reports unterminated strings with their location") {
  try {
    tokenize("share : M1 :\n :: race = 'Asian ;");
    FAIL("expected LexError");
  } catch (const LexError& e) {
    CHECK(e.span().line == 2);
  }
}

TEST_CASE("worked example policy for M2 parses into clauses and sub-clauses") {
  const PolicyAst ast = parse_policy(slurp(curie::test::corpus_dir() / "worked_m2.cpl"));
  REQUIRE(ast.clauses.size() == 4);
  REQUIRE(ast.sub_clauses.size() == 2);
  const Clause& share = ast.clauses[1];
  CHECK(share.kind == ClauseKind::kShare);
  CHECK(share.members == std::vector<std::string>{"M1"});
  CHECK(share.conditionals.size() == 2);
  REQUIRE(std::holds_alternative<TagRef>(share.selections));
  CHECK(std::get<TagRef>(share.selections).tag == "fine-select");
  CHECK(ast.sub_clauses[0].tag == "fine-select");
  CHECK(ast.sub_clauses[1].conditionals.empty());
  const auto& filters = std::get<std::vector<Filter>>(ast.sub_clauses[1].selections);
  REQUIRE(filters.size() == 1);
  CHECK(filters[0].column == "race");
  CHECK(std::get<Identifier>(filters[0].value).name == "White");
}

TEST_CASE("evaluate conditionals carry data reference, algorithm and threshold") {
  const PolicyAst ast =
      parse_policy("acquire : M3 : evaluate(&patient_id, 'Jaccard index', 0.3) :: race = Asian ;");
  const auto& cond = ast.clauses.at(0).conditionals.at(0);
  REQUIRE(cond.is_data_dependent());
  const auto& ev = std::get<Evaluate>(cond.body);
  CHECK(ev.data_ref == "patient_id");
  CHECK(ev.algorithm == Algorithm::kJaccardIndex);
  CHECK(ev.threshold == doctest::Approx(0.3));
}

TEST_CASE("corpus parses and round-trips through the serializer") {
  const auto files = corpus_files();
  REQUIRE(files.size() >= 25);
  for (const auto& f : files) {
    CAPTURE(f.filename().string());
    const PolicyAst first = parse_policy(slurp(f));
    const std::string text = serialize(first);
    const PolicyAst second = parse_policy(text);
    CHECK(first == second);
    CHECK(serialize(second) == text);
  }
}

TEST_CASE("corpus covers every grammar production") {
  ProductionSet seen;
  for (const auto& f : corpus_files()) parse_policy(slurp(f), &seen);
  for (std::size_t i = 0; i < seen.size(); ++i) {
    CAPTURE(production_name(static_cast<Production>(i)));
    CHECK(seen.test(i));
  }
}

TEST_CASE("parse errors name what was expected and where") {
  try {
    parse_policy("share : M1 : :: ;\nacquire : M2 : age > 3 ;");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.span().line == 2);
    CHECK_FALSE(e.expected().empty());
  }
  CHECK_THROWS_AS(parse_policy("acquire : M3 : evaluate(&x, 'Median', 1) :: ;"), ParseError);
  CHECK_THROWS_AS(parse_policy("share : M1 : :: "), ParseError);
  CHECK_THROWS_AS(parse_policy(""), ParseError);
}

TEST_CASE("validator flags unresolved, duplicate and cyclic tags") {
  CHECK(has_code(validate(parse_policy("share : : :: missing ;")), kUnresolvedTag));
  CHECK(has_code(validate(parse_policy("share : : :: t ; t : :: age > 1 ; t : :: age > 2 ;")),
                 kDuplicateSubClause));
  const auto alternatives =
      validate(parse_policy("share : : :: t ; t : $x = 1 :: age > 1 ; t : :: age > 2 ;"));
  CHECK_FALSE(has_errors(alternatives));
  CHECK(has_code(validate(parse_policy("share : : :: a ; a : :: b ; b : :: a ;")), kTagCycle));
  CHECK(has_code(validate(parse_policy("t := <1> ; share : : :: t ; t : :: ;")),
                 kTagShadowsAttribute));
}

TEST_CASE("validator warns about unreachable clauses and unused tags") {
  const auto ds = validate(parse_policy("share : : :: ; share : M1 : :: age > 3 ; u : :: ;"));
  CHECK(has_code(ds, kUnreachableClause));
  CHECK(has_code(ds, kUnusedSubClause));
  CHECK_FALSE(has_errors(ds));
  const auto line = ds.front().format("p.cpl");
  CHECK(line.rfind("p.cpl:1:", 0) == 0);
}

TEST_CASE("fuzzed inputs either parse or raise a syntax error") {
  const auto files = corpus_files();
  std::vector<std::string> seeds;
  for (const auto& f : files) seeds.push_back(slurp(f));
  const std::string alphabet = ":;,$&'\"(){}<>=!# \n\tabcXYZ019.-_K";
  std::mt19937_64 rng(20240611);
  std::size_t parsed = 0;
  for (int i = 0; i < 400; ++i) {
    std::string text = seeds[rng() % seeds.size()];
    const int edits = 1 + static_cast<int>(rng() % 6);
    for (int e = 0; e < edits && !text.empty(); ++e) {
      const std::size_t pos = rng() % text.size();
      switch (rng() % 4) {
        case 0: text[pos] = alphabet[rng() % alphabet.size()]; break;
        case 1: text.erase(pos, 1 + rng() % 4); break;
        case 2: text.insert(pos, 1, alphabet[rng() % alphabet.size()]); break;
        default: text.resize(pos); break;
      }
    }
    try {
      const PolicyAst ast = parse_policy(text);
      ++parsed;
      CHECK(parse_policy(serialize(ast)) == ast);
      validate(ast);
    } catch (const SyntaxError&) {
    }
  }
  MESSAGE("fuzz inputs that still parsed: " << parsed);
}
