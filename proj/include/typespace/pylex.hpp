#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace typespace::py {

enum class TokenKind { Name, Number, String, Op, Newline, Indent, Dedent, End };

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t offset = 0; // byte range [offset, end) in the source
  std::size_t end = 0;
  int line = 0;
  int column = 0;
};

/// Layout tokens carry no lexeme: NEWLINE, INDENT, DEDENT and the end marker.
inline bool is_layout(TokenKind k) {
  return k == TokenKind::Newline || k == TokenKind::Indent ||
         k == TokenKind::Dedent || k == TokenKind::End;
}

bool is_keyword(std::string_view word);

/// Splits Python source into tokens. Comments and blank lines are dropped;
/// indentation is reported as INDENT/DEDENT. Throws ParseError.
std::vector<Token> tokenize(std::string_view source);

/// Number of non-layout tokens.
std::size_t count_lexemes(const std::vector<Token> &tokens);

} // namespace typespace::py
