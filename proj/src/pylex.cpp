#include "typespace/pylex.hpp"

#include "typespace/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace typespace::py {

namespace {

constexpr std::array<std::string_view, 35> kKeywords = {
    "False", "None",   "True",    "and",      "as",       "assert", "async",
    "await", "break",  "class",   "continue", "def",      "del",    "elif",
    "else",  "except", "finally", "for",      "from",     "global", "if",
    "import", "in",    "is",      "lambda",   "nonlocal", "not",    "or",
    "pass",  "raise",  "return",  "try",      "while",    "with",   "yield"};

// Longest operators first.
constexpr std::array<std::string_view, 47> kOperators = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>",
    "<=",  ">=",  "==",  "!=",  "+=",  "-=", "*=", "/=", "%=", "&=", "|=",
    "^=",  "@=",  "(",   ")",   "[",   "]",  "{",  "}",  ":",  ",",  ";",
    ".",   "+",   "-",   "*",   "/",   "%",  "|",  "&",  "^",  "~",  "<",
    ">",   "=",   "@"};

bool is_ident_start(unsigned char c) {
  return std::isalpha(c) || c == '_' || c >= 0x80;
}
bool is_ident_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {
    if (src_.substr(0, 3) == "\xEF\xBB\xBF")
      pos_ = 3;
  }

  std::vector<Token> run() {
    indents_.push_back(0);
    bool at_line_start = true;
    while (pos_ < src_.size()) {
      if (at_line_start && depth_ == 0) {
        if (!handle_indentation())
          continue;
        at_line_start = false;
      }
      char c = src_[pos_];
      if (c == '\n' || c == '\r') {
        consume_newline();
        if (depth_ == 0) {
          if (!tokens_.empty() && tokens_.back().kind != TokenKind::Newline &&
              tokens_.back().kind != TokenKind::Indent &&
              tokens_.back().kind != TokenKind::Dedent)
            push(TokenKind::Newline, "", pos_, pos_);
          at_line_start = true;
        }
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\f') {
        ++pos_;
        ++col_;
        continue;
      }
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n' && src_[pos_] != '\r')
          ++pos_;
        continue;
      }
      if (c == '\\') {
        std::size_t nxt = pos_ + 1;
        if (nxt < src_.size() && (src_[nxt] == '\n' || src_[nxt] == '\r')) {
          pos_ = nxt;
          consume_newline();
          continue;
        }
        fail("unexpected character after line continuation");
      }
      lex_token();
    }
    if (!tokens_.empty() && tokens_.back().kind != TokenKind::Newline &&
        tokens_.back().kind != TokenKind::Dedent &&
        tokens_.back().kind != TokenKind::Indent)
      push(TokenKind::Newline, "", pos_, pos_);
    if (depth_ > 0)
      fail("unexpected end of file inside brackets");
    while (indents_.size() > 1) {
      indents_.pop_back();
      push(TokenKind::Dedent, "", pos_, pos_);
    }
    push(TokenKind::End, "", pos_, pos_);
    return std::move(tokens_);
  }

private:
  [[noreturn]] void fail(const std::string &msg) const {
    throw ParseError("line " + std::to_string(line_) + ": " + msg, pos_);
  }

  void push(TokenKind kind, std::string text, std::size_t begin,
            std::size_t end) {
    tokens_.push_back(Token{kind, std::move(text), begin, end, line_,
                            static_cast<int>(col_)});
  }

  void consume_newline() {
    if (src_[pos_] == '\r' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n')
      ++pos_;
    ++pos_;
    ++line_;
    col_ = 0;
  }

  // Measures indentation of a logical line start. Returns false when the line
  // is blank or a comment (and was consumed).
  bool handle_indentation() {
    std::size_t width = 0;
    std::size_t p = pos_;
    while (p < src_.size()) {
      char c = src_[p];
      if (c == ' ')
        ++width;
      else if (c == '\t')
        width = (width / 8 + 1) * 8;
      else if (c == '\f')
        width = 0;
      else
        break;
      ++p;
    }
    if (p >= src_.size()) {
      pos_ = p;
      return false;
    }
    char c = src_[p];
    if (c == '#' || c == '\n' || c == '\r') {
      while (p < src_.size() && src_[p] != '\n' && src_[p] != '\r')
        ++p;
      pos_ = p;
      if (pos_ < src_.size())
        consume_newline();
      return false;
    }
    if (c == '\\' && p + 1 < src_.size() &&
        (src_[p + 1] == '\n' || src_[p + 1] == '\r')) {
      pos_ = p + 1;
      consume_newline();
      return false;
    }
    col_ = p - pos_;
    pos_ = p;
    if (width > indents_.back()) {
      indents_.push_back(width);
      push(TokenKind::Indent, "", pos_, pos_);
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        push(TokenKind::Dedent, "", pos_, pos_);
      }
      if (width != indents_.back())
        fail("unindent does not match any outer indentation level");
    }
    return true;
  }

  bool string_prefix_at(std::size_t p, std::size_t &prefix_len) const {
    std::size_t n = 0;
    while (n < 2 && p + n < src_.size()) {
      char c = static_cast<char>(std::tolower(static_cast<unsigned char>(src_[p + n])));
      if (c == 'r' || c == 'b' || c == 'u' || c == 'f')
        ++n;
      else
        break;
    }
    while (true) {
      if (p + n < src_.size() && (src_[p + n] == '\'' || src_[p + n] == '"')) {
        prefix_len = n;
        return true;
      }
      if (n == 0)
        return false;
      --n;
    }
  }

  void lex_string(std::size_t start, std::size_t prefix_len) {
    std::size_t p = start + prefix_len;
    char quote = src_[p];
    bool triple = p + 2 < src_.size() && src_[p + 1] == quote && src_[p + 2] == quote;
    std::size_t qlen = triple ? 3 : 1;
    p += qlen;
    int start_line = line_;
    std::size_t start_col = col_;
    while (true) {
      if (p >= src_.size()) {
        pos_ = start;
        fail("unterminated string literal");
      }
      char c = src_[p];
      if (c == '\\') {
        if (p + 1 < src_.size() && src_[p + 1] == '\n')
          ++line_;
        p += 2;
        continue;
      }
      if (c == '\n') {
        if (!triple) {
          pos_ = start;
          fail("unterminated string literal");
        }
        ++line_;
      }
      if (c == quote) {
        if (!triple) {
          ++p;
          break;
        }
        if (p + 2 < src_.size() && src_[p + 1] == quote && src_[p + 2] == quote) {
          p += 3;
          break;
        }
      }
      ++p;
    }
    tokens_.push_back(Token{TokenKind::String,
                            std::string(src_.substr(start, p - start)), start,
                            p, start_line, static_cast<int>(start_col)});
    col_ += p - start;
    pos_ = p;
  }

  void lex_number() {
    std::size_t p = pos_;
    auto digits = [&](auto pred) {
      while (p < src_.size() && (pred(static_cast<unsigned char>(src_[p])) || src_[p] == '_'))
        ++p;
    };
    auto is_dec = [](unsigned char c) { return std::isdigit(c) != 0; };
    if (src_[p] == '0' && p + 1 < src_.size() &&
        std::string_view("xXoObB").find(src_[p + 1]) != std::string_view::npos) {
      p += 2;
      digits([](unsigned char c) { return std::isxdigit(c) != 0; });
    } else {
      digits(is_dec);
      if (p < src_.size() && src_[p] == '.') {
        ++p;
        digits(is_dec);
      }
      if (p < src_.size() && (src_[p] == 'e' || src_[p] == 'E')) {
        std::size_t q = p + 1;
        if (q < src_.size() && (src_[q] == '+' || src_[q] == '-'))
          ++q;
        if (q < src_.size() && std::isdigit(static_cast<unsigned char>(src_[q]))) {
          p = q;
          digits(is_dec);
        }
      }
      if (p < src_.size() && (src_[p] == 'j' || src_[p] == 'J'))
        ++p;
    }
    push(TokenKind::Number, std::string(src_.substr(pos_, p - pos_)), pos_, p);
    col_ += p - pos_;
    pos_ = p;
  }

  void lex_token() {
    unsigned char c = static_cast<unsigned char>(src_[pos_]);
    std::size_t prefix = 0;
    if ((c == '\'' || c == '"') || (is_ident_start(c) && string_prefix_at(pos_, prefix) &&
                                    prefix > 0)) {
      lex_string(pos_, prefix);
      return;
    }
    if (is_ident_start(c)) {
      std::size_t p = pos_;
      while (p < src_.size() && is_ident_char(static_cast<unsigned char>(src_[p])))
        ++p;
      push(TokenKind::Name, std::string(src_.substr(pos_, p - pos_)), pos_, p);
      col_ += p - pos_;
      pos_ = p;
      return;
    }
    if (std::isdigit(c) ||
        (c == '.' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      lex_number();
      return;
    }
    for (auto op : kOperators) {
      if (src_.substr(pos_, op.size()) == op) {
        if (op == "(" || op == "[" || op == "{")
          ++depth_;
        else if (op == ")" || op == "]" || op == "}") {
          if (depth_ == 0)
            fail("unmatched '" + std::string(op) + "'");
          --depth_;
        }
        push(TokenKind::Op, std::string(op), pos_, pos_ + op.size());
        col_ += op.size();
        pos_ += op.size();
        return;
      }
    }
    fail(std::string("invalid character '") + static_cast<char>(c) + "'");
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t col_ = 0;
  int line_ = 1;
  int depth_ = 0;
  std::vector<std::size_t> indents_;
  std::vector<Token> tokens_;
};

} // namespace

bool is_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

std::size_t count_lexemes(const std::vector<Token> &tokens) {
  return static_cast<std::size_t>(std::count_if(
      tokens.begin(), tokens.end(), [](const Token &t) { return !is_layout(t.kind); }));
}

} // namespace typespace::py
