#include "typespace/pyparse.hpp"

#include "typespace/errors.hpp"

#include <algorithm>
#include <initializer_list>

namespace typespace::py {

namespace {

enum class ExprKind { Other, Name, Attribute, Tuple, List, Starred, Subscript };

// A parsed expression: `parts` are attached to the enclosing node (they may
// include grouping parentheses), `head` is the node standing for the value.
struct Frag {
  std::vector<SyntaxRef> parts;
  SyntaxRef head;
  ExprKind kind = ExprKind::Other;
  int use = -1;
  std::vector<Frag> elts;
};

struct LoopContext {
  int header;
  std::vector<int> breaks;
};

struct Marks {
  std::size_t names, scopes, attributes;
};

void append_unique(std::vector<int> &v, int x) {
  if (std::find(v.begin(), v.end(), x) == v.end())
    v.push_back(x);
}

class Parser {
public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  ParsedModule run() {
    out_.lexed_tokens = count_lexemes(toks_);
    out_.nodes.push_back(SyntaxNode{"Module", {}, -1});
    out_.scopes.push_back(Scope{ScopeKind::Module, -1, "", {}, {}, -1});
    out_.flows.emplace_back();
    scope_stack_.push_back(0);
    skip_docstring();
    while (cur().kind != TokenKind::End) {
      if (cur().kind == TokenKind::Newline) {
        ++pos_;
        continue;
      }
      parse_statement(0);
    }
    return std::move(out_);
  }

private:
  // ---- token access ----
  const Token &cur() const { return toks_[pos_]; }
  const Token &ahead(std::size_t n = 1) const {
    return toks_[std::min(pos_ + n, toks_.size() - 1)];
  }
  bool is_op(std::string_view s) const {
    return cur().kind == TokenKind::Op && cur().text == s;
  }
  bool is_kw(std::string_view s) const {
    return cur().kind == TokenKind::Name && cur().text == s;
  }
  bool at_stmt_end() const {
    return cur().kind == TokenKind::Newline || cur().kind == TokenKind::End ||
           is_op(";");
  }
  bool starts_expression() const {
    const Token &t = cur();
    switch (t.kind) {
    case TokenKind::Number:
    case TokenKind::String:
      return true;
    case TokenKind::Name:
      return !is_keyword(t.text) || t.text == "None" || t.text == "True" ||
             t.text == "False" || t.text == "not" || t.text == "lambda" ||
             t.text == "await" || t.text == "yield";
    case TokenKind::Op:
      return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-" ||
             t.text == "+" || t.text == "~" || t.text == "*" || t.text == "..." ||
             t.text == "**";
    default:
      return false;
    }
  }

  [[noreturn]] void fail(const std::string &msg) const {
    const Token &t = cur();
    std::string what = t.kind == TokenKind::End       ? "end of file"
                       : t.kind == TokenKind::Newline ? "newline"
                       : t.kind == TokenKind::Indent  ? "indent"
                       : t.kind == TokenKind::Dedent  ? "dedent"
                                                      : "'" + t.text + "'";
    throw ParseError("line " + std::to_string(t.line) + ": " + msg + " near " + what,
                     t.offset);
  }

  SyntaxRef emit() {
    if (is_layout(cur().kind))
      fail("unexpected token");
    out_.tokens.push_back(cur());
    ++pos_;
    return SyntaxRef::token(static_cast<int>(out_.tokens.size()) - 1);
  }
  SyntaxRef expect_op(std::string_view s) {
    if (!is_op(s))
      fail("expected '" + std::string(s) + "'");
    return emit();
  }
  SyntaxRef expect_kw(std::string_view s) {
    if (!is_kw(s))
      fail("expected '" + std::string(s) + "'");
    return emit();
  }
  SyntaxRef expect_name() {
    if (cur().kind != TokenKind::Name || is_keyword(cur().text))
      fail("expected identifier");
    return emit();
  }
  void suppress() {
    if (!is_layout(cur().kind))
      ++out_.suppressed_tokens;
    ++pos_;
  }
  void expect_newline() {
    if (cur().kind == TokenKind::Newline)
      ++pos_;
    else if (cur().kind != TokenKind::End)
      fail("expected newline");
  }

  // ---- tree construction ----
  int new_node(std::string kind) {
    out_.nodes.push_back(SyntaxNode{std::move(kind), {}, -1});
    return static_cast<int>(out_.nodes.size()) - 1;
  }
  void attach(int node, SyntaxRef ref) {
    auto &n = out_.nodes[node];
    if (n.first_token < 0)
      n.first_token = ref.kind == SyntaxRef::Kind::Token
                          ? ref.index
                          : out_.nodes[ref.index].first_token;
    n.children.push_back(ref);
  }
  void attach(int node, const Frag &f) {
    for (auto r : f.parts)
      attach(node, r);
  }
  static Frag single(int node) {
    Frag f;
    f.parts = {SyntaxRef::node(node)};
    f.head = SyntaxRef::node(node);
    return f;
  }
  static Frag token_frag(SyntaxRef r) {
    Frag f;
    f.parts = {r};
    f.head = r;
    return f;
  }

  // ---- scopes, flow and name uses ----
  int current_scope() const { return scope_stack_.back(); }
  int new_scope(ScopeKind kind, int parent, std::string name = {}) {
    out_.scopes.push_back(Scope{kind, parent, std::move(name), {}, {}, -1});
    return static_cast<int>(out_.scopes.size()) - 1;
  }
  Marks marks() const {
    return {out_.names.size(), out_.scopes.size(), out_.attributes.size()};
  }

  void start_block() {
    auto &blocks = out_.flows[flow_].blocks;
    int b = static_cast<int>(blocks.size());
    blocks.emplace_back();
    for (int p : frontier_)
      append_unique(blocks[p].successors, b);
    block_ = b;
    frontier_ = {b};
  }
  void link(int from, int to) {
    append_unique(out_.flows[flow_].blocks[from].successors, to);
  }
  void record(bool attribute, int use) {
    if (block_ < 0)
      start_block();
    out_.flows[flow_].blocks[block_].items.push_back(Occurrence{attribute, use});
  }
  int add_name(int token, NameContext ctx, int scope = -1, bool place = true) {
    NameUse u{token, out_.tokens[token].text, scope < 0 ? current_scope() : scope,
              ctx, -1, -1};
    out_.names.push_back(u);
    int idx = static_cast<int>(out_.names.size()) - 1;
    if (place) {
      if (block_ < 0)
        start_block();
      out_.names[idx].flow = flow_;
      out_.names[idx].block = block_;
      record(false, idx);
    }
    return idx;
  }

  void mark_ctx(const Frag &f, NameContext ctx) {
    switch (f.kind) {
    case ExprKind::Name:
      out_.names[f.use].ctx = ctx;
      break;
    case ExprKind::Attribute:
      if (f.use >= 0 && ctx == NameContext::Store)
        out_.attributes[f.use].store = true;
      break;
    case ExprKind::Tuple:
    case ExprKind::List:
    case ExprKind::Starred:
      for (const auto &e : f.elts)
        mark_ctx(e, ctx);
      break;
    default:
      break;
    }
  }

  struct Collected {
    std::string text;
    std::size_t begin = 0, end = 0;
  };

  // Consumes an annotation without emitting it, stopping at one of `stops`
  // (or the end of the statement) at bracket depth zero.
  Collected collect_annotation(std::initializer_list<std::string_view> stops) {
    Collected c;
    c.begin = c.end = cur().offset;
    int depth = 0;
    while (true) {
      const Token &t = cur();
      if (t.kind == TokenKind::End || (depth == 0 && t.kind == TokenKind::Newline))
        break;
      if (t.kind == TokenKind::Op && depth == 0 &&
          std::find(stops.begin(), stops.end(), t.text) != stops.end())
        break;
      if (t.kind == TokenKind::Op) {
        if (t.text == "(" || t.text == "[" || t.text == "{")
          ++depth;
        else if (t.text == ")" || t.text == "]" || t.text == "}")
          --depth;
      }
      if (is_layout(t.kind)) {
        ++pos_;
        continue;
      }
      c.text += t.text == "," ? std::string(", ") : t.text;
      c.end = t.end;
      suppress();
    }
    if (c.text.empty())
      fail("expected annotation");
    return c;
  }

  void skip_docstring() {
    if (cur().kind != TokenKind::String)
      return;
    std::size_t k = pos_;
    while (toks_[k].kind == TokenKind::String)
      ++k;
    const Token &after = toks_[k];
    bool ends = after.kind == TokenKind::Newline || after.kind == TokenKind::End ||
                (after.kind == TokenKind::Op && after.text == ";");
    if (!ends)
      return;
    while (pos_ < k)
      suppress();
    if (is_op(";"))
      suppress();
    if (cur().kind == TokenKind::Newline)
      ++pos_;
  }

  // ---- statements ----
  void parse_suite(int owner, bool docstring) {
    if (cur().kind != TokenKind::Newline) {
      parse_simple_line(owner);
      return;
    }
    ++pos_;
    if (cur().kind != TokenKind::Indent)
      fail("expected an indented block");
    ++pos_;
    if (docstring)
      skip_docstring();
    while (cur().kind != TokenKind::Dedent && cur().kind != TokenKind::End)
      parse_statement(owner);
    if (cur().kind == TokenKind::Dedent)
      ++pos_;
  }

  void parse_statement(int owner) {
    if (cur().kind == TokenKind::Indent)
      fail("unexpected indent");
    if (cur().kind == TokenKind::Name) {
      const std::string &w = cur().text;
      if (w == "if")
        return parse_if(owner);
      if (w == "while")
        return parse_while(owner);
      if (w == "for")
        return parse_for(owner, false);
      if (w == "try")
        return parse_try(owner);
      if (w == "with")
        return parse_with(owner, false);
      if (w == "def")
        return parse_funcdef(owner, {}, false);
      if (w == "class")
        return parse_classdef(owner, {});
      if (w == "async") {
        const Token &n = ahead();
        if (n.text == "def")
          return parse_funcdef(owner, {}, true);
        if (n.text == "for")
          return parse_for(owner, true);
        if (n.text == "with")
          return parse_with(owner, true);
      }
    }
    if (is_op("@"))
      return parse_decorated(owner);
    parse_simple_line(owner);
  }

  void parse_simple_line(int owner) {
    while (true) {
      parse_small(owner);
      if (is_op(";")) {
        attach(owner, emit());
        if (cur().kind == TokenKind::Newline || cur().kind == TokenKind::End)
          break;
        continue;
      }
      break;
    }
    expect_newline();
  }

  void parse_small(int owner) {
    start_block();
    if (cur().kind == TokenKind::Name) {
      const std::string w = cur().text;
      if (w == "pass" || w == "break" || w == "continue") {
        int node = new_node(w == "pass" ? "Pass" : w == "break" ? "Break" : "Continue");
        attach(node, emit());
        attach(owner, SyntaxRef::node(node));
        if (w == "break") {
          if (!loops_.empty())
            loops_.back().breaks.push_back(block_);
          frontier_.clear();
        } else if (w == "continue") {
          if (!loops_.empty())
            link(block_, loops_.back().header);
          frontier_.clear();
        }
        return;
      }
      if (w == "return") {
        int node = new_node("Return");
        attach(node, emit());
        if (!at_stmt_end())
          attach(node, parse_testlist_star());
        if (!func_stack_.empty() && func_stack_.back() >= 0)
          out_.returns.emplace_back(node, func_stack_.back());
        attach(owner, SyntaxRef::node(node));
        frontier_.clear();
        return;
      }
      if (w == "raise") {
        int node = new_node("Raise");
        attach(node, emit());
        if (!at_stmt_end()) {
          attach(node, parse_test());
          if (is_kw("from")) {
            attach(node, emit());
            attach(node, parse_test());
          }
        }
        attach(owner, SyntaxRef::node(node));
        frontier_.clear();
        return;
      }
      if (w == "global" || w == "nonlocal") {
        int node = new_node(w == "global" ? "Global" : "Nonlocal");
        attach(node, emit());
        while (true) {
          SyntaxRef r = expect_name();
          auto &sc = out_.scopes[current_scope()];
          (w == "global" ? sc.globals : sc.nonlocals).push_back(out_.tokens[r.index].text);
          add_name(r.index, NameContext::Load);
          attach(node, r);
          if (!is_op(","))
            break;
          attach(node, emit());
        }
        attach(owner, SyntaxRef::node(node));
        return;
      }
      if (w == "import")
        return parse_import(owner);
      if (w == "from")
        return parse_from_import(owner);
      if (w == "del") {
        int node = new_node("Delete");
        attach(node, emit());
        Frag targets = parse_exprlist();
        mark_ctx(targets, NameContext::Delete);
        attach(node, targets);
        attach(owner, SyntaxRef::node(node));
        return;
      }
      if (w == "assert") {
        int node = new_node("Assert");
        attach(node, emit());
        attach(node, parse_test());
        if (is_op(",")) {
          attach(node, emit());
          attach(node, parse_test());
        }
        attach(owner, SyntaxRef::node(node));
        return;
      }
    }
    parse_expr_statement(owner);
  }

  void parse_import(int owner) {
    int node = new_node("Import");
    attach(node, emit());
    while (true) {
      SyntaxRef first = expect_name();
      attach(node, first);
      while (is_op(".")) {
        attach(node, emit());
        attach(node, expect_name());
      }
      if (is_kw("as")) {
        attach(node, emit());
        SyntaxRef alias = expect_name();
        attach(node, alias);
        add_name(alias.index, NameContext::Import);
      } else {
        add_name(first.index, NameContext::Import);
      }
      if (!is_op(","))
        break;
      attach(node, emit());
    }
    attach(owner, SyntaxRef::node(node));
  }

  void parse_from_import(int owner) {
    int node = new_node("ImportFrom");
    attach(node, emit());
    while (is_op(".") || is_op("..."))
      attach(node, emit());
    if (!is_kw("import")) {
      attach(node, expect_name());
      while (is_op(".")) {
        attach(node, emit());
        attach(node, expect_name());
      }
    }
    attach(node, expect_kw("import"));
    if (is_op("*")) {
      attach(node, emit());
      attach(owner, SyntaxRef::node(node));
      return;
    }
    bool paren = is_op("(");
    if (paren)
      attach(node, emit());
    while (true) {
      if (paren && is_op(")"))
        break;
      SyntaxRef name = expect_name();
      attach(node, name);
      SyntaxRef bound = name;
      if (is_kw("as")) {
        attach(node, emit());
        bound = expect_name();
        attach(node, bound);
      }
      add_name(bound.index, NameContext::Import);
      if (!is_op(","))
        break;
      attach(node, emit());
    }
    if (paren)
      attach(node, expect_op(")"));
    attach(owner, SyntaxRef::node(node));
  }

  bool is_augassign() const {
    static const std::initializer_list<std::string_view> ops = {
        "+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "|=", "^=", "@="};
    return cur().kind == TokenKind::Op &&
           std::find(ops.begin(), ops.end(), cur().text) != ops.end();
  }

  Frag parse_value() { return is_kw("yield") ? parse_yield() : parse_testlist_star(); }

  void parse_expr_statement(int owner) {
    Frag first = parse_value();
    if (is_op(":")) {
      int node = new_node("AnnAssign");
      attach(node, first);
      std::size_t insert_at = out_.tokens.empty() ? cur().offset : out_.tokens.back().end;
      suppress();
      Collected ann = collect_annotation({"="});
      if (first.kind == ExprKind::Name || first.kind == ExprKind::Attribute) {
        auto target = first.kind == ExprKind::Name ? AnnotationTarget::Name
                                                   : AnnotationTarget::Attribute;
        if (first.use >= 0) {
          out_.annotations.push_back(Annotation{target, first.use, ann.text});
          out_.sites.push_back(
              AnnotationSite{target, first.use, insert_at, ann.begin, ann.end, true});
        }
      }
      mark_ctx(first, NameContext::Store);
      if (is_op("=")) {
        attach(node, emit());
        Frag value = parse_value();
        attach(node, value);
        out_.assignments.emplace_back(value.head, first.head);
      }
      attach(owner, SyntaxRef::node(node));
      return;
    }
    if (is_augassign()) {
      int node = new_node("AugAssign");
      attach(node, first);
      mark_ctx(first, NameContext::Store);
      attach(node, emit());
      Frag value = parse_value();
      attach(node, value);
      out_.assignments.emplace_back(value.head, first.head);
      attach(owner, SyntaxRef::node(node));
      return;
    }
    if (is_op("=")) {
      int node = new_node("Assign");
      std::vector<Frag> chain{first};
      attach(node, first);
      while (is_op("=")) {
        attach(node, emit());
        chain.push_back(parse_value());
        attach(node, chain.back());
      }
      Frag value = std::move(chain.back());
      chain.pop_back();
      for (const auto &target : chain) {
        mark_ctx(target, NameContext::Store);
        out_.assignments.emplace_back(value.head, target.head);
      }
      if (chain.size() == 1 && chain[0].kind == ExprKind::Name) {
        const Token &t = out_.tokens[out_.names[chain[0].use].token];
        out_.sites.push_back(
            AnnotationSite{AnnotationTarget::Name, chain[0].use, t.end, t.end, t.end, false});
      }
      attach(owner, SyntaxRef::node(node));
      return;
    }
    int node = new_node("Expr");
    attach(node, first);
    attach(owner, SyntaxRef::node(node));
  }

  void parse_if(int owner) {
    int node = new_node("If");
    start_block();
    int header = block_;
    attach(node, emit());
    attach(node, parse_namedexpr_test());
    attach(node, expect_op(":"));
    frontier_ = {header};
    parse_suite(node, false);
    std::vector<int> ends = frontier_;
    int last_header = header;
    int current = node;
    while (is_kw("elif")) {
      int elif = new_node("If");
      frontier_ = {last_header};
      start_block();
      last_header = block_;
      attach(elif, emit());
      attach(elif, parse_namedexpr_test());
      attach(elif, expect_op(":"));
      frontier_ = {last_header};
      parse_suite(elif, false);
      for (int b : frontier_)
        append_unique(ends, b);
      attach(current, SyntaxRef::node(elif));
      current = elif;
    }
    if (is_kw("else")) {
      attach(current, emit());
      attach(current, expect_op(":"));
      frontier_ = {last_header};
      parse_suite(current, false);
      for (int b : frontier_)
        append_unique(ends, b);
    } else {
      append_unique(ends, last_header);
    }
    frontier_ = ends;
    attach(owner, SyntaxRef::node(node));
  }

  void finish_loop(int node, int header) {
    loops_.push_back(LoopContext{header, {}});
    frontier_ = {header};
    parse_suite(node, false);
    for (int b : frontier_)
      link(b, header);
    LoopContext loop = std::move(loops_.back());
    loops_.pop_back();
    frontier_ = {header};
    if (is_kw("else")) {
      attach(node, emit());
      attach(node, expect_op(":"));
      parse_suite(node, false);
    }
    for (int b : loop.breaks)
      append_unique(frontier_, b);
  }

  void parse_while(int owner) {
    int node = new_node("While");
    start_block();
    int header = block_;
    attach(node, emit());
    attach(node, parse_namedexpr_test());
    attach(node, expect_op(":"));
    finish_loop(node, header);
    attach(owner, SyntaxRef::node(node));
  }

  void parse_for(int owner, bool async) {
    int node = new_node(async ? "AsyncFor" : "For");
    start_block();
    int header = block_;
    if (async)
      attach(node, emit());
    attach(node, expect_kw("for"));
    Frag target = parse_exprlist();
    mark_ctx(target, NameContext::Store);
    attach(node, target);
    attach(node, expect_kw("in"));
    attach(node, parse_testlist_star());
    attach(node, expect_op(":"));
    finish_loop(node, header);
    attach(owner, SyntaxRef::node(node));
  }

  void parse_try(int owner) {
    int node = new_node("Try");
    if (block_ < 0)
      start_block();
    std::vector<int> pre = frontier_;
    attach(node, emit());
    attach(node, expect_op(":"));
    int first_block = static_cast<int>(out_.flows[flow_].blocks.size());
    parse_suite(node, false);
    int last_block = static_cast<int>(out_.flows[flow_].blocks.size());
    std::vector<int> body_end = frontier_;
    std::vector<int> handler_ends;
    bool any_handler = false;
    while (is_kw("except")) {
      any_handler = true;
      int handler = new_node("ExceptHandler");
      frontier_ = pre;
      for (int b = first_block; b < last_block; ++b)
        append_unique(frontier_, b);
      start_block();
      attach(handler, emit());
      if (is_op("*"))
        attach(handler, emit());
      if (!is_op(":")) {
        attach(handler, parse_test());
        if (is_kw("as")) {
          attach(handler, emit());
          SyntaxRef name = expect_name();
          add_name(name.index, NameContext::Store);
          attach(handler, name);
        } else if (is_op(",")) {
          attach(handler, emit());
          attach(handler, parse_test());
        }
      }
      attach(handler, expect_op(":"));
      parse_suite(handler, false);
      for (int b : frontier_)
        append_unique(handler_ends, b);
      attach(node, SyntaxRef::node(handler));
    }
    std::vector<int> after = body_end;
    if (is_kw("else")) {
      frontier_ = body_end;
      attach(node, emit());
      attach(node, expect_op(":"));
      parse_suite(node, false);
      after = frontier_;
    }
    for (int b : handler_ends)
      append_unique(after, b);
    if (is_kw("finally")) {
      frontier_ = after;
      if (!any_handler)
        for (int b = first_block; b < last_block; ++b)
          append_unique(frontier_, b);
      attach(node, emit());
      attach(node, expect_op(":"));
      parse_suite(node, false);
      after = frontier_;
    } else if (!any_handler) {
      fail("expected 'except' or 'finally'");
    }
    frontier_ = after;
    attach(owner, SyntaxRef::node(node));
  }

  // `with (a as b, c as d):`
  bool parenthesized_with_items() const {
    if (!is_op("("))
      return false;
    int depth = 0;
    for (std::size_t k = pos_; k < toks_.size(); ++k) {
      const Token &t = toks_[k];
      if (t.kind == TokenKind::Op) {
        if (t.text == "(" || t.text == "[" || t.text == "{")
          ++depth;
        else if (t.text == ")" || t.text == "]" || t.text == "}") {
          if (--depth == 0)
            return false;
        }
      } else if (t.kind == TokenKind::Name && t.text == "as" && depth == 1) {
        return true;
      }
    }
    return false;
  }

  void parse_with_items(int node, std::string_view closer) {
    while (true) {
      attach(node, parse_test());
      if (is_kw("as")) {
        attach(node, emit());
        Frag target = parse_star_or_expr();
        mark_ctx(target, NameContext::Store);
        attach(node, target);
      }
      if (!is_op(","))
        break;
      attach(node, emit());
      if (is_op(closer))
        break;
    }
  }

  void parse_with(int owner, bool async) {
    int node = new_node(async ? "AsyncWith" : "With");
    start_block();
    if (async)
      attach(node, emit());
    attach(node, expect_kw("with"));
    if (parenthesized_with_items()) {
      attach(node, emit());
      parse_with_items(node, ")");
      attach(node, expect_op(")"));
    } else {
      parse_with_items(node, ":");
    }
    attach(node, expect_op(":"));
    parse_suite(node, false);
    attach(owner, SyntaxRef::node(node));
  }

  void parse_decorated(int owner) {
    start_block();
    std::vector<SyntaxRef> parts;
    while (is_op("@")) {
      parts.push_back(emit());
      Frag d = parse_namedexpr_test();
      parts.insert(parts.end(), d.parts.begin(), d.parts.end());
      expect_newline();
    }
    if (is_kw("def"))
      return parse_funcdef(owner, parts, false);
    if (is_kw("async") && ahead().text == "def")
      return parse_funcdef(owner, parts, true);
    if (is_kw("class"))
      return parse_classdef(owner, parts);
    fail("expected function or class after decorator");
  }

  // Parameters up to (not including) `closer`. With `annotations`, `name: T`
  // annotations are consumed into annotation records.
  void parse_parameters(int node, int scope, std::vector<int> &params,
                        std::string_view closer, bool annotations, bool place) {
    bool positional = true;
    while (!is_op(closer)) {
      bool star = false;
      if (is_op("/")) {
        attach(node, emit());
      } else {
        if (is_op("*") || is_op("**")) {
          star = true;
          attach(node, emit());
        }
        if (cur().kind == TokenKind::Name && !is_keyword(cur().text)) {
          SyntaxRef r = emit();
          attach(node, r);
          int use = add_name(r.index, NameContext::Param, scope, place);
          params.push_back(use);
          if (positional && !star && out_.scopes[scope].first_param < 0)
            out_.scopes[scope].first_param = use;
          if (annotations) {
            const Token &t = out_.tokens[r.index];
            if (is_op(":")) {
              suppress();
              Collected ann = collect_annotation({",", closer, "="});
              out_.annotations.push_back(Annotation{AnnotationTarget::Name, use, ann.text});
              out_.sites.push_back(AnnotationSite{AnnotationTarget::Name, use, t.end,
                                                  ann.begin, ann.end, true});
            } else {
              out_.sites.push_back(AnnotationSite{AnnotationTarget::Name, use, t.end,
                                                  t.end, t.end, false});
            }
          }
          if (is_op("=")) {
            attach(node, emit());
            attach(node, parse_test());
          }
        } else if (!star) {
          fail("expected parameter");
        }
        if (star)
          positional = false;
      }
      if (!is_op(","))
        break;
      attach(node, emit());
    }
  }

  void parse_funcdef(int owner, const std::vector<SyntaxRef> &decorators, bool async) {
    if (decorators.empty())
      start_block();
    int node = new_node(async ? "AsyncFunctionDef" : "FunctionDef");
    for (auto r : decorators)
      attach(node, r);
    if (async)
      attach(node, emit());
    attach(node, expect_kw("def"));
    SyntaxRef name = expect_name();
    attach(node, name);
    int fname = add_name(name.index, NameContext::FunctionName);
    int scope = new_scope(ScopeKind::Function, current_scope(), out_.tokens[name.index].text);
    attach(node, expect_op("("));
    std::vector<int> params;
    parse_parameters(node, scope, params, ")", true, false);
    SyntaxRef close = expect_op(")");
    attach(node, close);
    std::size_t after_paren = out_.tokens[close.index].end;
    if (is_op("->")) {
      suppress();
      Collected ann = collect_annotation({":"});
      out_.annotations.push_back(Annotation{AnnotationTarget::Return, fname, ann.text});
      out_.sites.push_back(
          AnnotationSite{AnnotationTarget::Return, fname, after_paren, ann.begin, ann.end, true});
    } else {
      out_.sites.push_back(AnnotationSite{AnnotationTarget::Return, fname, after_paren,
                                          after_paren, after_paren, false});
    }
    attach(node, expect_op(":"));

    int saved_flow = flow_, saved_block = block_;
    std::vector<int> saved_frontier = std::move(frontier_);
    std::vector<LoopContext> saved_loops = std::move(loops_);
    out_.flows.emplace_back();
    flow_ = static_cast<int>(out_.flows.size()) - 1;
    frontier_.clear();
    loops_.clear();
    block_ = -1;
    start_block();
    for (int u : params) {
      out_.names[u].flow = flow_;
      out_.names[u].block = block_;
      record(false, u);
    }
    scope_stack_.push_back(scope);
    func_stack_.push_back(node);
    parse_suite(node, true);
    func_stack_.pop_back();
    scope_stack_.pop_back();
    flow_ = saved_flow;
    block_ = saved_block;
    frontier_ = std::move(saved_frontier);
    loops_ = std::move(saved_loops);
    attach(owner, SyntaxRef::node(node));
  }

  void parse_classdef(int owner, const std::vector<SyntaxRef> &decorators) {
    if (decorators.empty())
      start_block();
    int node = new_node("ClassDef");
    for (auto r : decorators)
      attach(node, r);
    attach(node, expect_kw("class"));
    SyntaxRef name = expect_name();
    attach(node, name);
    add_name(name.index, NameContext::ClassName);
    if (is_op("(")) {
      attach(node, emit());
      parse_arguments(node, ")");
      attach(node, expect_op(")"));
    }
    attach(node, expect_op(":"));
    int scope = new_scope(ScopeKind::Class, current_scope(), out_.tokens[name.index].text);
    scope_stack_.push_back(scope);
    func_stack_.push_back(-1);
    parse_suite(node, true);
    func_stack_.pop_back();
    scope_stack_.pop_back();
    attach(owner, SyntaxRef::node(node));
  }

  // ---- expressions ----
  Frag parse_namedexpr_test() {
    Frag target = parse_test();
    if (!is_op(":="))
      return target;
    int node = new_node("NamedExpr");
    attach(node, target);
    attach(node, emit());
    Frag value = parse_test();
    attach(node, value);
    if (target.kind == ExprKind::Name) {
      auto &u = out_.names[target.use];
      u.ctx = NameContext::Store;
      while (out_.scopes[u.scope].kind == ScopeKind::Comprehension)
        u.scope = out_.scopes[u.scope].parent;
    }
    out_.assignments.emplace_back(value.head, target.head);
    return single(node);
  }

  Frag parse_test() {
    if (is_kw("lambda"))
      return parse_lambda();
    Frag body = parse_or_test();
    if (!is_kw("if"))
      return body;
    int node = new_node("IfExp");
    attach(node, body);
    attach(node, emit());
    attach(node, parse_or_test());
    attach(node, expect_kw("else"));
    attach(node, parse_test());
    return single(node);
  }

  Frag parse_lambda() {
    int node = new_node("Lambda");
    attach(node, emit());
    int scope = new_scope(ScopeKind::Lambda, current_scope());
    std::vector<int> params;
    parse_parameters(node, scope, params, ":", false, true);
    attach(node, expect_op(":"));
    scope_stack_.push_back(scope);
    func_stack_.push_back(-1);
    attach(node, parse_test());
    func_stack_.pop_back();
    scope_stack_.pop_back();
    return single(node);
  }

  template <class Next>
  Frag keyword_chain(Next next, std::string_view kw, const char *kind) {
    Frag left = (this->*next)();
    while (is_kw(kw)) {
      int node = new_node(kind);
      attach(node, left);
      attach(node, emit());
      attach(node, (this->*next)());
      left = single(node);
    }
    return left;
  }

  Frag parse_or_test() { return keyword_chain(&Parser::parse_and_test, "or", "BoolOp"); }
  Frag parse_and_test() { return keyword_chain(&Parser::parse_not_test, "and", "BoolOp"); }

  Frag parse_not_test() {
    if (!is_kw("not"))
      return parse_comparison();
    int node = new_node("UnaryOp");
    attach(node, emit());
    attach(node, parse_not_test());
    return single(node);
  }

  bool at_comparison_op() const {
    if (cur().kind == TokenKind::Op) {
      const std::string &t = cur().text;
      return t == "<" || t == ">" || t == "==" || t == ">=" || t == "<=" || t == "!=";
    }
    if (is_kw("in") || is_kw("is"))
      return true;
    return is_kw("not") && ahead().kind == TokenKind::Name && ahead().text == "in";
  }

  Frag parse_comparison() {
    Frag left = parse_expr();
    if (!at_comparison_op())
      return left;
    int node = new_node("Compare");
    attach(node, left);
    while (at_comparison_op()) {
      bool negated_in = is_kw("not");
      bool is = is_kw("is");
      attach(node, emit());
      if (negated_in || (is && is_kw("not")))
        attach(node, emit());
      attach(node, parse_expr());
    }
    return single(node);
  }

  template <class Next>
  Frag binary_chain(Next next, std::initializer_list<std::string_view> ops) {
    Frag left = (this->*next)();
    while (cur().kind == TokenKind::Op &&
           std::find(ops.begin(), ops.end(), cur().text) != ops.end()) {
      int node = new_node("BinOp");
      attach(node, left);
      attach(node, emit());
      attach(node, (this->*next)());
      left = single(node);
    }
    return left;
  }

  Frag parse_expr() { return binary_chain(&Parser::parse_xor, {"|"}); }
  Frag parse_xor() { return binary_chain(&Parser::parse_and, {"^"}); }
  Frag parse_and() { return binary_chain(&Parser::parse_shift, {"&"}); }
  Frag parse_shift() { return binary_chain(&Parser::parse_arith, {"<<", ">>"}); }
  Frag parse_arith() { return binary_chain(&Parser::parse_term, {"+", "-"}); }
  Frag parse_term() {
    return binary_chain(&Parser::parse_factor, {"*", "/", "%", "//", "@"});
  }

  Frag parse_factor() {
    if (is_op("+") || is_op("-") || is_op("~")) {
      int node = new_node("UnaryOp");
      attach(node, emit());
      attach(node, parse_factor());
      return single(node);
    }
    return parse_power();
  }

  Frag parse_power() {
    Frag base = parse_await();
    if (!is_op("**"))
      return base;
    int node = new_node("BinOp");
    attach(node, base);
    attach(node, emit());
    attach(node, parse_factor());
    return single(node);
  }

  Frag parse_await() {
    if (!is_kw("await"))
      return parse_trailers();
    int node = new_node("Await");
    attach(node, emit());
    attach(node, parse_trailers());
    return single(node);
  }

  Frag parse_trailers() {
    Frag f = parse_atom();
    while (true) {
      if (is_op("(")) {
        int node = new_node("Call");
        attach(node, f);
        attach(node, emit());
        parse_arguments(node, ")");
        attach(node, expect_op(")"));
        f = single(node);
      } else if (is_op("[")) {
        int node = new_node("Subscript");
        attach(node, f);
        attach(node, emit());
        attach(node, parse_subscripts());
        attach(node, expect_op("]"));
        f = single(node);
        f.kind = ExprKind::Subscript;
      } else if (is_op(".")) {
        int node = new_node("Attribute");
        attach(node, f);
        attach(node, emit());
        SyntaxRef name = expect_name();
        attach(node, name);
        Frag attr = single(node);
        attr.kind = ExprKind::Attribute;
        if (f.kind == ExprKind::Name) {
          if (block_ < 0)
            start_block();
          out_.attributes.push_back(AttributeUse{node, f.use, out_.tokens[name.index].text,
                                                 current_scope(), false, flow_, block_});
          attr.use = static_cast<int>(out_.attributes.size()) - 1;
          record(true, attr.use);
        }
        f = std::move(attr);
      } else {
        return f;
      }
    }
  }

  Frag parse_atom() {
    const Token &t = cur();
    switch (t.kind) {
    case TokenKind::Name: {
      if (t.text == "None" || t.text == "True" || t.text == "False")
        return token_frag(emit());
      if (is_keyword(t.text))
        fail("unexpected keyword");
      SyntaxRef r = emit();
      Frag f = token_frag(r);
      f.kind = ExprKind::Name;
      f.use = add_name(r.index, NameContext::Load);
      return f;
    }
    case TokenKind::Number:
      return token_frag(emit());
    case TokenKind::String: {
      SyntaxRef first = emit();
      if (cur().kind != TokenKind::String)
        return token_frag(first);
      int node = new_node("Constant");
      attach(node, first);
      while (cur().kind == TokenKind::String)
        attach(node, emit());
      return single(node);
    }
    case TokenKind::Op:
      if (t.text == "...")
        return token_frag(emit());
      if (t.text == "(")
        return parse_paren();
      if (t.text == "[")
        return parse_list();
      if (t.text == "{")
        return parse_brace();
      break;
    default:
      break;
    }
    fail("invalid syntax");
  }

  bool at_comprehension() const {
    return is_kw("for") || (is_kw("async") && ahead().text == "for");
  }

  void parse_comprehension(int node, const Marks &m) {
    int outer = current_scope();
    int comp = new_scope(ScopeKind::Comprehension, outer);
    for (std::size_t i = m.names; i < out_.names.size(); ++i)
      if (out_.names[i].scope == outer)
        out_.names[i].scope = comp;
    for (std::size_t i = m.scopes; i < static_cast<std::size_t>(comp); ++i)
      if (out_.scopes[i].parent == outer)
        out_.scopes[i].parent = comp;
    for (std::size_t i = m.attributes; i < out_.attributes.size(); ++i)
      if (out_.attributes[i].scope == outer)
        out_.attributes[i].scope = comp;
    scope_stack_.push_back(comp);
    while (at_comprehension()) {
      int clause = new_node("comprehension");
      if (is_kw("async"))
        attach(clause, emit());
      attach(clause, emit());
      Frag target = parse_exprlist();
      mark_ctx(target, NameContext::Store);
      attach(clause, target);
      attach(clause, expect_kw("in"));
      attach(clause, parse_or_test());
      while (is_kw("if")) {
        attach(clause, emit());
        attach(clause, parse_or_test());
      }
      attach(node, SyntaxRef::node(clause));
    }
    scope_stack_.pop_back();
  }

  Frag parse_paren() {
    SyntaxRef open = emit();
    if (is_op(")")) {
      int node = new_node("Tuple");
      attach(node, open);
      attach(node, emit());
      Frag f = single(node);
      f.kind = ExprKind::Tuple;
      return f;
    }
    if (is_kw("yield")) {
      Frag y = parse_yield();
      SyntaxRef close = expect_op(")");
      y.parts.insert(y.parts.begin(), open);
      y.parts.push_back(close);
      return y;
    }
    Marks m = marks();
    Frag first = parse_star_or_namedexpr();
    if (at_comprehension()) {
      int node = new_node("GeneratorExp");
      attach(node, open);
      attach(node, first);
      parse_comprehension(node, m);
      attach(node, expect_op(")"));
      return single(node);
    }
    if (is_op(",")) {
      int node = new_node("Tuple");
      attach(node, open);
      attach(node, first);
      std::vector<Frag> elts{first};
      while (is_op(",")) {
        attach(node, emit());
        if (is_op(")"))
          break;
        elts.push_back(parse_star_or_namedexpr());
        attach(node, elts.back());
      }
      attach(node, expect_op(")"));
      Frag f = single(node);
      f.kind = ExprKind::Tuple;
      f.elts = std::move(elts);
      return f;
    }
    SyntaxRef close = expect_op(")");
    first.parts.insert(first.parts.begin(), open);
    first.parts.push_back(close);
    return first;
  }

  Frag parse_list() {
    int node = new_node("List");
    attach(node, emit());
    std::vector<Frag> elts;
    if (!is_op("]")) {
      Marks m = marks();
      elts.push_back(parse_star_or_namedexpr());
      attach(node, elts.back());
      if (at_comprehension()) {
        out_.nodes[node].kind = "ListComp";
        parse_comprehension(node, m);
        attach(node, expect_op("]"));
        return single(node);
      }
      while (is_op(",")) {
        attach(node, emit());
        if (is_op("]"))
          break;
        elts.push_back(parse_star_or_namedexpr());
        attach(node, elts.back());
      }
    }
    attach(node, expect_op("]"));
    Frag f = single(node);
    f.kind = ExprKind::List;
    f.elts = std::move(elts);
    return f;
  }

  void parse_dict_entry(int node) {
    if (is_op("**")) {
      attach(node, emit());
      attach(node, parse_expr());
      return;
    }
    attach(node, parse_test());
    attach(node, expect_op(":"));
    attach(node, parse_test());
  }

  Frag parse_brace() {
    int node = new_node("Dict");
    attach(node, emit());
    if (is_op("}")) {
      attach(node, emit());
      return single(node);
    }
    Marks m = marks();
    bool dict = true;
    if (is_op("**")) {
      attach(node, emit());
      attach(node, parse_expr());
    } else {
      attach(node, parse_star_or_namedexpr());
      if (is_op(":")) {
        attach(node, emit());
        attach(node, parse_test());
      } else {
        dict = false;
        out_.nodes[node].kind = "Set";
      }
    }
    if (at_comprehension()) {
      out_.nodes[node].kind = dict ? "DictComp" : "SetComp";
      parse_comprehension(node, m);
      attach(node, expect_op("}"));
      return single(node);
    }
    while (is_op(",")) {
      attach(node, emit());
      if (is_op("}"))
        break;
      if (dict)
        parse_dict_entry(node);
      else
        attach(node, parse_star_or_namedexpr());
    }
    attach(node, expect_op("}"));
    return single(node);
  }

  void parse_arguments(int node, std::string_view closer) {
    while (!is_op(closer)) {
      if (is_op("*")) {
        int star = new_node("Starred");
        attach(star, emit());
        attach(star, parse_test());
        attach(node, SyntaxRef::node(star));
      } else if (is_op("**")) {
        int kw = new_node("keyword");
        attach(kw, emit());
        attach(kw, parse_test());
        attach(node, SyntaxRef::node(kw));
      } else if (cur().kind == TokenKind::Name && !is_keyword(cur().text) &&
                 ahead().kind == TokenKind::Op && ahead().text == "=") {
        int kw = new_node("keyword");
        attach(kw, emit());
        attach(kw, emit());
        attach(kw, parse_test());
        attach(node, SyntaxRef::node(kw));
      } else {
        Marks m = marks();
        Frag arg = parse_namedexpr_test();
        if (at_comprehension()) {
          int gen = new_node("GeneratorExp");
          attach(gen, arg);
          parse_comprehension(gen, m);
          attach(node, SyntaxRef::node(gen));
        } else {
          attach(node, arg);
        }
      }
      if (!is_op(","))
        break;
      attach(node, emit());
    }
  }

  Frag parse_subscript() {
    Frag lower;
    bool has_lower = !is_op(":");
    if (has_lower) {
      lower = parse_star_or_namedexpr();
      if (!is_op(":"))
        return lower;
    }
    int node = new_node("Slice");
    if (has_lower)
      attach(node, lower);
    attach(node, emit());
    if (!is_op("]") && !is_op(",") && !is_op(":"))
      attach(node, parse_test());
    if (is_op(":")) {
      attach(node, emit());
      if (!is_op("]") && !is_op(","))
        attach(node, parse_test());
    }
    return single(node);
  }

  Frag parse_subscripts() {
    Frag first = parse_subscript();
    if (!is_op(","))
      return first;
    int node = new_node("Tuple");
    attach(node, first);
    while (is_op(",")) {
      attach(node, emit());
      if (is_op("]"))
        break;
      attach(node, parse_subscript());
    }
    return single(node);
  }

  Frag parse_star_or_namedexpr() {
    if (!is_op("*"))
      return parse_namedexpr_test();
    int node = new_node("Starred");
    attach(node, emit());
    Frag inner = parse_expr();
    attach(node, inner);
    Frag f = single(node);
    f.kind = ExprKind::Starred;
    f.elts = {std::move(inner)};
    return f;
  }

  Frag parse_star_or_expr() {
    if (!is_op("*"))
      return parse_expr();
    int node = new_node("Starred");
    attach(node, emit());
    Frag inner = parse_expr();
    attach(node, inner);
    Frag f = single(node);
    f.kind = ExprKind::Starred;
    f.elts = {std::move(inner)};
    return f;
  }

  template <class Elem> Frag tuple_of(Elem elem) {
    Frag first = (this->*elem)();
    if (!is_op(","))
      return first;
    int node = new_node("Tuple");
    attach(node, first);
    std::vector<Frag> elts{first};
    while (is_op(",")) {
      attach(node, emit());
      if (!starts_expression())
        break;
      elts.push_back((this->*elem)());
      attach(node, elts.back());
    }
    Frag f = single(node);
    f.kind = ExprKind::Tuple;
    f.elts = std::move(elts);
    return f;
  }

  Frag parse_testlist_star() { return tuple_of(&Parser::parse_star_or_namedexpr); }
  Frag parse_exprlist() { return tuple_of(&Parser::parse_star_or_expr); }

  Frag parse_yield() {
    int node = new_node("Yield");
    attach(node, emit());
    if (is_kw("from")) {
      out_.nodes[node].kind = "YieldFrom";
      attach(node, emit());
      attach(node, parse_test());
    } else if (starts_expression()) {
      attach(node, parse_testlist_star());
    }
    if (!func_stack_.empty() && func_stack_.back() >= 0)
      out_.returns.emplace_back(node, func_stack_.back());
    return single(node);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  ParsedModule out_;
  std::vector<int> scope_stack_;
  std::vector<int> func_stack_;
  std::vector<LoopContext> loops_;
  int flow_ = 0;
  int block_ = -1;
  std::vector<int> frontier_;
};

} // namespace

ParsedModule parse_module(std::string_view source) {
  return Parser(tokenize(source)).run();
}

} // namespace typespace::py
