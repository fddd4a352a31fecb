#pragma once

#include "typespace/pylex.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace typespace::py {

/// Reference to a syntax-tree child: an emitted token or a non-terminal.
struct SyntaxRef {
  enum class Kind : std::uint8_t { Token, Node };
  Kind kind = Kind::Node;
  int index = -1;

  static SyntaxRef token(int i) { return {Kind::Token, i}; }
  static SyntaxRef node(int i) { return {Kind::Node, i}; }
  bool valid() const { return index >= 0; }
  friend bool operator==(const SyntaxRef &, const SyntaxRef &) = default;
};

struct SyntaxNode {
  std::string kind; // production name, e.g. "Assign", "Call"
  std::vector<SyntaxRef> children;
  int first_token = -1;
};

enum class ScopeKind { Module, Class, Function, Lambda, Comprehension };

struct Scope {
  ScopeKind kind;
  int parent = -1;
  std::string name;
  std::vector<std::string> globals;
  std::vector<std::string> nonlocals;
  int first_param = -1; // NameUse index of the first positional parameter
};

enum class NameContext { Load, Store, Param, FunctionName, ClassName, Import, Delete };

inline bool is_binding(NameContext c) { return c != NameContext::Load; }

/// An identifier token that may bind to a symbol.
struct NameUse {
  int token;
  std::string name;
  int scope;
  NameContext ctx;
  int flow;
  int block;
};

/// `base.attr` where `base` is a plain name; used to bind `self.y`.
struct AttributeUse {
  int node;
  int base; // NameUse index
  std::string attribute;
  int scope;
  bool store = false;
  int flow;
  int block;
};

struct Occurrence {
  bool attribute = false;
  int use = -1;
};

/// Statement-level control flow. Items are name/attribute occurrences in
/// textual order within the block.
struct FlowBlock {
  std::vector<Occurrence> items;
  std::vector<int> successors;
};

struct FlowGraph {
  std::vector<FlowBlock> blocks;
};

enum class AnnotationTarget { Name, Attribute, Return };

struct Annotation {
  AnnotationTarget target;
  int use; // NameUse (Name, Return) or AttributeUse (Attribute) index
  std::string text;
};

/// Where an annotation for a binding lives (or would be inserted) in the
/// source. `begin == end == insert_at` when there is no existing annotation.
struct AnnotationSite {
  AnnotationTarget target;
  int use;
  std::size_t insert_at;
  std::size_t begin;
  std::size_t end;
  bool existing = false;
};

struct ParsedModule {
  std::vector<Token> tokens;     // emitted tokens, in source order
  std::vector<SyntaxNode> nodes; // nodes[0] is the Module root
  std::vector<Scope> scopes;     // scopes[0] is the module scope
  std::vector<NameUse> names;
  std::vector<AttributeUse> attributes;
  std::vector<std::pair<SyntaxRef, SyntaxRef>> assignments; // (value, target)
  std::vector<std::pair<int, int>> returns; // (return/yield node, def node)
  std::vector<Annotation> annotations;
  std::vector<AnnotationSite> sites;
  std::vector<FlowGraph> flows; // flows[0] is the module body
  std::size_t lexed_tokens = 0; // non-layout tokens produced by the lexer
  std::size_t suppressed_tokens = 0; // annotation and docstring tokens
};

/// Parses a module. Annotation and docstring tokens are consumed but not
/// emitted into the tree. Throws ParseError on syntax errors.
ParsedModule parse_module(std::string_view source);

} // namespace typespace::py
