#pragma once

#include "typespace/typeexpr.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace typespace {

enum class NodeCategory { Token, Nonterminal, Vocabulary, Symbol };

enum class EdgeLabel {
  NextToken,
  Child,
  NextMayUse,
  NextLexicalUse,
  AssignedFrom,
  ReturnsTo,
  OccurrenceOf,
  SubtokenOf,
};

inline constexpr std::size_t kNumEdgeLabels = 8;

const std::array<EdgeLabel, kNumEdgeLabels> &all_edge_labels();
std::string_view edge_label_name(EdgeLabel label);
/// Accepts the canonical upper-case names, e.g. "NEXT_TOKEN".
std::optional<EdgeLabel> parse_edge_label(std::string_view name);

std::string_view category_name(NodeCategory c);
std::optional<NodeCategory> parse_category(std::string_view name);

enum class SymbolKind { Variable, Parameter, Return };

std::string_view symbol_kind_name(SymbolKind k);
std::optional<SymbolKind> parse_symbol_kind(std::string_view name);

struct Node {
  NodeCategory category;
  std::string label;
  friend bool operator==(const Node &, const Node &) = default;
};

struct SymbolInfo {
  int node;
  SymbolKind kind;
  std::string name;
  std::optional<TypeExpr> annotation; // normalized ground truth
  friend bool operator==(const SymbolInfo &, const SymbolInfo &) = default;
};

using EdgeList = std::vector<std::pair<int, int>>;

struct CodeGraph {
  std::string file_id;
  std::vector<Node> nodes;
  // Only labels with at least one edge are present. Lists are sorted and
  // free of duplicates.
  std::map<EdgeLabel, EdgeList> edges;
  std::vector<SymbolInfo> symbols;

  const EdgeList &edges_of(EdgeLabel label) const;
  std::size_t edge_count() const;
  std::size_t annotated_count() const;

  /// Throws DataError when an invariant does not hold.
  void validate() const;

  friend bool operator==(const CodeGraph &, const CodeGraph &) = default;
};

/// Sorts and deduplicates every edge list and drops empty labels.
void canonicalize_edges(CodeGraph &g);

/// Splits an identifier on underscores, other punctuation and case changes
/// (`HTTPServer` -> http, server), lower-cased. Never empty.
std::vector<std::string> subtokenize(std::string_view identifier);

struct ExtractOptions {
  std::set<EdgeLabel> disabled;
  std::size_t max_nodes = 50000;
  std::size_t max_type_depth = 2;
};

/// Where an annotation for a symbol can be written into the source: either
/// an existing annotation spanning [begin, end) or an insertion point.
struct SymbolSite {
  int symbol; // index into CodeGraph::symbols
  bool is_return = false;
  bool existing = false;
  std::size_t insert_at = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Extraction {
  CodeGraph graph;
  std::vector<SymbolSite> sites; // at most one per symbol
  std::vector<std::string> diagnostics;
};

/// Builds the graph of one source file. Throws ParseError when the file does
/// not parse and DataError when the node cap is exceeded. Annotations that do
/// not parse are dropped and reported in `diagnostics`.
Extraction extract(std::string_view source, std::string file_id,
                   const ExtractOptions &options = {});

CodeGraph extract_graph(std::string_view source, std::string file_id = "",
                        const ExtractOptions &options = {});

/// One JSON object on a single line, keys in a fixed order.
std::string serialize_graph(const CodeGraph &g);
/// Inverse of serialize_graph. Throws ParseError carrying `line_no`.
CodeGraph deserialize_graph(std::string_view line, std::size_t line_no = 1);

std::vector<CodeGraph> read_corpus(const std::string &path);
void write_corpus(const std::string &path, const std::vector<CodeGraph> &graphs);

} // namespace typespace
