#include "typespace/code_graph.hpp"

#include "typespace/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>

namespace typespace {

namespace {

constexpr std::array<std::string_view, kNumEdgeLabels> kEdgeNames = {
    "NEXT_TOKEN",    "CHILD",     "NEXT_MAY_USE",  "NEXT_LEXICAL_USE",
    "ASSIGNED_FROM", "RETURNS_TO", "OCCURRENCE_OF", "SUBTOKEN_OF"};

constexpr std::array<std::string_view, 4> kCategoryNames = {"token", "nonterminal",
                                                            "vocabulary", "symbol"};

constexpr std::array<std::string_view, 3> kKindNames = {"variable", "parameter",
                                                        "return"};

using ordered_json = nlohmann::ordered_json;

} // namespace

const std::array<EdgeLabel, kNumEdgeLabels> &all_edge_labels() {
  static const std::array<EdgeLabel, kNumEdgeLabels> labels = {
      EdgeLabel::NextToken,      EdgeLabel::Child,        EdgeLabel::NextMayUse,
      EdgeLabel::NextLexicalUse, EdgeLabel::AssignedFrom, EdgeLabel::ReturnsTo,
      EdgeLabel::OccurrenceOf,   EdgeLabel::SubtokenOf};
  return labels;
}

std::string_view edge_label_name(EdgeLabel label) {
  return kEdgeNames[static_cast<std::size_t>(label)];
}

std::optional<EdgeLabel> parse_edge_label(std::string_view name) {
  for (std::size_t i = 0; i < kEdgeNames.size(); ++i)
    if (kEdgeNames[i] == name)
      return static_cast<EdgeLabel>(i);
  return std::nullopt;
}

std::string_view category_name(NodeCategory c) {
  return kCategoryNames[static_cast<std::size_t>(c)];
}

std::optional<NodeCategory> parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
    if (kCategoryNames[i] == name)
      return static_cast<NodeCategory>(i);
  return std::nullopt;
}

std::string_view symbol_kind_name(SymbolKind k) {
  return kKindNames[static_cast<std::size_t>(k)];
}

std::optional<SymbolKind> parse_symbol_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name)
      return static_cast<SymbolKind>(i);
  return std::nullopt;
}

const EdgeList &CodeGraph::edges_of(EdgeLabel label) const {
  static const EdgeList none;
  auto it = edges.find(label);
  return it == edges.end() ? none : it->second;
}

std::size_t CodeGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto &[label, list] : edges)
    n += list.size();
  return n;
}

std::size_t CodeGraph::annotated_count() const {
  return static_cast<std::size_t>(std::count_if(
      symbols.begin(), symbols.end(),
      [](const SymbolInfo &s) { return s.annotation.has_value(); }));
}

void CodeGraph::validate() const {
  const int n = static_cast<int>(nodes.size());
  for (const auto &[label, list] : edges) {
    for (const auto &[src, dst] : list) {
      if (src < 0 || src >= n || dst < 0 || dst >= n)
        throw DataError(std::string(edge_label_name(label)) + " edge (" +
                        std::to_string(src) + ", " + std::to_string(dst) +
                        ") out of range for " + std::to_string(n) + " nodes");
      if (label == EdgeLabel::OccurrenceOf && src == dst)
        throw DataError("self-loop on OCCURRENCE_OF at node " + std::to_string(src));
    }
  }
  for (const auto &s : symbols) {
    if (s.node < 0 || s.node >= n)
      throw DataError("symbol '" + s.name + "' refers to missing node " +
                      std::to_string(s.node));
    if (nodes[s.node].category != NodeCategory::Symbol)
      throw DataError("symbol '" + s.name + "' refers to a non-symbol node");
  }
}

void canonicalize_edges(CodeGraph &g) {
  for (auto it = g.edges.begin(); it != g.edges.end();) {
    auto &list = it->second;
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    if (list.empty())
      it = g.edges.erase(it);
    else
      ++it;
  }
}

std::vector<std::string> subtokenize(std::string_view identifier) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty())
      out.push_back(std::move(current));
    current.clear();
  };
  auto cls = [](unsigned char c) {
    if (std::isupper(c))
      return 'U';
    if (std::islower(c) || std::isdigit(c) || c >= 0x80)
      return 'L';
    return '_';
  };
  for (std::size_t i = 0; i < identifier.size(); ++i) {
    auto c = static_cast<unsigned char>(identifier[i]);
    char k = cls(c);
    if (k == '_') {
      flush();
      continue;
    }
    if (!current.empty() && k == 'U') {
      auto prev = static_cast<unsigned char>(identifier[i - 1]);
      bool next_lower = i + 1 < identifier.size() &&
                        cls(static_cast<unsigned char>(identifier[i + 1])) == 'L' &&
                        !std::isdigit(static_cast<unsigned char>(identifier[i + 1]));
      // fooBar -> foo|Bar; HTTPServer -> HTTP|Server
      if (cls(prev) == 'L' || (cls(prev) == 'U' && next_lower))
        flush();
    }
    current += static_cast<char>(std::tolower(c));
  }
  flush();
  if (out.empty()) {
    std::string whole;
    for (char c : identifier)
      whole += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(whole);
  }
  return out;
}

std::string serialize_graph(const CodeGraph &g) {
  ordered_json j;
  j["file_id"] = g.file_id;
  ordered_json nodes = ordered_json::array();
  for (const auto &n : g.nodes)
    nodes.push_back(ordered_json::array({category_name(n.category), n.label}));
  j["nodes"] = std::move(nodes);
  ordered_json edges = ordered_json::object();
  for (EdgeLabel label : all_edge_labels()) {
    auto it = g.edges.find(label);
    if (it == g.edges.end() || it->second.empty())
      continue;
    ordered_json list = ordered_json::array();
    for (const auto &[s, d] : it->second)
      list.push_back(ordered_json::array({s, d}));
    edges[std::string(edge_label_name(label))] = std::move(list);
  }
  j["edges"] = std::move(edges);
  ordered_json symbols = ordered_json::array();
  for (const auto &s : g.symbols) {
    ordered_json ann = s.annotation ? ordered_json(s.annotation->str()) : ordered_json(nullptr);
    symbols.push_back(ordered_json::array({s.node, symbol_kind_name(s.kind), s.name, ann}));
  }
  j["symbols"] = std::move(symbols);
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

CodeGraph deserialize_graph(std::string_view line, std::size_t line_no) {
  auto fail = [&](const std::string &msg) -> ParseError {
    return ParseError("line " + std::to_string(line_no) + ": " + msg, line_no);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception &e) {
    throw fail(std::string("malformed JSON: ") + e.what());
  }
  CodeGraph g;
  try {
    if (!j.is_object())
      throw fail("expected an object");
    g.file_id = j.at("file_id").get<std::string>();
    for (const auto &n : j.at("nodes")) {
      if (!n.is_array() || n.size() != 2)
        throw fail("node must be [category, label]");
      auto cat = parse_category(n[0].get<std::string>());
      if (!cat)
        throw fail("unknown node category '" + n[0].get<std::string>() + "'");
      g.nodes.push_back(Node{*cat, n[1].get<std::string>()});
    }
    for (const auto &[key, list] : j.at("edges").items()) {
      auto label = parse_edge_label(key);
      if (!label)
        throw fail("unknown edge label '" + key + "'");
      auto &out = g.edges[*label];
      for (const auto &e : list) {
        if (!e.is_array() || e.size() != 2)
          throw fail("edge must be [src, dst]");
        out.emplace_back(e[0].get<int>(), e[1].get<int>());
      }
    }
    for (const auto &s : j.at("symbols")) {
      if (!s.is_array() || s.size() != 4)
        throw fail("symbol must be [node, kind, name, annotation]");
      auto kind = parse_symbol_kind(s[1].get<std::string>());
      if (!kind)
        throw fail("unknown symbol kind '" + s[1].get<std::string>() + "'");
      SymbolInfo info{s[0].get<int>(), *kind, s[2].get<std::string>(), std::nullopt};
      if (!s[3].is_null()) {
        try {
          info.annotation = parse_type(s[3].get<std::string>());
        } catch (const ParseError &e) {
          throw fail(std::string("bad annotation: ") + e.what());
        }
      }
      g.symbols.push_back(std::move(info));
    }
  } catch (const nlohmann::json::exception &e) {
    throw fail(std::string("bad field: ") + e.what());
  }
  canonicalize_edges(g);
  try {
    g.validate();
  } catch (const DataError &e) {
    throw fail(e.what());
  }
  return g;
}

std::vector<CodeGraph> read_corpus(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open corpus '" + path + "'");
  std::vector<CodeGraph> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    out.push_back(deserialize_graph(line, line_no));
  }
  return out;
}

void write_corpus(const std::string &path, const std::vector<CodeGraph> &graphs) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write corpus '" + path + "'");
  for (const auto &g : graphs)
    out << serialize_graph(g) << '\n';
  if (!out)
    throw DataError("write failed for '" + path + "'");
}

} // namespace typespace
