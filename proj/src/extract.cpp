#include "typespace/code_graph.hpp"
#include "typespace/errors.hpp"
#include "typespace/pyparse.hpp"

#include <algorithm>
#include <deque>

namespace typespace {

namespace {

using py::NameContext;
using py::ParsedModule;
using py::ScopeKind;
using py::SyntaxRef;

struct SymbolRec {
  std::string name;
  SymbolKind kind = SymbolKind::Variable;
  std::vector<std::pair<int, int>> occurrences; // (position key, graph node)
  std::optional<std::string> annotation;
};

int kind_rank(SymbolKind k) {
  switch (k) {
  case SymbolKind::Parameter:
    return 2;
  case SymbolKind::Return:
    return 1;
  default:
    return 0;
  }
}

bool contains(const std::vector<std::string> &v, const std::string &x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

class Builder {
public:
  Builder(const ParsedModule &m, const ExtractOptions &options, std::string file_id)
      : m_(m), opt_(options) {
    out_.graph.file_id = std::move(file_id);
  }

  Extraction run() {
    collect_bindings();
    resolve_names();
    resolve_attributes();
    layout_nodes();
    collect_annotations();
    collect_sites();
    build_edges();
    canonicalize_edges(out_.graph);
    return std::move(out_);
  }

private:
  // ---- symbol table ----
  void collect_bindings() {
    bound_.assign(m_.scopes.size(), {});
    for (const auto &u : m_.names)
      if (py::is_binding(u.ctx))
        bound_[u.scope].insert(u.name);
  }

  int resolve_scope(int scope, const std::string &name) const {
    int s = scope;
    bool first = true;
    while (s >= 0) {
      const auto &sc = m_.scopes[s];
      if (contains(sc.globals, name))
        return 0;
      if (contains(sc.nonlocals, name)) {
        s = sc.parent;
        first = false;
        continue;
      }
      bool visible = first || sc.kind != ScopeKind::Class;
      if (visible && bound_[s].count(name))
        return s;
      s = sc.parent;
      first = false;
    }
    return 0;
  }

  int symbol_for(int scope, const std::string &key, const std::string &display) {
    auto [it, inserted] = sym_ids_.emplace(std::make_pair(scope, key), static_cast<int>(syms_.size()));
    if (inserted)
      syms_.push_back(SymbolRec{display, SymbolKind::Variable, {}, std::nullopt});
    return it->second;
  }

  void promote(int sym, SymbolKind kind) {
    if (kind_rank(kind) > kind_rank(syms_[sym].kind))
      syms_[sym].kind = kind;
  }

  void resolve_names() {
    name_sym_.resize(m_.names.size());
    for (std::size_t i = 0; i < m_.names.size(); ++i) {
      const auto &u = m_.names[i];
      int scope = resolve_scope(u.scope, u.name);
      int sym = symbol_for(scope, u.name, u.name);
      if (u.ctx == NameContext::Param)
        promote(sym, SymbolKind::Parameter);
      else if (u.ctx == NameContext::FunctionName)
        promote(sym, SymbolKind::Return);
      name_sym_[i] = sym;
    }
  }

  // The class whose instance `base` refers to when `base` is the first
  // parameter of a method, else -1.
  int receiver_class(const py::AttributeUse &a) const {
    const auto &b = m_.names[a.base];
    int s = resolve_scope(b.scope, b.name);
    const auto &sc = m_.scopes[s];
    if (sc.kind != ScopeKind::Function || sc.first_param < 0)
      return -1;
    if (m_.names[sc.first_param].name != b.name)
      return -1;
    if (sc.parent < 0 || m_.scopes[sc.parent].kind != ScopeKind::Class)
      return -1;
    return sc.parent;
  }

  void resolve_attributes() {
    attr_sym_.assign(m_.attributes.size(), -1);
    std::vector<int> cls(m_.attributes.size());
    std::map<int, std::set<std::string>> stored;
    for (std::size_t i = 0; i < m_.attributes.size(); ++i) {
      cls[i] = receiver_class(m_.attributes[i]);
      if (cls[i] >= 0 && m_.attributes[i].store)
        stored[cls[i]].insert(m_.attributes[i].attribute);
    }
    for (std::size_t i = 0; i < m_.attributes.size(); ++i) {
      int c = cls[i];
      if (c < 0)
        continue;
      const auto &a = m_.attributes[i];
      if (bound_[c].count(a.attribute)) {
        attr_sym_[i] = symbol_for(c, a.attribute, a.attribute);
      } else if (stored[c].count(a.attribute)) {
        const auto &base = m_.names[a.base].name;
        attr_sym_[i] = symbol_for(c, "." + a.attribute, base + "." + a.attribute);
      }
    }
  }

  // ---- nodes ----
  int add_node(NodeCategory c, std::string label) {
    out_.graph.nodes.push_back(Node{c, std::move(label)});
    return static_cast<int>(out_.graph.nodes.size()) - 1;
  }

  int ref_node(SyntaxRef r) const {
    return r.kind == SyntaxRef::Kind::Token ? token_node_[r.index] : syntax_node_[r.index];
  }

  // Position used to order occurrences: the token index of the name, or of
  // the attribute name for `base.attr`.
  int attribute_position(const py::AttributeUse &a) const {
    return m_.nodes[a.node].children.back().index;
  }

  void layout_nodes() {
    syntax_node_.assign(m_.nodes.size(), -1);
    std::vector<int> stack{0};
    while (!stack.empty()) {
      int n = stack.back();
      stack.pop_back();
      syntax_node_[n] = add_node(NodeCategory::Nonterminal, m_.nodes[n].kind);
      const auto &ch = m_.nodes[n].children;
      for (auto it = ch.rbegin(); it != ch.rend(); ++it)
        if (it->kind == SyntaxRef::Kind::Node)
          stack.push_back(it->index);
    }
    token_node_.resize(m_.tokens.size());
    for (std::size_t i = 0; i < m_.tokens.size(); ++i)
      token_node_[i] = add_node(NodeCategory::Token, m_.tokens[i].text);

    for (std::size_t i = 0; i < m_.names.size(); ++i) {
      int tok = m_.names[i].token;
      syms_[name_sym_[i]].occurrences.emplace_back(tok, token_node_[tok]);
    }
    for (std::size_t i = 0; i < m_.attributes.size(); ++i)
      if (attr_sym_[i] >= 0)
        syms_[attr_sym_[i]].occurrences.emplace_back(attribute_position(m_.attributes[i]),
                                                     syntax_node_[m_.attributes[i].node]);
    symbol_node_.resize(syms_.size());
    for (std::size_t s = 0; s < syms_.size(); ++s) {
      symbol_node_[s] = add_node(NodeCategory::Symbol, syms_[s].name);
      std::sort(syms_[s].occurrences.begin(), syms_[s].occurrences.end());
    }

    std::map<std::string, int> vocab;
    for (std::size_t i = 0; i < m_.tokens.size(); ++i) {
      const auto &t = m_.tokens[i];
      if (t.kind != py::TokenKind::Name || py::is_keyword(t.text))
        continue;
      for (auto &st : subtokenize(t.text)) {
        auto it = vocab.find(st);
        if (it == vocab.end())
          it = vocab.emplace(st, add_node(NodeCategory::Vocabulary, st)).first;
        subtoken_edges_.emplace_back(token_node_[i], it->second);
      }
    }
    if (out_.graph.nodes.size() > opt_.max_nodes)
      throw DataError("graph has " + std::to_string(out_.graph.nodes.size()) +
                      " nodes, over the cap of " + std::to_string(opt_.max_nodes));
  }

  // ---- annotations ----
  int annotation_symbol(py::AnnotationTarget target, int use) const {
    if (target == py::AnnotationTarget::Attribute)
      return attr_sym_[use];
    return name_sym_[use];
  }

  void collect_annotations() {
    for (const auto &a : m_.annotations) {
      int sym = annotation_symbol(a.target, a.use);
      if (sym >= 0 && !syms_[sym].annotation)
        syms_[sym].annotation = a.text;
    }
    for (std::size_t s = 0; s < syms_.size(); ++s) {
      SymbolInfo info{symbol_node_[s], syms_[s].kind, syms_[s].name, std::nullopt};
      if (syms_[s].annotation) {
        try {
          TypeExpr t = normalize_type(parse_type(*syms_[s].annotation), opt_.max_type_depth);
          if (!t.is_top() && !(t.base == "None" && t.args.empty()))
            info.annotation = std::move(t);
        } catch (const ParseError &e) {
          out_.diagnostics.push_back("annotation of '" + syms_[s].name + "' dropped: " +
                                     e.what());
        }
      }
      out_.graph.symbols.push_back(std::move(info));
    }
  }

  void collect_sites() {
    std::map<int, SymbolSite> chosen;
    for (const auto &site : m_.sites) {
      int sym = annotation_symbol(site.target, site.use);
      if (sym < 0)
        continue;
      SymbolSite s{sym, site.target == py::AnnotationTarget::Return, site.existing,
                   site.insert_at, site.begin, site.end};
      auto it = chosen.find(sym);
      if (it == chosen.end())
        chosen.emplace(sym, s);
      else if (s.existing && !it->second.existing)
        it->second = s;
    }
    for (auto &[sym, s] : chosen)
      out_.sites.push_back(s);
  }

  // ---- edges ----
  bool active(EdgeLabel l) const { return !opt_.disabled.count(l); }

  void add_edge(EdgeLabel l, int src, int dst) {
    if (active(l))
      out_.graph.edges[l].emplace_back(src, dst);
  }

  // (position, graph node, symbol) of an occurrence, or symbol -1.
  struct Occ {
    int position;
    int node;
    int symbol;
  };

  Occ occurrence(const py::Occurrence &o) const {
    if (o.attribute) {
      const auto &a = m_.attributes[o.use];
      return {attribute_position(a), syntax_node_[a.node], attr_sym_[o.use]};
    }
    int tok = m_.names[o.use].token;
    return {tok, token_node_[tok], name_sym_[o.use]};
  }

  void build_may_use() {
    for (const auto &flow : m_.flows) {
      std::vector<std::vector<Occ>> blocks(flow.blocks.size());
      for (std::size_t b = 0; b < flow.blocks.size(); ++b) {
        for (const auto &o : flow.blocks[b].items) {
          Occ occ = occurrence(o);
          if (occ.symbol >= 0)
            blocks[b].push_back(occ);
        }
        std::sort(blocks[b].begin(), blocks[b].end(),
                  [](const Occ &x, const Occ &y) { return x.position < y.position; });
      }
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t j = 0; j < blocks[b].size(); ++j) {
          const Occ &from = blocks[b][j];
          bool found = false;
          for (std::size_t k = j + 1; k < blocks[b].size(); ++k) {
            if (blocks[b][k].symbol == from.symbol) {
              add_edge(EdgeLabel::NextMayUse, from.node, blocks[b][k].node);
              found = true;
              break;
            }
          }
          if (found)
            continue;
          std::vector<bool> seen(blocks.size(), false);
          std::deque<int> queue;
          for (int s : flow.blocks[b].successors)
            if (!seen[s]) {
              seen[s] = true;
              queue.push_back(s);
            }
          while (!queue.empty()) {
            int c = queue.front();
            queue.pop_front();
            auto hit = std::find_if(blocks[c].begin(), blocks[c].end(),
                                    [&](const Occ &o) { return o.symbol == from.symbol; });
            if (hit != blocks[c].end()) {
              add_edge(EdgeLabel::NextMayUse, from.node, hit->node);
              continue;
            }
            for (int s : flow.blocks[c].successors)
              if (!seen[s]) {
                seen[s] = true;
                queue.push_back(s);
              }
          }
        }
      }
    }
  }

  void build_edges() {
    for (std::size_t n = 0; n < m_.nodes.size(); ++n)
      for (auto r : m_.nodes[n].children)
        add_edge(EdgeLabel::Child, syntax_node_[n], ref_node(r));
    for (std::size_t i = 0; i + 1 < token_node_.size(); ++i)
      add_edge(EdgeLabel::NextToken, token_node_[i], token_node_[i + 1]);
    for (auto [tok, voc] : subtoken_edges_)
      add_edge(EdgeLabel::SubtokenOf, tok, voc);
    for (std::size_t s = 0; s < syms_.size(); ++s) {
      const auto &occ = syms_[s].occurrences;
      for (std::size_t i = 0; i < occ.size(); ++i) {
        add_edge(EdgeLabel::OccurrenceOf, occ[i].second, symbol_node_[s]);
        if (i + 1 < occ.size())
          add_edge(EdgeLabel::NextLexicalUse, occ[i].second, occ[i + 1].second);
      }
    }
    if (active(EdgeLabel::NextMayUse))
      build_may_use();
    for (const auto &[value, target] : m_.assignments)
      add_edge(EdgeLabel::AssignedFrom, ref_node(value), ref_node(target));
    for (const auto &[ret, def] : m_.returns)
      add_edge(EdgeLabel::ReturnsTo, syntax_node_[ret], syntax_node_[def]);
  }

  const ParsedModule &m_;
  const ExtractOptions &opt_;
  Extraction out_;
  std::vector<std::set<std::string>> bound_;
  std::map<std::pair<int, std::string>, int> sym_ids_;
  std::vector<SymbolRec> syms_;
  std::vector<int> name_sym_;
  std::vector<int> attr_sym_;
  std::vector<int> syntax_node_;
  std::vector<int> token_node_;
  std::vector<int> symbol_node_;
  std::vector<std::pair<int, int>> subtoken_edges_;
};

} // namespace

Extraction extract(std::string_view source, std::string file_id,
                   const ExtractOptions &options) {
  ParsedModule m = py::parse_module(source);
  return Builder(m, options, std::move(file_id)).run();
}

CodeGraph extract_graph(std::string_view source, std::string file_id,
                        const ExtractOptions &options) {
  return extract(source, std::move(file_id), options).graph;
}

} // namespace typespace
