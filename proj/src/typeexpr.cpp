#include "typespace/typeexpr.hpp"

#include "typespace/errors.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

namespace typespace {

std::size_t TypeExpr::depth() const {
  std::size_t d = 0;
  for (const auto &a : args)
    d = std::max(d, a.depth());
  return d + 1;
}

std::string TypeExpr::str() const {
  if (args.empty())
    return base;
  std::string out = base + "[";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i)
      out += ", ";
    out += args[i].str();
  }
  out += "]";
  return out;
}

TypeExpr top_type() { return TypeExpr("Any"); }

namespace {

bool is_name_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

std::string last_component(const std::string &dotted) {
  auto pos = dotted.rfind('.');
  return pos == std::string::npos ? dotted : dotted.substr(pos + 1);
}

class TypeParser {
public:
  TypeParser(std::string_view text, std::size_t base_offset)
      : text_(text), base_(base_offset) {}

  TypeExpr parse_all() {
    skip_ws();
    if (at_end())
      fail("empty type annotation");
    TypeExpr t = parse_union();
    skip_ws();
    if (!at_end())
      fail(std::string("unexpected '") + text_[pos_] + "'");
    return t;
  }

private:
  [[noreturn]] void fail(const std::string &msg) const {
    throw ParseError(msg + " at offset " + std::to_string(base_ + pos_),
                     base_ + pos_);
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }
  void expect(char c) {
    skip_ws();
    if (peek() != c)
      fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  TypeExpr parse_union() {
    std::vector<TypeExpr> alts;
    alts.push_back(parse_primary());
    skip_ws();
    while (peek() == '|') {
      ++pos_;
      alts.push_back(parse_primary());
      skip_ws();
    }
    if (alts.size() == 1)
      return std::move(alts.front());
    return TypeExpr("Union", std::move(alts));
  }

  TypeExpr parse_quoted() {
    char quote = text_[pos_];
    std::size_t start = ++pos_;
    while (!at_end() && text_[pos_] != quote)
      ++pos_;
    if (at_end())
      fail("unterminated string");
    std::string_view inner = text_.substr(start, pos_ - start);
    ++pos_;
    return TypeParser(inner, base_ + start).parse_all();
  }

  std::string parse_name() {
    skip_ws();
    if (text_.substr(pos_, 3) == "...") {
      pos_ += 3;
      return "...";
    }
    std::size_t start = pos_;
    while (!at_end()) {
      if (is_name_char(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      } else if (text_[pos_] == '.' && pos_ > start && pos_ + 1 < text_.size() &&
                 is_name_char(static_cast<unsigned char>(text_[pos_ + 1]))) {
        ++pos_;
      } else {
        break;
      }
    }
    if (start == pos_) {
      if (at_end())
        fail("expected type name");
      fail(std::string("unexpected '") + text_[pos_] + "'");
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  // Skips a balanced `[...]` group; the cursor is on the opening bracket.
  void skip_brackets() {
    std::size_t open = pos_;
    int depth = 0;
    while (!at_end()) {
      char c = text_[pos_];
      if (c == '\'' || c == '"') {
        char q = c;
        ++pos_;
        while (!at_end() && text_[pos_] != q)
          ++pos_;
        if (at_end())
          fail("unterminated string");
      } else if (c == '[') {
        ++depth;
      } else if (c == ']') {
        if (--depth == 0) {
          ++pos_;
          return;
        }
      }
      ++pos_;
    }
    pos_ = open;
    fail("unbalanced '['");
  }

  TypeExpr parse_primary() {
    skip_ws();
    if (peek() == '\'' || peek() == '"')
      return parse_quoted();
    TypeExpr t(parse_name());
    skip_ws();
    if (peek() != '[')
      return t;
    std::string simple = last_component(t.base);
    if (simple == "Callable" || simple == "Literal") {
      skip_brackets();
      return t;
    }
    std::size_t open = pos_;
    ++pos_;
    skip_ws();
    if (peek() == ']')
      fail("empty type argument list");
    while (true) {
      skip_ws();
      if (peek() == '(') {
        // Tuple[()] spells the empty tuple.
        ++pos_;
        expect(')');
      } else if (peek() == '[') {
        skip_brackets();
      } else if (at_end()) {
        pos_ = open;
        fail("unbalanced '['");
      } else {
        t.args.push_back(parse_union());
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        if (peek() == ']') {
          ++pos_;
          break;
        }
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        break;
      }
      if (at_end()) {
        pos_ = open;
        fail("unbalanced '['");
      }
      fail(std::string("unexpected '") + peek() + "'");
    }
    if (simple == "Annotated" && !t.args.empty())
      return t.args.front();
    return t;
  }

  std::string_view text_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

const std::map<std::string, std::string> &alias_table() {
  static const std::map<std::string, std::string> table = {
      {"list", "List"},           {"dict", "Dict"},
      {"set", "Set"},             {"frozenset", "FrozenSet"},
      {"tuple", "Tuple"},         {"type", "Type"},
      {"Text", "str"},            {"NoneType", "None"},
      {"AnyStr", "str"},
  };
  return table;
}

TypeExpr normalize_at(const TypeExpr &t, std::size_t level,
                      std::size_t max_depth) {
  if (level > max_depth)
    return top_type();
  std::string base = last_component(t.base);
  if (auto it = alias_table().find(base); it != alias_table().end())
    base = it->second;
  TypeExpr out(base);
  out.args.reserve(t.args.size());
  for (const auto &a : t.args)
    out.args.push_back(normalize_at(a, level + 1, max_depth));
  if (out.base == "Union") {
    std::stable_sort(out.args.begin(), out.args.end(),
                     [](const TypeExpr &a, const TypeExpr &b) {
                       return a.str() < b.str();
                     });
  }
  return out;
}

// Nominal facts for bare types.
std::vector<TypeExpr> nominal_supers(const TypeExpr &t) {
  static const std::map<std::string, std::string> tower = {
      {"bool", "int"}, {"int", "float"}, {"float", "complex"}};
  if (t.base == "Any")
    return {};
  if (t.base == "object")
    return {top_type()};
  if (auto it = tower.find(t.base); it != tower.end())
    return {TypeExpr(it->second)};
  return {TypeExpr("object")};
}

// Upper bound on the number of generalizations reachable from `t`.
double generalization_count(const TypeExpr &t) {
  if (t.is_top())
    return 1;
  if (t.args.empty())
    return t.base == "bool" ? 6 : 5;
  double prod = 1;
  for (const auto &a : t.args)
    prod *= generalization_count(a);
  return prod + 3;
}

constexpr double kFineLimit = 512;

// Direct supertypes under universal covariance.
std::vector<TypeExpr> direct_supers(const TypeExpr &t) {
  if (t.args.empty())
    return nominal_supers(t);
  std::vector<TypeExpr> out;
  bool all_any = std::all_of(t.args.begin(), t.args.end(),
                             [](const TypeExpr &a) { return a.is_top(); });
  if (all_any) {
    out.emplace_back(t.base);
    return out;
  }
  double count = 1;
  for (const auto &a : t.args)
    count *= generalization_count(a);
  if (count > kFineLimit && t.args.size() > 9) {
    out.emplace_back(t.base, std::vector<TypeExpr>(t.args.size(), top_type()));
    return out;
  }
  for (std::size_t i = 0; i < t.args.size(); ++i) {
    if (t.args[i].is_top())
      continue;
    std::vector<TypeExpr> steps;
    if (count > kFineLimit)
      steps.push_back(top_type());
    else
      steps = direct_supers(t.args[i]);
    for (auto &s : steps) {
      TypeExpr g = t;
      g.args[i] = std::move(s);
      out.push_back(std::move(g));
    }
  }
  return out;
}

} // namespace

TypeExpr parse_type(std::string_view text) {
  return TypeParser(text, 0).parse_all();
}

TypeExpr normalize_type(const TypeExpr &t, std::size_t max_depth) {
  if (max_depth < 1)
    throw ContractViolation("normalize_type: max_depth must be >= 1");
  return normalize_at(t, 1, max_depth);
}

TypeExpr erase_type_parameters(const TypeExpr &t) { return TypeExpr(t.base); }

TypeLattice::TypeLattice() { intern(top_type()); }

int TypeLattice::intern(const TypeExpr &t) {
  auto [it, inserted] = ids_.emplace(t, static_cast<int>(types_.size()));
  if (inserted) {
    types_.push_back(t);
    up_.emplace_back();
    parent_types_.emplace_back();
  }
  return it->second;
}

void TypeLattice::add_edge(int child, int parent) {
  auto &ups = up_[child];
  if (std::find(ups.begin(), ups.end(), parent) != ups.end())
    return;
  ups.push_back(parent);
  parent_types_[child].push_back(types_[parent]);
}

void TypeLattice::close() {
  const std::size_t n = types_.size();
  ancestors_.assign(n, {});
  std::vector<int> state(n, 0);
  std::function<void(int)> visit = [&](int id) {
    if (state[id] == 2)
      return;
    state[id] = 1;
    std::vector<bool> anc(n, false);
    anc[id] = true;
    for (int p : up_[id]) {
      visit(p);
      const auto &pa = ancestors_[p];
      for (std::size_t j = 0; j < n; ++j)
        if (pa[j])
          anc[j] = true;
    }
    ancestors_[id] = std::move(anc);
    state[id] = 2;
  };
  for (std::size_t i = 0; i < n; ++i)
    visit(static_cast<int>(i));
}

bool TypeLattice::contains(const TypeExpr &t) const { return ids_.count(t) > 0; }

bool TypeLattice::is_subtype(const TypeExpr &sub, const TypeExpr &super) const {
  auto a = ids_.find(sub);
  auto b = ids_.find(super);
  if (a == ids_.end() || b == ids_.end())
    return false;
  return ancestors_[a->second][b->second];
}

const std::vector<TypeExpr> &TypeLattice::parents(const TypeExpr &t) const {
  static const std::vector<TypeExpr> none;
  auto it = ids_.find(t);
  return it == ids_.end() ? none : parent_types_[it->second];
}

std::vector<std::pair<TypeExpr, TypeExpr>> TypeLattice::edges() const {
  std::vector<std::pair<TypeExpr, TypeExpr>> out;
  for (std::size_t i = 0; i < types_.size(); ++i)
    for (int p : up_[i])
      out.emplace_back(types_[i], types_[p]);
  return out;
}

TypeLattice build_type_lattice(const std::set<TypeExpr> &types) {
  TypeLattice lattice;
  std::vector<int> work;
  for (const auto &t : types) {
    std::size_t before = lattice.types_.size();
    int id = lattice.intern(t);
    if (lattice.types_.size() > before)
      work.push_back(id);
  }
  while (!work.empty()) {
    int id = work.back();
    work.pop_back();
    TypeExpr t = lattice.types_[id];
    for (const auto &s : direct_supers(t)) {
      std::size_t before = lattice.types_.size();
      int sid = lattice.intern(s);
      if (lattice.types_.size() > before)
        work.push_back(sid);
      lattice.add_edge(id, sid);
    }
  }
  lattice.close();
  return lattice;
}

bool check_neutral(const TypeExpr &pred, const TypeExpr &truth,
                   const TypeLattice &lattice) {
  if (pred.is_top())
    return false;
  if (pred == truth)
    return true;
  return lattice.is_subtype(truth, pred);
}

} // namespace typespace
