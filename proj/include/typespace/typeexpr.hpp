#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace typespace {

/// A type annotation in bracket notation: a base name plus ordered type
/// arguments. `List[Dict[str, int]]` is `{List, [{Dict, [{str}, {int}]}]}`.
struct TypeExpr {
  std::string base;
  std::vector<TypeExpr> args;

  TypeExpr() = default;
  explicit TypeExpr(std::string b, std::vector<TypeExpr> a = {})
      : base(std::move(b)), args(std::move(a)) {}

  bool is_top() const { return base == "Any" && args.empty(); }
  std::size_t depth() const;
  std::string str() const;

  friend bool operator==(const TypeExpr &, const TypeExpr &) = default;
  friend auto operator<=>(const TypeExpr &a, const TypeExpr &b) {
    if (auto c = a.base <=> b.base; c != 0)
      return c;
    return a.args <=> b.args;
  }
};

/// The distinguished top type.
TypeExpr top_type();

/// Parses an annotation such as `Dict[str, Any]`, `'Foo'`, `typing.List[int]`
/// or `int | None`. Quoted forward references are unquoted; `A | B` becomes
/// `Union[A, B]`. Arguments of `Callable` and `Literal` are discarded.
/// Throws ParseError naming the byte offset of the problem.
TypeExpr parse_type(std::string_view text);

/// Canonicalizes aliases (typing.List -> List, list -> List, ...), replaces
/// every sub-expression nested deeper than `max_depth` with Any and sorts the
/// arguments of Union.
TypeExpr normalize_type(const TypeExpr &t, std::size_t max_depth = 2);

/// Drops all type parameters: List[int] -> List.
TypeExpr erase_type_parameters(const TypeExpr &t);

/// Subtyping hierarchy over a finite set of normalized types, closed under
/// argument-wise generalization (universal covariance) and a small table of
/// nominal facts (bool :< int :< float :< complex :< object :< Any).
class TypeLattice {
public:
  TypeLattice();

  bool contains(const TypeExpr &t) const;
  /// Reflexive-transitive subtype query; false when either type is absent.
  bool is_subtype(const TypeExpr &sub, const TypeExpr &super) const;
  /// Direct (covering) supertypes of a node.
  const std::vector<TypeExpr> &parents(const TypeExpr &t) const;

  std::size_t size() const { return ids_.size(); }
  std::vector<TypeExpr> nodes() const { return types_; }
  std::vector<std::pair<TypeExpr, TypeExpr>> edges() const;
  const TypeExpr &top() const { return types_.front(); }

private:
  friend TypeLattice build_type_lattice(const std::set<TypeExpr> &types);
  int intern(const TypeExpr &t);
  void add_edge(int child, int parent);
  void close();

  std::vector<TypeExpr> types_;
  std::map<TypeExpr, int> ids_;
  std::vector<std::vector<int>> up_;
  std::vector<std::vector<TypeExpr>> parent_types_;
  // ancestors_[i][j]: types_[i] :< types_[j]
  std::vector<std::vector<bool>> ancestors_;
};

TypeLattice build_type_lattice(const std::set<TypeExpr> &types);

/// `truth :< pred` and `pred` is not the top type. Exact equality is always
/// neutral (unless it is Any).
bool check_neutral(const TypeExpr &pred, const TypeExpr &truth,
                   const TypeLattice &lattice);

} // namespace typespace
