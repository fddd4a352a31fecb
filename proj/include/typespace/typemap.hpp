#pragma once

#include "typespace/tensor.hpp"
#include "typespace/typeexpr.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace typespace {

enum class Provenance : std::uint8_t { Corpus = 0, Accepted = 1, Manual = 2 };

std::string_view provenance_name(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view name);

struct Marker {
  std::vector<float> vec;
  TypeExpr type;
  Provenance provenance = Provenance::Corpus;
  friend bool operator==(const Marker &, const Marker &) = default;
};

struct Neighbour {
  std::size_t marker; // insertion index
  double distance;    // L1
  friend bool operator==(const Neighbour &, const Neighbour &) = default;
};

struct Candidate {
  TypeExpr type;
  double probability;
};

struct PredictionConfig {
  std::size_t k = 10;
  double p = 2.0;
  std::size_t max_candidates = 10;
};

/// Markers in the type space with an L1 nearest-neighbour index.
///
/// Up to kExactLimit markers every query is an exact scan. Above that,
/// markers are held in a forest of random-projection trees (rebuilt as the
/// map grows) and candidates from the visited leaves are ranked exactly, so
/// results can miss true neighbours.
class TypeMap {
public:
  static constexpr std::size_t kExactLimit = 4096;

  explicit TypeMap(std::size_t dim = 0);
  TypeMap(const TypeMap &other);
  TypeMap &operator=(const TypeMap &other);
  TypeMap(TypeMap &&) noexcept;
  TypeMap &operator=(TypeMap &&) noexcept;
  ~TypeMap();

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return markers_.size(); }
  bool empty() const { return markers_.empty(); }
  const std::vector<Marker> &markers() const { return markers_; }
  const Marker &marker(std::size_t i) const { return markers_[i]; }

  /// Appends a marker. Throws ContractViolation when the vector's length is
  /// not dim() or the type is Any.
  void add(const std::vector<double> &vec, TypeExpr type, Provenance provenance);
  void add(const double *vec, TypeExpr type, Provenance provenance);

  /// The k nearest markers by L1 distance, nearest first; equal distances
  /// go to the earlier marker.
  std::vector<Neighbour> nearest(const double *query, std::size_t k) const;
  std::vector<Neighbour> nearest(const std::vector<double> &query, std::size_t k) const;
  /// Linear scan over all markers, whatever the map size.
  std::vector<Neighbour> nearest_exact(const double *query, std::size_t k) const;

  bool indexed() const { return forest_ != nullptr; }

  friend bool operator==(const TypeMap &a, const TypeMap &b) {
    return a.dim_ == b.dim_ && a.markers_ == b.markers_;
  }

private:
  struct Forest;
  double distance(const double *query, std::size_t i) const;
  void reindex();

  std::size_t dim_;
  std::vector<Marker> markers_;
  std::unique_ptr<Forest> forest_;
  std::size_t indexed_count_ = 0; // markers covered by forest_; the rest are scanned
};

/// Probability of each type among `neighbours`:
///   P(t) = sum over neighbours i of type t of max(d_i, 1e-9)^-p, normalized.
/// Ranked by probability; ties keep the order of first appearance.
std::vector<Candidate> weigh_neighbours(const TypeMap &map, const std::vector<Neighbour> &neighbours,
                                        double p);

/// Throws NotFound on an empty map.
std::vector<Candidate> knn_predict(const TypeMap &map, const double *query,
                                   const PredictionConfig &config);
std::vector<Candidate> knn_predict(const TypeMap &map, const std::vector<double> &query,
                                   const PredictionConfig &config);

/// "TSMP", u32 version, u32 D, u32 count, then per marker D 32-bit floats,
/// the type string and a provenance byte.
std::string encode_map(const TypeMap &map);
TypeMap decode_map(std::string_view bytes);
void save_map(const std::string &path, const TypeMap &map);
TypeMap load_map(const std::string &path);

} // namespace typespace
