#include "typespace/typemap.hpp"

#include "binio.hpp"
#include "typespace/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

namespace typespace {

std::string_view provenance_name(Provenance p) {
  switch (p) {
  case Provenance::Corpus:
    return "corpus";
  case Provenance::Accepted:
    return "accepted";
  case Provenance::Manual:
    return "manual";
  }
  return "?";
}

std::optional<Provenance> parse_provenance(std::string_view name) {
  for (Provenance p : {Provenance::Corpus, Provenance::Accepted, Provenance::Manual})
    if (provenance_name(p) == name)
      return p;
  return std::nullopt;
}

namespace {

bool closer(const Neighbour &a, const Neighbour &b) {
  return a.distance != b.distance ? a.distance < b.distance : a.marker < b.marker;
}

// Keeps the k best neighbours seen so far.
class TopK {
public:
  explicit TopK(std::size_t k) : k_(k) {}
  void offer(Neighbour n) {
    if (heap_.size() < k_) {
      heap_.push_back(n);
      std::push_heap(heap_.begin(), heap_.end(), closer);
    } else if (k_ > 0 && closer(n, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), closer);
      heap_.back() = n;
      std::push_heap(heap_.begin(), heap_.end(), closer);
    }
  }
  std::vector<Neighbour> take() {
    std::sort(heap_.begin(), heap_.end(), closer);
    return std::move(heap_);
  }

private:
  std::size_t k_;
  std::vector<Neighbour> heap_;
};

constexpr std::size_t kTrees = 8;
constexpr std::size_t kLeafSize = 32;

} // namespace

struct TypeMap::Forest {
  struct Split {
    std::vector<double> normal;
    double offset = 0;
    int left = -1, right = -1;  // child nodes; -1 for a leaf
    std::vector<std::size_t> items;
  };
  std::vector<std::vector<Split>> trees;

  static double side(const Split &s, const double *x) {
    double v = -s.offset;
    for (std::size_t k = 0; k < s.normal.size(); ++k)
      v += s.normal[k] * x[k];
    return v;
  }
};

TypeMap::TypeMap(std::size_t dim) : dim_(dim) {}
TypeMap::TypeMap(const TypeMap &other) : dim_(other.dim_), markers_(other.markers_) { reindex(); }
TypeMap &TypeMap::operator=(const TypeMap &other) {
  if (this != &other) {
    dim_ = other.dim_;
    markers_ = other.markers_;
    reindex();
  }
  return *this;
}
TypeMap::TypeMap(TypeMap &&) noexcept = default;
TypeMap &TypeMap::operator=(TypeMap &&) noexcept = default;
TypeMap::~TypeMap() = default;

void TypeMap::add(const std::vector<double> &vec, TypeExpr type, Provenance provenance) {
  if (vec.size() != dim_)
    throw ContractViolation("type map: marker of length " + std::to_string(vec.size()) +
                            " in a map of dimension " + std::to_string(dim_));
  add(vec.data(), std::move(type), provenance);
}

void TypeMap::add(const double *vec, TypeExpr type, Provenance provenance) {
  if (type.is_top())
    throw ContractViolation("type map: markers of type Any are not allowed");
  Marker m;
  m.vec.assign(vec, vec + dim_);
  m.type = std::move(type);
  m.provenance = provenance;
  markers_.push_back(std::move(m));
  std::size_t pending = markers_.size() - indexed_count_;
  if (markers_.size() > kExactLimit && pending > std::max<std::size_t>(1024, indexed_count_ / 4))
    reindex();
}

double TypeMap::distance(const double *query, std::size_t i) const {
  const float *v = markers_[i].vec.data();
  double d = 0;
  for (std::size_t k = 0; k < dim_; ++k)
    d += std::abs(query[k] - static_cast<double>(v[k]));
  return d;
}

void TypeMap::reindex() {
  forest_.reset();
  indexed_count_ = 0;
  if (markers_.size() <= kExactLimit)
    return;
  auto forest = std::make_unique<Forest>();
  Rng rng(0x5eed0000u + markers_.size());
  std::vector<double> point(dim_);
  auto coords = [&](std::size_t i) {
    for (std::size_t k = 0; k < dim_; ++k)
      point[k] = markers_[i].vec[k];
    return point.data();
  };
  for (std::size_t t = 0; t < kTrees; ++t) {
    std::vector<Forest::Split> nodes;
    std::vector<std::size_t> all(markers_.size());
    for (std::size_t i = 0; i < all.size(); ++i)
      all[i] = i;
    // Explicit stack of (node, items) to build.
    std::vector<std::pair<int, std::vector<std::size_t>>> work;
    nodes.emplace_back();
    work.emplace_back(0, std::move(all));
    while (!work.empty()) {
      auto [id, items] = std::move(work.back());
      work.pop_back();
      if (items.size() <= kLeafSize) {
        nodes[id].items = std::move(items);
        continue;
      }
      // Direction through two random markers; split at the median.
      std::size_t a = items[rng.below(items.size())];
      std::size_t b = items[rng.below(items.size())];
      std::vector<double> normal(dim_);
      for (std::size_t k = 0; k < dim_; ++k)
        normal[k] = static_cast<double>(markers_[a].vec[k]) - markers_[b].vec[k] +
                    rng.uniform(-1e-3, 1e-3);
      std::vector<std::pair<double, std::size_t>> proj;
      for (std::size_t i : items) {
        const double *x = coords(i);
        double v = 0;
        for (std::size_t k = 0; k < dim_; ++k)
          v += normal[k] * x[k];
        proj.emplace_back(v, i);
      }
      std::size_t mid = proj.size() / 2;
      std::nth_element(proj.begin(), proj.begin() + static_cast<std::ptrdiff_t>(mid), proj.end());
      double offset = proj[mid].first;
      std::vector<std::size_t> lo, hi;
      for (auto &[v, i] : proj)
        (v < offset ? lo : hi).push_back(i);
      if (lo.empty() || hi.empty()) {
        nodes[id].items = std::move(items);
        continue;
      }
      int l = static_cast<int>(nodes.size());
      nodes.emplace_back();
      int r = static_cast<int>(nodes.size());
      nodes.emplace_back();
      nodes[id].normal = std::move(normal);
      nodes[id].offset = offset;
      nodes[id].left = l;
      nodes[id].right = r;
      work.emplace_back(r, std::move(hi));
      work.emplace_back(l, std::move(lo));
    }
    forest->trees.push_back(std::move(nodes));
  }
  forest_ = std::move(forest);
  indexed_count_ = markers_.size();
}

std::vector<Neighbour> TypeMap::nearest_exact(const double *query, std::size_t k) const {
  TopK top(k);
  for (std::size_t i = 0; i < markers_.size(); ++i)
    top.offer({i, distance(query, i)});
  return top.take();
}

std::vector<Neighbour> TypeMap::nearest(const double *query, std::size_t k) const {
  if (!forest_)
    return nearest_exact(query, k);
  const std::size_t budget = std::max<std::size_t>(k * kTrees * 4, 16 * kLeafSize);
  std::vector<bool> seen(markers_.size(), false);
  TopK top(k);
  std::size_t visited = 0;
  // Best-first descent across all trees, ordered by distance to the split.
  using Entry = std::tuple<double, std::size_t, int>; // (-priority, tree, node)
  std::priority_queue<Entry> frontier;
  for (std::size_t t = 0; t < forest_->trees.size(); ++t)
    frontier.emplace(0.0, t, 0);
  while (!frontier.empty() && visited < budget) {
    auto [prio, t, id] = frontier.top();
    frontier.pop();
    const auto &node = forest_->trees[t][id];
    if (node.left < 0) {
      for (std::size_t i : node.items) {
        if (seen[i])
          continue;
        seen[i] = true;
        ++visited;
        top.offer({i, distance(query, i)});
      }
      continue;
    }
    double s = Forest::side(node, query);
    int near = s < 0 ? node.left : node.right;
    int far = s < 0 ? node.right : node.left;
    frontier.emplace(prio, t, near);
    frontier.emplace(std::min(prio, -std::abs(s)), t, far);
  }
  for (std::size_t i = indexed_count_; i < markers_.size(); ++i)
    top.offer({i, distance(query, i)});
  return top.take();
}

std::vector<Neighbour> TypeMap::nearest(const std::vector<double> &query, std::size_t k) const {
  if (query.size() != dim_)
    throw ContractViolation("type map: query of length " + std::to_string(query.size()) +
                            " in a map of dimension " + std::to_string(dim_));
  return nearest(query.data(), k);
}

std::vector<Candidate> weigh_neighbours(const TypeMap &map, const std::vector<Neighbour> &neighbours,
                                        double p) {
  std::vector<Candidate> out;
  std::map<TypeExpr, std::size_t> slot;
  double z = 0;
  for (const auto &n : neighbours) {
    double w = p == 0 ? 1.0 : std::pow(std::max(n.distance, 1e-9), -p);
    z += w;
    const TypeExpr &t = map.marker(n.marker).type;
    auto [it, fresh] = slot.emplace(t, out.size());
    if (fresh)
      out.push_back({t, 0.0});
    out[it->second].probability += w;
  }
  for (auto &c : out)
    c.probability /= z;
  std::stable_sort(out.begin(), out.end(), [](const Candidate &a, const Candidate &b) {
    return a.probability > b.probability;
  });
  return out;
}

std::vector<Candidate> knn_predict(const TypeMap &map, const double *query,
                                   const PredictionConfig &config) {
  if (map.empty())
    throw NotFound("type map is empty; no prediction possible");
  if (config.k == 0)
    throw ContractViolation("knn_predict: k must be at least 1");
  auto out = weigh_neighbours(map, map.nearest(query, config.k), config.p);
  if (config.max_candidates > 0 && out.size() > config.max_candidates)
    out.resize(config.max_candidates);
  return out;
}

std::vector<Candidate> knn_predict(const TypeMap &map, const std::vector<double> &query,
                                   const PredictionConfig &config) {
  if (query.size() != map.dim())
    throw ContractViolation("knn_predict: query of length " + std::to_string(query.size()) +
                            " in a map of dimension " + std::to_string(map.dim()));
  return knn_predict(map, query.data(), config);
}

namespace {
constexpr std::string_view kMagic = "TSMP";
constexpr std::uint32_t kVersion = 1;
} // namespace

std::string encode_map(const TypeMap &map) {
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(map.dim()));
  w.u32(static_cast<std::uint32_t>(map.size()));
  for (const auto &m : map.markers()) {
    for (float f : m.vec)
      w.f32(f);
    w.str(m.type.str());
    w.u8(static_cast<std::uint8_t>(m.provenance));
  }
  return w.data();
}

TypeMap decode_map(std::string_view bytes) {
  binio::Reader r(bytes, "type map");
  if (r.bytes(4) != kMagic)
    r.fail("bad magic number");
  std::uint32_t version = r.u32();
  if (version != kVersion)
    r.fail("unsupported version " + std::to_string(version));
  std::size_t dim = r.u32();
  std::size_t count = r.u32();
  std::vector<Marker> markers;
  for (std::size_t i = 0; i < count; ++i) {
    Marker m;
    m.vec.resize(dim);
    for (auto &f : m.vec)
      f = r.f32();
    std::string type = r.str();
    try {
      m.type = parse_type(type);
    } catch (const ParseError &e) {
      r.fail("bad type '" + type + "': " + e.what());
    }
    if (m.type.is_top())
      r.fail("marker of type Any");
    std::uint8_t prov = r.u8();
    if (prov > 2)
      r.fail("bad provenance " + std::to_string(prov));
    m.provenance = static_cast<Provenance>(prov);
    markers.push_back(std::move(m));
  }
  if (!r.at_end())
    r.fail("trailing data");
  TypeMap map(dim);
  std::vector<double> v(dim);
  for (auto &m : markers) {
    std::copy(m.vec.begin(), m.vec.end(), v.begin());
    map.add(v, std::move(m.type), m.provenance);
  }
  return map;
}

void save_map(const std::string &path, const TypeMap &map) {
  binio::write_file(path, encode_map(map));
}

TypeMap load_map(const std::string &path) { return decode_map(binio::read_file(path)); }

} // namespace typespace
