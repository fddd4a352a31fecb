#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace typespace {

/// Dense row-major matrix. Vectors are 1 x n rows, scalars are 1 x 1.
/// Zero-row matrices are allowed (an empty batch of rows).
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row(std::vector<double> values);

  std::size_t size() const { return data.size(); }
  double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double *row_ptr(std::size_t r) { return data.data() + r * cols; }
  const double *row_ptr(std::size_t r) const { return data.data() + r * cols; }
  double item() const;
  std::string shape_str() const;
  bool all_finite() const;

  friend bool operator==(const Tensor &, const Tensor &) = default;
};

/// Deterministic random source: mt19937_64 with a fixed integer-to-real
/// mapping, so sequences agree across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next();
  double uniform(); // [0, 1)
  double uniform(double lo, double hi);
  std::size_t below(std::size_t n); // [0, n)
  template <class T> void shuffle(std::vector<T> &v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[below(i)]);
  }

private:
  std::mt19937_64 engine_;
};

/// Named learnable tensors with a gradient buffer of the same shape each.
class ParamStore {
public:
  int add(const std::string &name, Tensor init);
  bool has(const std::string &name) const { return ids_.count(name) > 0; }
  int id(const std::string &name) const;
  const std::string &name(int id) const { return names_[id]; }
  std::size_t size() const { return names_.size(); }

  Tensor &value(int id) { return values_[id]; }
  const Tensor &value(int id) const { return values_[id]; }
  Tensor &value(const std::string &n) { return values_[id(n)]; }
  const Tensor &value(const std::string &n) const { return values_[id(n)]; }
  Tensor &grad(int id) { return grads_[id]; }
  const Tensor &grad(int id) const { return grads_[id]; }

  void zero_grad();
  double grad_norm() const;
  /// Scales all gradients so their joint L2 norm is at most `max_norm`.
  void clip_grad(double max_norm);
  /// Returns a copy without the named tensors.
  ParamStore without(const std::vector<std::string> &names) const;
  /// Rounds every value to the nearest 32-bit float.
  void round_to_float();

  friend bool operator==(const ParamStore &a, const ParamStore &b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::map<std::string, int> ids_;
};

/// Fills `t` with uniform(-scale, scale) draws.
void init_uniform(Tensor &t, Rng &rng, double scale = 0.1);

} // namespace typespace
