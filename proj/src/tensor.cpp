#include "typespace/tensor.hpp"

#include "typespace/errors.hpp"

#include <algorithm>
#include <cmath>

namespace typespace {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c)
    throw ContractViolation("tensor: " + std::to_string(data.size()) +
                            " values for shape " + std::to_string(r) + "x" +
                            std::to_string(c));
}

Tensor Tensor::row(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor(1, n, std::move(values));
}

double Tensor::item() const {
  if (rows != 1 || cols != 1)
    throw ContractViolation("item: expected 1x1, got " + shape_str());
  return data[0];
}

std::string Tensor::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v))
      return false;
  return true;
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t Rng::below(std::size_t n) {
  if (n == 0)
    throw ContractViolation("Rng::below(0)");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

int ParamStore::add(const std::string &name, Tensor init) {
  if (ids_.count(name))
    throw ContractViolation("duplicate parameter '" + name + "'");
  int id = static_cast<int>(names_.size());
  names_.push_back(name);
  grads_.emplace_back(init.rows, init.cols);
  values_.push_back(std::move(init));
  ids_.emplace(name, id);
  return id;
}

int ParamStore::id(const std::string &name) const {
  auto it = ids_.find(name);
  if (it == ids_.end())
    throw ContractViolation("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto &g : grads_)
    std::fill(g.data.begin(), g.data.end(), 0.0);
}

double ParamStore::grad_norm() const {
  double s = 0;
  for (const auto &g : grads_)
    for (double v : g.data)
      s += v * v;
  return std::sqrt(s);
}

void ParamStore::clip_grad(double max_norm) {
  double n = grad_norm();
  if (n <= max_norm || n == 0)
    return;
  double f = max_norm / n;
  for (auto &g : grads_)
    for (double &v : g.data)
      v *= f;
}

ParamStore ParamStore::without(const std::vector<std::string> &names) const {
  ParamStore out;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (std::find(names.begin(), names.end(), names_[i]) == names.end())
      out.add(names_[i], values_[i]);
  return out;
}

void ParamStore::round_to_float() {
  for (auto &t : values_)
    for (double &v : t.data)
      v = static_cast<double>(static_cast<float>(v));
}

void init_uniform(Tensor &t, Rng &rng, double scale) {
  for (double &v : t.data)
    v = rng.uniform(-scale, scale);
}

} // namespace typespace
