#include "typespace/optim.hpp"

#include <cmath>

namespace typespace {

Adam::Adam(ParamStore &params, AdamConfig config) : params_(params), cfg_(config) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor &p = params_.value(static_cast<int>(i));
    m_.emplace_back(p.rows, p.cols);
    v_.emplace_back(p.rows, p.cols);
  }
}

void Adam::step() {
  if (cfg_.clip_norm > 0)
    params_.clip_grad(cfg_.clip_norm);
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto &w = params_.value(static_cast<int>(i)).data;
    const auto &g = params_.grad(static_cast<int>(i)).data;
    auto &m = m_[i].data;
    auto &v = v_[i].data;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1 - cfg_.beta2) * g[j] * g[j];
      w[j] -= cfg_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.epsilon);
    }
  }
  params_.zero_grad();
}

} // namespace typespace
