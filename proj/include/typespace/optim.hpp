#pragma once

#include "typespace/tensor.hpp"

namespace typespace {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0; // <= 0 disables clipping
};

class Adam {
public:
  Adam(ParamStore &params, AdamConfig config = {});

  /// Clips the accumulated gradients, applies one update and zeroes them.
  void step();
  long steps() const { return t_; }

private:
  ParamStore &params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

} // namespace typespace
