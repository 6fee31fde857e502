#pragma once

#include <cstdint>
#include <vector>

#include "icl/tensor.hpp"

namespace icl::numerics {

// Adam optimizer state. m and v are first/second moment estimates, one
// tensor per parameter, shape-matched. step counts completed updates.
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-4;

  static AdamState init(const std::vector<Tensor>& params, double lr,
                        double beta1 = 0.9, double beta2 = 0.999,
                        double eps = 1e-8);
};

// One Adam update with bias correction. Returns the new parameter values;
// advances state.step by exactly 1 and updates the moments in place.
std::vector<Tensor> adam_step(const std::vector<Tensor>& params,
                              const std::vector<Tensor>& grads,
                              AdamState& state);

}  // namespace icl::numerics
