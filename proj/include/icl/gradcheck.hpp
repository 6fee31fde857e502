#pragma once

#include <functional>
#include <span>
#include <vector>

#include "icl/graph.hpp"

namespace icl::numerics {

// Builds a scalar loss from parameter nodes registered on the given graph,
// in the same order as the parameter tensors supplied to finite_diff_check.
using LossBuilder = std::function<NodeId(Graph&, std::span<const NodeId>)>;

// Compares reverse-mode gradients against central finite differences.
// Returns max over checked parameter elements of
//   |autograd - central| / max(1, |central|).
// max_elements > 0 checks a deterministic evenly-spaced subset instead of
// every element (for large parameter sets).
double finite_diff_check(const LossBuilder& build,
                         std::span<const Tensor> params, double h,
                         std::int64_t max_elements = 0);

}  // namespace icl::numerics
