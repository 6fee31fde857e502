#include "icl/gradcheck.hpp"

#include <cmath>

namespace icl::numerics {

namespace {

double eval_loss(const LossBuilder& build, const std::vector<Tensor>& params) {
  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const auto& p : params) ids.push_back(g.parameter(p));
  return g.value(build(g, ids)).item();
}

Tensor perturbed(const Tensor& t, std::int64_t flat, double delta) {
  std::vector<double> data(t.data().begin(), t.data().end());
  data[static_cast<size_t>(flat)] += delta;
  return Tensor::from(t.shape(), std::move(data));
}

}  // namespace

double finite_diff_check(const LossBuilder& build,
                         std::span<const Tensor> params, double h,
                         std::int64_t max_elements) {
  if (!(h > 0)) throw ContractError("finite_diff_check requires h > 0");
  std::vector<Tensor> base(params.begin(), params.end());

  // Autograd gradients from one tape.
  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(base.size());
  for (const auto& p : base) ids.push_back(g.parameter(p));
  const NodeId loss = build(g, ids);
  auto grads = g.backward(loss);

  std::int64_t total = 0;
  for (const auto& p : base) total += p.size();
  const std::int64_t budget =
      (max_elements > 0 && max_elements < total) ? max_elements : total;
  // Evenly spaced global element indices; deterministic.
  const double stride = static_cast<double>(total) / static_cast<double>(budget);

  double worst = 0.0;
  std::int64_t cursor = 0;  // global index of first element of current param
  std::int64_t next_check = 0;
  std::int64_t emitted = 0;
  for (size_t pi = 0; pi < base.size(); ++pi) {
    const Tensor& grad = grads.at(ids[pi]);
    for (std::int64_t j = 0; j < base[pi].size(); ++j, ++cursor) {
      if (cursor < next_check) continue;
      ++emitted;
      next_check = static_cast<std::int64_t>(
          std::llround(static_cast<double>(emitted) * stride));

      auto plus = base;
      plus[pi] = perturbed(base[pi], j, +h);
      auto minus = base;
      minus[pi] = perturbed(base[pi], j, -h);
      const double central =
          (eval_loss(build, plus) - eval_loss(build, minus)) / (2.0 * h);
      const double err = std::abs(grad.at(j) - central) /
                         std::max(1.0, std::abs(central));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace icl::numerics
