#include "icl/adam.hpp"

#include <Eigen/Core>
#include <cmath>

namespace icl::numerics {

AdamState AdamState::init(const std::vector<Tensor>& params, double lr,
                          double beta1, double beta2, double eps) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros(p.shape()));
    s.v.push_back(Tensor::zeros(p.shape()));
  }
  return s;
}

std::vector<Tensor> adam_step(const std::vector<Tensor>& params,
                              const std::vector<Tensor>& grads,
                              AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw DimensionError("adam_step: parameter/gradient/state counts disagree");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.m[i]) ||
        !params[i].same_shape(state.v[i])) {
      throw DimensionError("adam_step: shape mismatch at parameter " +
                           std::to_string(i));
    }
  }

  const std::int64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));

  std::vector<Tensor> out;
  out.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const auto n = params[i].size();
    std::vector<double> m(static_cast<size_t>(n));
    std::vector<double> v(static_cast<size_t>(n));
    std::vector<double> p(static_cast<size_t>(n));
    Eigen::Map<const Eigen::ArrayXd> G(grads[i].raw(), n);
    Eigen::Map<const Eigen::ArrayXd> M0(state.m[i].raw(), n);
    Eigen::Map<const Eigen::ArrayXd> V0(state.v[i].raw(), n);
    Eigen::Map<const Eigen::ArrayXd> P0(params[i].raw(), n);
    Eigen::Map<Eigen::ArrayXd> M(m.data(), n);
    Eigen::Map<Eigen::ArrayXd> V(v.data(), n);
    Eigen::Map<Eigen::ArrayXd> P(p.data(), n);
    M = state.beta1 * M0 + (1.0 - state.beta1) * G;
    V = state.beta2 * V0 + (1.0 - state.beta2) * G.square();
    P = P0 - state.lr * (M / bc1) / ((V / bc2).sqrt() + state.eps);
    state.m[i] = Tensor::from(params[i].shape(), std::move(m));
    state.v[i] = Tensor::from(params[i].shape(), std::move(v));
    out.push_back(Tensor::from(params[i].shape(), std::move(p)));
  }
  state.step = t;
  return out;
}

}  // namespace icl::numerics
