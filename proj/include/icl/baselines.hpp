#pragma once

#include <span>
#include <vector>

#include "icl/tasks.hpp"

namespace icl::baselines {

// Non-owning view of k demonstrations (x_i, y_i), x_i in R^dim.
struct Demos {
  std::span<const double> xs;  // row-major k x dim
  std::span<const double> ys;
  int dim = 0;

  int k() const { return static_cast<int>(ys.size()); }
  std::span<const double> x(int i) const {
    return xs.subspan(static_cast<size_t>(i) * dim, static_cast<size_t>(dim));
  }

  // First k demonstrations of a prompt.
  static Demos prefix(const tasks::PromptInstance& p, int k);
};

// Minimum-norm least squares via SVD; singular values below
// 1e-10 * sigma_max are treated as zero. k = 0 predicts 0.
double least_squares_predict(const Demos& demos, std::span<const double> x_query);

// Same, but also exposes the fitted weight vector (for property tests).
std::vector<double> least_squares_fit(const Demos& demos);

// Mean label of the min(n_neighbors, k) nearest demonstrations by
// Euclidean distance; ties broken by lower demonstration index.
double knn_predict(const Demos& demos, std::span<const double> x_query,
                   int n_neighbors = 3);

// w_hat = (1/k) sum y_i x_i, then w_hat . x_query.
double averaging_predict(const Demos& demos, std::span<const double> x_query);

double zero_predict(const Demos& demos, std::span<const double> x_query);

// (x, x^2, ..., x^degree)
std::vector<double> poly_features(double x, int degree);

// Appendix-style polynomial baselines on scalar tasks: OLS on polynomial
// features (realized via the pseudoinverse) and k-NN in feature space.
double poly_ols_predict(const Demos& demos, double x_query, int degree);
double poly_knn_predict(const Demos& demos, double x_query, int degree,
                        int n_neighbors = 3);

}  // namespace icl::baselines
