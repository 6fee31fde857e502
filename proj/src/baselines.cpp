#include "icl/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace icl::baselines {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> min_norm_solve(const Eigen::Map<const MatRM>& X,
                                   std::span<const double> y) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  Eigen::VectorXd w = svd.solve(yv);
  return {w.data(), w.data() + w.size()};
}

}  // namespace

Demos Demos::prefix(const tasks::PromptInstance& p, int k) {
  if (k < 0 || k > p.k()) throw ContractError("demo prefix length out of range");
  Demos d;
  d.dim = p.dim;
  d.xs = std::span<const double>(p.xs.data(), static_cast<size_t>(k) * p.dim);
  d.ys = std::span<const double>(p.ys.data(), static_cast<size_t>(k));
  return d;
}

std::vector<double> least_squares_fit(const Demos& demos) {
  if (demos.k() == 0) return std::vector<double>(static_cast<size_t>(demos.dim), 0.0);
  Eigen::Map<const MatRM> X(demos.xs.data(), demos.k(), demos.dim);
  return min_norm_solve(X, demos.ys);
}

double least_squares_predict(const Demos& demos, std::span<const double> x_query) {
  if (demos.k() == 0) return 0.0;
  auto w = least_squares_fit(demos);
  double s = 0.0;
  for (size_t i = 0; i < w.size(); ++i) s += w[i] * x_query[i];
  return s;
}

double knn_predict(const Demos& demos, std::span<const double> x_query,
                   int n_neighbors) {
  if (n_neighbors < 1) throw ContractError("knn_predict requires n_neighbors >= 1");
  const int k = demos.k();
  if (k == 0) return 0.0;
  const int n = std::min(n_neighbors, k);

  std::vector<std::pair<double, int>> dist(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    auto xi = demos.x(i);
    double d2 = 0.0;
    for (int j = 0; j < demos.dim; ++j) {
      const double d = xi[j] - x_query[j];
      d2 += d * d;
    }
    dist[static_cast<size_t>(i)] = {d2, i};
  }
  // pair ordering breaks distance ties by lower index
  std::partial_sort(dist.begin(), dist.begin() + n, dist.end());
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += demos.ys[static_cast<size_t>(dist[i].second)];
  return s / static_cast<double>(n);
}

double averaging_predict(const Demos& demos, std::span<const double> x_query) {
  const int k = demos.k();
  if (k == 0) return 0.0;
  double s = 0.0;
  for (int j = 0; j < demos.dim; ++j) {
    double wj = 0.0;
    for (int i = 0; i < k; ++i) {
      wj += demos.ys[static_cast<size_t>(i)] * demos.xs[static_cast<size_t>(i) * demos.dim + j];
    }
    s += (wj / static_cast<double>(k)) * x_query[j];
  }
  return s;
}

double zero_predict(const Demos&, std::span<const double>) { return 0.0; }

std::vector<double> poly_features(double x, int degree) {
  if (degree < 1) throw ContractError("poly_features requires degree >= 1");
  std::vector<double> f(static_cast<size_t>(degree));
  double p = 1.0;
  for (int j = 0; j < degree; ++j) {
    p *= x;
    f[static_cast<size_t>(j)] = p;
  }
  return f;
}

double poly_ols_predict(const Demos& demos, double x_query, int degree) {
  if (demos.dim != 1) throw ContractError("polynomial baselines take scalar inputs");
  const int k = demos.k();
  if (k == 0) return 0.0;
  std::vector<double> feats(static_cast<size_t>(k) * degree);
  for (int i = 0; i < k; ++i) {
    auto f = poly_features(demos.xs[static_cast<size_t>(i)], degree);
    std::copy(f.begin(), f.end(), feats.begin() + static_cast<size_t>(i) * degree);
  }
  Demos fd;
  fd.dim = degree;
  fd.xs = feats;
  fd.ys = demos.ys;
  auto q = poly_features(x_query, degree);
  return least_squares_predict(fd, q);
}

double poly_knn_predict(const Demos& demos, double x_query, int degree,
                        int n_neighbors) {
  if (demos.dim != 1) throw ContractError("polynomial baselines take scalar inputs");
  const int k = demos.k();
  if (k == 0) return 0.0;
  std::vector<double> feats(static_cast<size_t>(k) * degree);
  for (int i = 0; i < k; ++i) {
    auto f = poly_features(demos.xs[static_cast<size_t>(i)], degree);
    std::copy(f.begin(), f.end(), feats.begin() + static_cast<size_t>(i) * degree);
  }
  Demos fd;
  fd.dim = degree;
  fd.xs = feats;
  fd.ys = demos.ys;
  auto q = poly_features(x_query, degree);
  return knn_predict(fd, q, n_neighbors);
}

}  // namespace icl::baselines
