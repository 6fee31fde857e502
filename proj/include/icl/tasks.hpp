#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icl/errors.hpp"
#include "icl/rng.hpp"

namespace icl::tasks {

enum class FunctionKind { kLinear, kPolynomial };

// A sampled ground-truth function: linear w^T x on R^dim, or a scalar
// polynomial sum_j w_j x^j of the given degree.
struct FunctionSpec {
  FunctionKind kind = FunctionKind::kLinear;
  int dim = 0;     // input dimension (1 for polynomial)
  int degree = 0;  // polynomial degree; 0 for linear
  std::vector<double> coeffs;
};

enum class NoiseKind {
  kNone,
  kGaussian,
  kUniform,
  kExponential,
  kPoisson,
  kMultiplicative,
  kSaltPepper,
};

std::string noise_kind_name(NoiseKind k);
NoiseKind noise_kind_from_name(const std::string& name);

// One of the label-noise distributions with its level parameter sigma.
// sigma is a common axis: gaussian/uniform noise has std sigma,
// exponential has mean sigma, poisson std sigma, multiplicative relative
// std sigma, and salt&pepper flip probability p = sigma/sqrt(2).
struct NoiseSpec {
  NoiseKind kind = NoiseKind::kNone;
  double sigma = 0.0;
  // salt&pepper amplitudes (the level axis fixes only the flip probability)
  double salt_value = 1.0;
  double pepper_value = -1.0;

  static NoiseSpec none() { return {}; }
  static NoiseSpec make(NoiseKind kind, double sigma);
  void validate() const;
};

// One in-context episode: k demonstrations, a query input, and the clean
// query target. xs is row-major k x dim. y_query_clean never carries noise.
struct PromptInstance {
  int dim = 0;
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> x_query;
  double y_query_clean = 0.0;
  FunctionSpec function;
  NoiseSpec noise;

  int k() const { return static_cast<int>(ys.size()); }
  std::span<const double> x(int i) const {
    return {xs.data() + static_cast<size_t>(i) * dim, static_cast<size_t>(dim)};
  }
};

// Outlier injection parameters: m demonstrations receive additive
// Poisson(sigma^2) noise, the rest stay untouched.
struct OutlierSpec {
  int m = 0;
  double sigma = 0.0;
};

FunctionSpec sample_linear_task(int d, Rng& rng);
FunctionSpec sample_poly_task(int degree, Rng& rng);

double clean_label(const FunctionSpec& spec, std::span<const double> x);
std::vector<double> clean_labels(const FunctionSpec& spec,
                                 std::span<const double> xs_flat, int dim);

// Applies the specified noise to clean labels. sigma == 0 (and kind none)
// return the clean labels exactly without consuming any randomness.
std::vector<double> sample_noise(const NoiseSpec& noise, std::int64_t n,
                                 Rng& rng, std::span<const double> clean);

PromptInstance build_prompt(const FunctionSpec& spec, int k,
                            const NoiseSpec& noise, Rng& rng);
// Variant with separate streams so noise levels can vary while the task
// and inputs stay fixed.
PromptInstance build_prompt(const FunctionSpec& spec, int k,
                            const NoiseSpec& noise, Rng& task_rng,
                            Rng& noise_rng);

// Requires the input prompt to be noise-free; returns a copy where exactly
// spec.m labels (chosen uniformly without replacement) carry Poisson noise.
PromptInstance inject_outliers(const PromptInstance& prompt,
                               const OutlierSpec& spec, Rng& rng);

}  // namespace icl::tasks
