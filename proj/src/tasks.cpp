#include "icl/tasks.hpp"

#include <algorithm>
#include <cmath>

namespace icl::tasks {

std::string noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::kNone: return "none";
    case NoiseKind::kGaussian: return "gaussian";
    case NoiseKind::kUniform: return "uniform";
    case NoiseKind::kExponential: return "exponential";
    case NoiseKind::kPoisson: return "poisson";
    case NoiseKind::kMultiplicative: return "multiplicative";
    case NoiseKind::kSaltPepper: return "salt_pepper";
  }
  throw ContractError("unknown noise kind");
}

NoiseKind noise_kind_from_name(const std::string& name) {
  for (NoiseKind k :
       {NoiseKind::kNone, NoiseKind::kGaussian, NoiseKind::kUniform,
        NoiseKind::kExponential, NoiseKind::kPoisson,
        NoiseKind::kMultiplicative, NoiseKind::kSaltPepper}) {
    if (noise_kind_name(k) == name) return k;
  }
  throw ConfigError("unknown noise kind '" + name + "'");
}

NoiseSpec NoiseSpec::make(NoiseKind kind, double sigma) {
  NoiseSpec s;
  s.kind = kind;
  s.sigma = sigma;
  s.validate();
  return s;
}

void NoiseSpec::validate() const {
  if (sigma < 0.0 || !std::isfinite(sigma)) {
    throw ConfigError("noise sigma must be nonnegative, got " +
                      std::to_string(sigma));
  }
  if (kind == NoiseKind::kSaltPepper && sigma / std::sqrt(2.0) > 1.0) {
    throw ConfigError("salt_pepper flip probability sigma/sqrt(2) exceeds 1");
  }
}

FunctionSpec sample_linear_task(int d, Rng& rng) {
  if (d < 1) throw ConfigError("linear task dimension must be >= 1");
  FunctionSpec spec;
  spec.kind = FunctionKind::kLinear;
  spec.dim = d;
  spec.coeffs.resize(static_cast<size_t>(d));
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& c : spec.coeffs) c = nd(rng);
  return spec;
}

FunctionSpec sample_poly_task(int degree, Rng& rng) {
  if (degree < 1) throw ConfigError("polynomial degree must be >= 1");
  FunctionSpec spec;
  spec.kind = FunctionKind::kPolynomial;
  spec.dim = 1;
  spec.degree = degree;
  spec.coeffs.resize(static_cast<size_t>(degree));
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& c : spec.coeffs) c = nd(rng);
  return spec;
}

double clean_label(const FunctionSpec& spec, std::span<const double> x) {
  if (spec.kind == FunctionKind::kLinear) {
    if (static_cast<int>(x.size()) != spec.dim ||
        spec.coeffs.size() != static_cast<size_t>(spec.dim)) {
      throw ContractError("clean_label: input dimension mismatch");
    }
    double s = 0.0;
    for (int i = 0; i < spec.dim; ++i) s += spec.coeffs[i] * x[i];
    return s;
  }
  if (x.size() != 1) {
    throw ContractError("clean_label: polynomial tasks take scalar inputs");
  }
  // sum_j w_j x^j for j = 1..degree
  double s = 0.0;
  double p = 1.0;
  for (int j = 0; j < spec.degree; ++j) {
    p *= x[0];
    s += spec.coeffs[static_cast<size_t>(j)] * p;
  }
  return s;
}

std::vector<double> clean_labels(const FunctionSpec& spec,
                                 std::span<const double> xs_flat, int dim) {
  if (dim < 1 || xs_flat.size() % static_cast<size_t>(dim) != 0) {
    throw ContractError("clean_labels: flat input not a multiple of dim");
  }
  const auto k = xs_flat.size() / static_cast<size_t>(dim);
  std::vector<double> out(k);
  for (size_t i = 0; i < k; ++i) {
    out[i] = clean_label(spec, xs_flat.subspan(i * dim, dim));
  }
  return out;
}

std::vector<double> sample_noise(const NoiseSpec& noise, std::int64_t n,
                                 Rng& rng, std::span<const double> clean) {
  if (n != static_cast<std::int64_t>(clean.size())) {
    throw ContractError("sample_noise: n does not match label count");
  }
  noise.validate();
  std::vector<double> out(clean.begin(), clean.end());
  // kind none and sigma == 0 are exact identities; the noise path is not
  // entered and the generator state is untouched.
  if (noise.kind == NoiseKind::kNone || noise.sigma == 0.0) return out;

  switch (noise.kind) {
    case NoiseKind::kGaussian: {
      std::normal_distribution<double> d(0.0, noise.sigma);
      for (auto& y : out) y += d(rng);
      break;
    }
    case NoiseKind::kUniform: {
      // U(-sigma*sqrt(3), +sigma*sqrt(3)) has standard deviation sigma
      const double b = noise.sigma * std::sqrt(3.0);
      std::uniform_real_distribution<double> d(-b, b);
      for (auto& y : out) y += d(rng);
      break;
    }
    case NoiseKind::kExponential: {
      // rate 1/sigma, mean sigma
      std::exponential_distribution<double> d(1.0 / noise.sigma);
      for (auto& y : out) y += d(rng);
      break;
    }
    case NoiseKind::kPoisson: {
      std::poisson_distribution<long> d(noise.sigma * noise.sigma);
      for (auto& y : out) y += static_cast<double>(d(rng));
      break;
    }
    case NoiseKind::kMultiplicative: {
      std::normal_distribution<double> d(0.0, noise.sigma);
      for (auto& y : out) y *= 1.0 + d(rng);
      break;
    }
    case NoiseKind::kSaltPepper: {
      const double p = noise.sigma / std::sqrt(2.0);
      std::uniform_real_distribution<double> d(0.0, 1.0);
      for (auto& y : out) {
        const double u = d(rng);
        if (u < p / 2.0) {
          y += noise.salt_value;
        } else if (u < p) {
          y += noise.pepper_value;
        }
      }
      break;
    }
    case NoiseKind::kNone:
      break;
  }
  return out;
}

PromptInstance build_prompt(const FunctionSpec& spec, int k,
                            const NoiseSpec& noise, Rng& rng) {
  return build_prompt(spec, k, noise, rng, rng);
}

PromptInstance build_prompt(const FunctionSpec& spec, int k,
                            const NoiseSpec& noise, Rng& task_rng,
                            Rng& noise_rng) {
  if (k < 0) throw ConfigError("build_prompt requires k >= 0");
  PromptInstance p;
  p.dim = spec.dim;
  p.function = spec;
  p.noise = noise;
  std::normal_distribution<double> nd(0.0, 1.0);
  p.xs.resize(static_cast<size_t>(k) * spec.dim);
  for (auto& v : p.xs) v = nd(task_rng);
  p.x_query.resize(static_cast<size_t>(spec.dim));
  for (auto& v : p.x_query) v = nd(task_rng);
  auto clean = clean_labels(spec, p.xs, spec.dim);
  p.ys = sample_noise(noise, k, noise_rng, clean);
  p.y_query_clean = clean_label(spec, p.x_query);
  return p;
}

PromptInstance inject_outliers(const PromptInstance& prompt,
                               const OutlierSpec& spec, Rng& rng) {
  if (prompt.noise.kind != NoiseKind::kNone) {
    throw ContractError("inject_outliers requires a noise-free input prompt");
  }
  if (spec.m < 0 || spec.m > prompt.k()) {
    throw ConfigError("outlier count m must satisfy 0 <= m <= k");
  }
  if (spec.sigma < 0.0) throw ConfigError("outlier sigma must be nonnegative");

  PromptInstance out = prompt;
  if (spec.m == 0 || spec.sigma == 0.0) return out;

  // partial Fisher-Yates: first m entries of a shuffled index vector
  std::vector<int> idx(static_cast<size_t>(prompt.k()));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  for (int i = 0; i < spec.m; ++i) {
    std::uniform_int_distribution<int> d(i, prompt.k() - 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(d(rng))]);
  }
  std::poisson_distribution<long> noise_draw(spec.sigma * spec.sigma);
  for (int i = 0; i < spec.m; ++i) {
    out.ys[static_cast<size_t>(idx[static_cast<size_t>(i)])] +=
        static_cast<double>(noise_draw(rng));
  }
  return out;
}

}  // namespace icl::tasks
