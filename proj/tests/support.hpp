#pragma once

// Shared helpers for unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "icl/rng.hpp"
#include "icl/tasks.hpp"

namespace icl::testsupport {

struct MomentCheck {
  std::string name;
  bool pass = true;
  std::string detail;
};

inline void moments(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  sd = std::sqrt(var);
}

// Empirical-vs-analytic moment checks for one noise kind at the 1%-at-n
// tolerance. Draws are applied to a constant clean label.
inline MomentCheck check_noise_moments(tasks::NoiseKind kind, double sigma,
                                       std::int64_t n, std::uint64_t seed) {
  using tasks::NoiseKind;
  MomentCheck r;
  r.name = tasks::noise_kind_name(kind);
  const double clean_value = (kind == NoiseKind::kMultiplicative) ? 2.0 : 0.0;
  std::vector<double> clean(static_cast<size_t>(n), clean_value);
  Rng rng = make_rng(seed);
  auto noisy =
      tasks::sample_noise(tasks::NoiseSpec::make(kind, sigma), n, rng, clean);

  auto fail = [&](const std::string& msg) {
    r.pass = false;
    if (!r.detail.empty()) r.detail += "; ";
    r.detail += msg;
  };
  auto expect_close = [&](const char* what, double got, double want,
                          double tol) {
    if (std::abs(got - want) > tol) {
      fail(std::string(what) + " " + std::to_string(got) + " vs analytic " +
           std::to_string(want));
    }
  };

  double mean = 0.0, sd = 0.0;
  if (kind == NoiseKind::kSaltPepper) {
    std::int64_t nonzero = 0;
    for (size_t i = 0; i < noisy.size(); ++i) {
      const double eps = noisy[i] - clean[i];
      if (eps != 0.0 && eps != 1.0 && eps != -1.0) {
        fail("support contains " + std::to_string(eps));
        break;
      }
      if (eps != 0.0) ++nonzero;
    }
    const double p = sigma / std::sqrt(2.0);
    expect_close("P(eps != 0)", static_cast<double>(nonzero) / static_cast<double>(n),
                 p, 0.01 * p);
    return r;
  }

  std::vector<double> eps(noisy.size());
  for (size_t i = 0; i < noisy.size(); ++i) eps[i] = noisy[i] - clean[i];
  switch (kind) {
    case NoiseKind::kGaussian:
    case NoiseKind::kUniform:
      moments(eps, mean, sd);
      expect_close("mean", mean, 0.0, 0.01 * sigma);
      expect_close("std", sd, sigma, 0.01 * sigma);
      break;
    case NoiseKind::kExponential:
      moments(eps, mean, sd);
      expect_close("mean", mean, sigma, 0.01 * sigma);
      expect_close("std", sd, sigma, 0.01 * sigma);
      break;
    case NoiseKind::kPoisson:
      for (double e : eps) {
        if (e < 0.0 || e != std::floor(e)) {
          fail("draw not a nonnegative integer: " + std::to_string(e));
          break;
        }
      }
      moments(eps, mean, sd);
      expect_close("mean", mean, sigma * sigma, 0.01 * sigma * sigma);
      expect_close("std", sd, sigma, 0.01 * sigma);
      break;
    case NoiseKind::kMultiplicative:
      moments(noisy, mean, sd);
      expect_close("mean", mean, clean_value, 0.01 * std::abs(clean_value) * sigma);
      expect_close("std", sd, std::abs(clean_value) * sigma,
                   0.01 * std::abs(clean_value) * sigma);
      break;
    default:
      break;
  }
  return r;
}

}  // namespace icl::testsupport
