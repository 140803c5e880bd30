#include "doctest.h"

#include <cmath>
#include <random>

#include "ala/errors.hpp"
#include "ala/families.hpp"
#include "ala/quadrature.hpp"
#include "support.hpp"

using namespace ala;
using namespace ala::testing;

TEST_CASE("standard normal integrals") {
  auto log_phi = [](double x) { return -0.5 * x * x - 0.5 * std::log(2 * M_PI); };
  CHECK(std::exp(log_integral_1d(log_phi, 0.3, 1.0)) == doctest::Approx(1.0).epsilon(1e-10));
  auto second = [](double x) {
    return x == 0.0 ? -INFINITY : -0.5 * x * x + std::log(2 * x * x) - 0.5 * std::log(2 * M_PI);
  };
  CHECK(std::abs(std::exp(log_integral_1d(second, 0.0, 1.0)) - 2.0) <= 1e-8);
}

TEST_CASE("two-dimensional gaussian integral") {
  // correlated bivariate normal kernel with known normalizer 2 pi sqrt|S|
  const double s1 = 1.5, s2 = 0.7, r = 0.6;
  const double det = s1 * s1 * s2 * s2 * (1 - r * r);
  auto logf = [&](double a, double b) {
    const double q = (a * a / (s1 * s1) - 2 * r * a * b / (s1 * s2) + b * b / (s2 * s2)) / (1 - r * r);
    return -0.5 * q;
  };
  const double expected = std::log(2 * M_PI * std::sqrt(det));
  CHECK(log_integral_2d(logf, {0.2, -0.1}, {s1, s2}) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("explicit bounds") {
  QuadratureOptions opts;
  opts.bounds = std::make_pair(0.0, 1.0);
  auto flat = [](double) { return 0.0; };
  CHECK(log_integral_1d(flat, 0.5, 0.1, opts) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("one-dimensional logistic marginal agrees with Monte Carlo") {
  Rng rng(77);
  const int n = 40;
  const Vector x = RandomVector(n, rng);
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = Uniform(rng) < 1 / (1 + std::exp(-0.8 * x[i])) ? 1.0 : 0.0;
  const FamilySpec logistic = FamilySpec::Logistic();
  auto loglik_at = [&](double b) { return loglik(logistic, x * b, y, 1.0); };
  auto logf = [&](double b) { return loglik_at(b) - 0.5 * b * b - 0.5 * std::log(2 * M_PI); };
  const double quad = log_integral_1d(logf, 0.0, 1.0);

  // plain Monte Carlo over the N(0, 1) prior
  const double shift = loglik_at(0.0);
  std::normal_distribution<double> normal;
  const long draws = 10000000;
  double sum = 0.0, sum2 = 0.0;
  for (long k = 0; k < draws; ++k) {
    const double w = std::exp(loglik_at(normal(rng)) - shift);
    sum += w;
    sum2 += w * w;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum2 / draws - mean * mean) / draws);
  CHECK(std::abs(std::exp(quad - shift) - mean) <= 3 * se);
}
