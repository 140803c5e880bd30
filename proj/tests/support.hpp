#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <random>

#include "ala/data_model.hpp"
#include "ala/rng.hpp"

namespace ala::testing {

inline Matrix RandomNormal(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

inline Vector RandomVector(int n, Rng& rng) { return RandomNormal(n, 1, rng).col(0); }

inline double Uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// log N(y; 0, phi (I + Z P0^{-1} Z')), computed from the n x n covariance.
inline double DenseGaussianLogMarginal(const Matrix& Z, const Vector& y, const Matrix& P0,
                                       double phi) {
  const int n = static_cast<int>(y.size());
  Matrix C = Matrix::Identity(n, n);
  if (Z.cols() > 0) C += Z * P0.inverse() * Z.transpose();
  C *= phi;
  const Eigen::LDLT<Matrix> ldlt(C);
  const double logdet = ldlt.vectorD().array().log().sum();
  return -0.5 * n * std::log(2 * M_PI) - 0.5 * logdet - 0.5 * y.dot(ldlt.solve(y));
}

/// log of a trapezoid-rule integral of exp(logf) over [lo, hi].
inline double TrapezoidLog1d(const std::function<double(double)>& logf, double lo, double hi,
                             int points) {
  const double h = (hi - lo) / (points - 1);
  std::vector<double> v(points);
  double peak = -INFINITY;
  for (int i = 0; i < points; ++i) {
    v[i] = logf(lo + i * h);
    peak = std::max(peak, v[i]);
  }
  double s = 0.0;
  for (int i = 0; i < points; ++i) s += (i == 0 || i == points - 1 ? 0.5 : 1.0) * std::exp(v[i] - peak);
  return peak + std::log(s * h);
}

inline double TrapezoidLog2d(const std::function<double(double, double)>& logf, double xlo,
                             double xhi, double ylo, double yhi, int points) {
  const double hx = (xhi - xlo) / (points - 1);
  const double hy = (yhi - ylo) / (points - 1);
  std::vector<double> v(static_cast<std::size_t>(points) * points);
  double peak = -INFINITY;
  for (int i = 0; i < points; ++i) {
    for (int j = 0; j < points; ++j) {
      v[i * points + j] = logf(xlo + i * hx, ylo + j * hy);
      peak = std::max(peak, v[i * points + j]);
    }
  }
  double s = 0.0;
  for (int i = 0; i < points; ++i) {
    const double wi = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    for (int j = 0; j < points; ++j) {
      const double wj = (j == 0 || j == points - 1) ? 0.5 : 1.0;
      s += wi * wj * std::exp(v[i * points + j] - peak);
    }
  }
  return peak + std::log(s * hx * hy);
}

/// Central-difference gradient of f.
inline Vector NumericGradient(const std::function<double(const Vector&)>& f, const Vector& x,
                              double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector a = x, b = x;
    a[k] += h;
    b[k] -= h;
    g[k] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

/// Central-difference jacobian of a vector-valued function.
inline Matrix NumericJacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                              double h = 1e-6) {
  const Vector f0 = f(x);
  Matrix J(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector a = x, b = x;
    a[k] += h;
    b[k] -= h;
    J.col(k) = (f(a) - f(b)) / (2 * h);
  }
  return J;
}

/// max |a - b| / max(|b|, floor), elementwise.
inline double MaxRelError(const Matrix& a, const Matrix& b, double floor = 1e-3) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = std::abs(a.data()[i] - b.data()[i]) / std::max(std::abs(b.data()[i]), floor);
    worst = std::max(worst, d);
  }
  return worst;
}

inline std::shared_ptr<const DesignMatrix> Singletons(const Matrix& X,
                                                      std::optional<int> forced = {}) {
  return std::make_shared<const DesignMatrix>(DesignMatrix::Singletons(X, forced));
}

}  // namespace ala::testing
