#include "ala/quadrature.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <string>

#include "ala/errors.hpp"

namespace ala {

namespace {

using boost::math::quadrature::gauss_kronrod;

constexpr int kGrid = 401;
constexpr double kReach = 12.0;   // initial half-width in units of scale
constexpr double kNegligible = 46.0;  // exp(-46) ~ 1e-20
constexpr int kPanels = 24;

struct Sum {
  double value = 0.0;
  double error = 0.0;
};

// Integral of f over [lo, hi] as a sum of adaptive Gauss-Kronrod panels.
template <class F>
Sum Panels(F f, double lo, double hi, double rtol, int panels) {
  Sum s;
  const double w = (hi - lo) / panels;
  for (int k = 0; k < panels; ++k) {
    double err = 0.0;
    const double a = lo + k * w;
    const double b = k + 1 == panels ? hi : a + w;
    s.value += gauss_kronrod<double, 15>::integrate(f, a, b, 20, rtol * 1e-2, &err);
    s.error += err;
  }
  return s;
}

double SafeLog(const std::function<double(double)>& logf, double x) {
  const double v = logf(x);
  return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
}

void CheckTolerance(const Sum& s, double rtol) {
  if (!(s.value > 0) || !std::isfinite(s.value)) {
    throw ToleranceNotMet("quadrature: integral is not positive and finite");
  }
  if (s.error > rtol * s.value) {
    throw ToleranceNotMet("quadrature: error estimate " +
                          std::to_string(s.error / s.value) +
                          " exceeds relative tolerance " + std::to_string(rtol));
  }
}

// Widen [lo, hi] until logf is negligible at both ends.
void Widen(const std::function<double(double)>& logf, double peak, double* lo,
           double* hi) {
  for (int side = 0; side < 2; ++side) {
    double* edge = side == 0 ? lo : hi;
    const double other = side == 0 ? *hi : *lo;
    for (int it = 0; it < 60 && SafeLog(logf, *edge) - peak > -kNegligible; ++it) {
      *edge += (*edge - other);
    }
  }
}

}  // namespace

double log_integral_1d(const std::function<double(double)>& logf,
                       double center, double scale,
                       const QuadratureOptions& options) {
  if (!(scale > 0)) scale = 1.0;
  double lo = options.bounds ? options.bounds->first : center - kReach * scale;
  double hi = options.bounds ? options.bounds->second : center + kReach * scale;
  double peak = -std::numeric_limits<double>::infinity();
  double argmax = center;
  for (int k = 0; k < kGrid; ++k) {
    const double x = lo + (hi - lo) * k / (kGrid - 1);
    const double v = SafeLog(logf, x);
    if (v > peak) {
      peak = v;
      argmax = x;
    }
  }
  if (!std::isfinite(peak)) {
    throw ToleranceNotMet("quadrature: integrand is zero on the search grid");
  }
  peak = std::max(peak, SafeLog(logf, center));
  if (!options.bounds) {
    // Re-center the bracket on the grid mode before widening.
    const double half = std::max(hi - argmax, argmax - lo);
    lo = argmax - half;
    hi = argmax + half;
    Widen(logf, peak, &lo, &hi);
  }
  auto f = [&](double x) {
    const double v = SafeLog(logf, x) - peak;
    return v < -700 ? 0.0 : std::exp(v);
  };
  const Sum s = Panels(f, lo, hi, options.rtol, kPanels);
  CheckTolerance(s, options.rtol);
  return peak + std::log(s.value);
}

double log_integral_2d(const std::function<double(double, double)>& logf,
                       std::pair<double, double> center,
                       std::pair<double, double> scale,
                       const QuadratureOptions& options) {
  if (!(scale.first > 0)) scale.first = 1.0;
  if (!(scale.second > 0)) scale.second = 1.0;
  auto safe = [&](double x, double y) {
    const double v = logf(x, y);
    return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
  };
  double xlo = options.bounds ? options.bounds->first : center.first - kReach * scale.first;
  double xhi = options.bounds ? options.bounds->second : center.first + kReach * scale.first;
  double ylo = options.bounds_y ? options.bounds_y->first : center.second - kReach * scale.second;
  double yhi = options.bounds_y ? options.bounds_y->second : center.second + kReach * scale.second;

  constexpr int kGrid2 = 121;
  double peak = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < kGrid2; ++a) {
    const double x = xlo + (xhi - xlo) * a / (kGrid2 - 1);
    for (int b = 0; b < kGrid2; ++b) {
      const double y = ylo + (yhi - ylo) * b / (kGrid2 - 1);
      peak = std::max(peak, safe(x, y));
    }
  }
  peak = std::max(peak, safe(center.first, center.second));
  if (!std::isfinite(peak)) {
    throw ToleranceNotMet("quadrature: integrand is zero on the search grid");
  }
  if (!options.bounds || !options.bounds_y) {
    // Widen the box while any edge still carries mass.
    for (int it = 0; it < 40; ++it) {
      double edge_max = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < kGrid2; ++k) {
        const double x = xlo + (xhi - xlo) * k / (kGrid2 - 1);
        const double y = ylo + (yhi - ylo) * k / (kGrid2 - 1);
        edge_max = std::max({edge_max, safe(x, ylo), safe(x, yhi), safe(xlo, y),
                             safe(xhi, y)});
      }
      if (edge_max - peak < -kNegligible) break;
      const double wx = 0.5 * (xhi - xlo);
      const double wy = 0.5 * (yhi - ylo);
      if (!options.bounds) {
        xlo -= wx;
        xhi += wx;
      }
      if (!options.bounds_y) {
        ylo -= wy;
        yhi += wy;
      }
    }
  }
  double inner_error = 0.0;
  auto inner = [&](double x) {
    auto f = [&](double y) {
      const double v = safe(x, y) - peak;
      return v < -700 ? 0.0 : std::exp(v);
    };
    const Sum s = Panels(f, ylo, yhi, options.rtol * 1e-2, 8);
    inner_error = std::max(inner_error, s.error);
    return s.value;
  };
  const Sum s = Panels(inner, xlo, xhi, options.rtol, 8);
  CheckTolerance(s, options.rtol);
  return peak + std::log(s.value);
}

double log_integral_2d_whitened(const std::function<double(double, double)>& logf,
                                const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov,
                                const QuadratureOptions& options) {
  const Eigen::LLT<Eigen::Matrix2d> llt(cov);
  if (llt.info() != Eigen::Success) {
    return log_integral_2d(logf, {mean[0], mean[1]},
                           {std::sqrt(std::abs(cov(0, 0))), std::sqrt(std::abs(cov(1, 1)))},
                           options);
  }
  const Eigen::Matrix2d L = llt.matrixL();
  auto whitened = [&](double u, double v) {
    const Eigen::Vector2d eta = mean + L * Eigen::Vector2d(u, v);
    return logf(eta[0], eta[1]);
  };
  QuadratureOptions o = options;
  o.bounds.reset();
  o.bounds_y.reset();
  return std::log(L(0, 0) * L(1, 1)) + log_integral_2d(whitened, {0.0, 0.0}, {1.0, 1.0}, o);
}

}  // namespace ala
