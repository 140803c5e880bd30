#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <utility>

namespace ala {

struct QuadratureOptions {
  double rtol = 1e-8;
  /// Integration range; widened automatically around the mode when absent.
  std::optional<std::pair<double, double>> bounds;
  std::optional<std::pair<double, double>> bounds_y;  ///< 2-d only
};

/// log of the integral of exp(logf) over the real line. `center` and
/// `scale` locate the bulk of the mass; the search for the mode and the
/// bracket start there. Throws ToleranceNotMet.
double log_integral_1d(const std::function<double(double)>& logf,
                       double center, double scale,
                       const QuadratureOptions& options = {});

/// Two-dimensional version by nested adaptive integration.
double log_integral_2d(const std::function<double(double, double)>& logf,
                       std::pair<double, double> center,
                       std::pair<double, double> scale,
                       const QuadratureOptions& options = {});

/// 2-d integral in whitened coordinates u, eta = mean + L u with L L' = cov;
/// suited to strongly correlated integrands.
double log_integral_2d_whitened(
    const std::function<double(double, double)>& logf,
    const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov,
    const QuadratureOptions& options = {});

}  // namespace ala
