#pragma once

#include <Eigen/Dense>
#include <string>

namespace ala {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class FamilyKind {
  kLogistic,
  kPoisson,
  kGaussianKnownPhi,
  kGaussianUnknownPhi,
  kAftLognormal,
};

/// Likelihood family. Exponential-family members use the canonical link,
/// log p(y|eta, phi) = [y*eta - b(eta)]/phi + c(y, phi).
struct FamilySpec {
  FamilyKind kind = FamilyKind::kLogistic;
  double phi = 1.0;  ///< fixed dispersion when dispersion_known()

  static FamilySpec Logistic() { return {FamilyKind::kLogistic, 1.0}; }
  static FamilySpec Poisson() { return {FamilyKind::kPoisson, 1.0}; }
  static FamilySpec GaussianKnownPhi(double phi) {
    return {FamilyKind::kGaussianKnownPhi, phi};
  }
  static FamilySpec GaussianUnknownPhi() {
    return {FamilyKind::kGaussianUnknownPhi, 1.0};
  }
  static FamilySpec AftLognormal() { return {FamilyKind::kAftLognormal, 1.0}; }

  /// Parses "logistic", "poisson", "gaussian", "gaussian-unknown", "aft".
  static FamilySpec Parse(const std::string& name, double phi = 1.0);

  std::string name() const;
  bool is_expfam() const { return kind != FamilyKind::kAftLognormal; }
  bool dispersion_known() const {
    return kind != FamilyKind::kGaussianUnknownPhi &&
           kind != FamilyKind::kAftLognormal;
  }
  bool is_gaussian() const {
    return kind == FamilyKind::kGaussianKnownPhi ||
           kind == FamilyKind::kGaussianUnknownPhi;
  }

  double b(double u) const;
  double b1(double u) const;  ///< b'(u), the mean
  double b2(double u) const;  ///< b''(u), the variance function
  double link(double mu) const;  ///< h, with h(b'(u)) = u

  /// c(y, phi) and its first two phi-derivatives.
  double c(double y, double phi) const;
  double dc(double y, double phi) const;
  double d2c(double y, double phi) const;
};

/// log p(y | eta, phi) for the linear predictor eta. For Poisson an
/// overflowing predictor yields -inf and sets *overflow.
double loglik(const FamilySpec& family, const Vector& eta, const Vector& y,
              double phi, bool* overflow = nullptr);

/// Gradient and hessian of the negative log-likelihood.
struct GradHess {
  Vector grad;
  Matrix hess;
};

/// Derivatives in beta (and in phi, appended last, for unknown-dispersion
/// families) of -log p(y | offset + Z beta, phi).
GradHess grad_hess(const FamilySpec& family, const Vector& beta, double phi,
                   const Matrix& Z, const Vector& y, double offset = 0.0);

/// Dispersion MLE given the linear predictor fixed at `offset`.
double phi0_mle(const FamilySpec& family, const Vector& y, double offset = 0.0);

/// s(phi0) such that the (phi, phi) hessian block at beta = 0 equals
/// b''(nu0)/phi0 * s.
double s_phi0(const FamilySpec& family, const Vector& y, double phi0,
              double offset = 0.0);

// Gaussian accelerated failure time model on log-times.

struct SurvivalData {
  Vector times;  ///< observed log-times
  Eigen::VectorXi status;  ///< 1 = event observed, 0 = right-censored
  int n_o = 0;

  SurvivalData() = default;
  SurvivalData(Vector log_times, Eigen::VectorXi event);
};

struct AftParams {
  Vector alpha;  ///< beta / sigma
  double tau = 1.0;  ///< 1 / sigma
};

struct AftEval {
  double loglik = 0.0;
  Vector grad;  ///< of -loglik, ordered (alpha, tau)
  Matrix hess;  ///< of -loglik
};

AftEval aft_loglik_grad_hess(const AftParams& params, const Matrix& Z,
                             const SurvivalData& data);
double aft_loglik(const AftParams& params, const Matrix& Z,
                  const SurvivalData& data);

/// Log-likelihood concavity in (alpha, tau): enough events and an event
/// submatrix of full column rank.
bool aft_concavity_check(const Matrix& Z, const SurvivalData& data);

/// tau maximizing the log-likelihood with alpha = 0.
double aft_tau0(const SurvivalData& data);

/// Inverse Mills ratio phi(t)/Phi(t).
double mills_ratio(double t);
/// D(z) = r(-z)^2 - z r(-z), in (0, 1).
double mills_d(double z);
double log_norm_cdf(double t);
/// Scaled complementary error function exp(x^2) erfc(x).
double erfcx(double x);

}  // namespace ala
