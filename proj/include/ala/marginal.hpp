#pragma once

#include <limits>
#include <memory>
#include <string>

#include "ala/data_model.hpp"
#include "ala/families.hpp"
#include "ala/priors.hpp"

namespace ala {

enum class Method {
  kAla,
  kAlaCurvadj,
  kAlaRefined,
  kLa,
  kExactGaussian,
  kQuadrature,
};

/// How the prior enters the ALA. kIntegrated integrates a Normal prior
/// against the quadratic expansion in closed form; kPlugin evaluates the
/// prior density at the one-step Newton point.
enum class PriorEval { kIntegrated, kPlugin };

PriorEval ParsePriorEval(const std::string& name);

struct MarginalScore {
  double log_ml = -std::numeric_limits<double>::infinity();
  Method method = Method::kAla;
  int refine_steps = 0;
  Vector expansion;  ///< eta_0 where the expansion was taken
  int iterations = 0;
  bool jittered = false;
  double rho_hat = 1.0;
  double phi0 = std::numeric_limits<double>::quiet_NaN();
  /// Mean and covariance of the Normal approximation to the posterior
  /// (first dim coordinates of eta); consumed by the gMOM tilt.
  Vector post_mean;
  Matrix post_cov;

  std::string method_name() const;
};

// ---------------------------------------------------------------------------
// Generic engines over an arbitrary twice-differentiable log-likelihood.

class Likelihood {
 public:
  virtual ~Likelihood() = default;
  virtual int dim() const = 0;
  /// log p(y | eta); -inf outside the parameter space.
  virtual double value(const Vector& eta) const = 0;
  /// Gradient and hessian of -log p(y | eta).
  virtual GradHess derivs(const Vector& eta) const = 0;
  /// Sufficient condition for global log-concavity, checked before ALA.
  virtual bool concave() const { return true; }
};

/// eta = beta (known dispersion) or (beta, phi).
class ExpFamLikelihood : public Likelihood {
 public:
  ExpFamLikelihood(FamilySpec family, Matrix Z, Vector y, double offset = 0.0);
  int dim() const override;
  double value(const Vector& eta) const override;
  GradHess derivs(const Vector& eta) const override;

  const FamilySpec& family() const { return family_; }

 private:
  FamilySpec family_;
  Matrix Z_;
  Vector y_;
  double offset_;
};

/// eta = (alpha, tau).
class AftLikelihood : public Likelihood {
 public:
  AftLikelihood(Matrix Z, SurvivalData data);
  int dim() const override { return static_cast<int>(Z_.cols()) + 1; }
  double value(const Vector& eta) const override;
  GradHess derivs(const Vector& eta) const override;
  bool concave() const override;

 private:
  Matrix Z_;
  SurvivalData data_;
};

class ParamPrior {
 public:
  virtual ~ParamPrior() = default;
  virtual double log_density(const Vector& eta) const = 0;
  /// Gradient and hessian of +log density.
  virtual void derivs(const Vector& eta, Vector* grad, Matrix* hess) const = 0;
  /// Non-null when the prior is N(0, P^{-1}) over all of eta.
  virtual const Matrix* normal_precision() const { return nullptr; }
  /// False for non-local priors, which the Laplace baseline refuses.
  virtual bool local() const { return true; }
};

/// N(0, P^{-1}).
class NormalPrior : public ParamPrior {
 public:
  explicit NormalPrior(Matrix precision);
  double log_density(const Vector& eta) const override;
  void derivs(const Vector& eta, Vector* grad, Matrix* hess) const override;
  const Matrix* normal_precision() const override { return &P_; }

 private:
  Matrix P_;
  double logdet_;
};

/// beta | phi ~ N(0, phi P0^{-1}), phi ~ IG(a, b); eta = (beta, phi).
class NormalInvGammaPrior : public ParamPrior {
 public:
  NormalInvGammaPrior(Matrix P0, InverseGamma ig);
  double log_density(const Vector& eta) const override;
  void derivs(const Vector& eta, Vector* grad, Matrix* hess) const override;

 private:
  Matrix P0_;
  double logdet_;
  InverseGamma ig_;
};

/// alpha ~ N(0, P0^{-1}) and phi = tau^{-2} ~ IG(a, b); eta = (alpha, tau).
class AftPrior : public ParamPrior {
 public:
  AftPrior(Matrix P0, InverseGamma ig);
  double log_density(const Vector& eta) const override;
  void derivs(const Vector& eta, Vector* grad, Matrix* hess) const override;

 private:
  Matrix P0_;
  double logdet_;
  InverseGamma ig_;
};

/// gMOM density: Normal kernel N(0, phi W^{-1}) times prod_j q_j, known phi.
class GmomPrior : public ParamPrior {
 public:
  GmomPrior(Matrix W, ModelId model, double phi);
  double log_density(const Vector& eta) const override;
  void derivs(const Vector& eta, Vector* grad, Matrix* hess) const override;
  bool local() const override { return false; }

 private:
  Matrix W_;
  ModelId model_;
  double phi_;
  NormalPrior kernel_;
};

/// p(y|eta0) p(eta~) (2 pi)^{d/2} |H0|^{-1/2} exp(g0' H0^{-1} g0 / 2) in the
/// plug-in form, or the closed-form integral of the quadratic expansion
/// against a Normal prior. Throws NotConcaveAtExpansion.
MarginalScore ala_general(const Likelihood& lik, const ParamPrior& prior,
                          const Vector& eta0,
                          PriorEval mode = PriorEval::kIntegrated);

/// Laplace approximation at the posterior mode found by damped Newton.
MarginalScore la_marginal(const Likelihood& lik, const ParamPrior& prior,
                          const Vector& init);

/// k Newton steps on the log-joint from eta0, then ala_general there.
MarginalScore ala_refined(const Likelihood& lik, const ParamPrior& prior,
                          int k, const Vector& eta0,
                          PriorEval mode = PriorEval::kIntegrated);

/// Laplace approximation of a gMOM integrand at a local mode reached from
/// `init`; a simulation baseline only.
MarginalScore la_gmom_direct(const Likelihood& lik, const GmomPrior& prior,
                             const Vector& init);

// ---------------------------------------------------------------------------
// Cached exponential-family engines, expansion at beta = 0.

/// Per-dataset quantities shared by every model.
struct ExpfamContext {
  std::shared_ptr<const SuffStatsCache> cache;
  FamilySpec family;
  double phi = 1.0;    ///< known phi, or phi0 for unknown dispersion
  double ell0 = 0.0;   ///< log p(y | nu0, phi)
  double rho = 1.0;    ///< over-dispersion scaling, 1 when unadjusted
  bool curvature = false;
  double s = 0.0;      ///< s(phi0), unknown dispersion only

  /// With `curvature`, rho is the Pearson estimate and the cache must be
  /// centred at the intercept MLE.
  static ExpfamContext Make(std::shared_ptr<const SuffStatsCache> cache,
                            const FamilySpec& family, bool curvature = false);
  /// b''(nu0) / (rho phi)
  double kappa() const;
};

struct AlaOptions {
  PriorEval prior_eval = PriorEval::kIntegrated;
  RankPolicy rank = RankPolicy::kJitter;
};

MarginalScore ala_expfam_known_phi(const ExpfamContext& ctx,
                                   const ModelId& model,
                                   const ParamPriorSpec& prior,
                                   const AlaOptions& options = {});
double ala_bf_known_phi(const ExpfamContext& ctx, const ModelId& a,
                        const ModelId& b, const ParamPriorSpec& prior,
                        const AlaOptions& options = {});

/// Closed-form (beta, phi) expansion at (0, phi0). Always plug-in.
MarginalScore ala_expfam_unknown_phi(const ExpfamContext& ctx,
                                     const ModelId& model,
                                     const ParamPriorSpec& prior,
                                     const AlaOptions& options = {});

/// Quantities of the (beta, phi) expansion used by the unknown-phi ALA.
struct UnknownPhiTerms {
  double Q = 0.0;      ///< beta~' A beta~
  double t = 1.0;
  double phi_tilde = 0.0;
  double quad = 0.0;   ///< g0' H0^{-1} g0
  double logdet_h = 0.0;
  Vector beta_tilde;
};
UnknownPhiTerms unknown_phi_terms(const ExpfamContext& ctx,
                                  const SubmodelStats& st,
                                  const ModelId& model,
                                  RankPolicy rank = RankPolicy::kThrow);

struct CurvatureContext {
  double rho_hat = 1.0;
  double nu0 = 0.0;
  double bpp_nu0 = 1.0;
};

/// Pearson over-dispersion at the intercept-only fit. Throws
/// DegenerateResponse for constant y.
CurvatureContext curvature_context(const FamilySpec& family, const Vector& y);

/// Requires a cache centred at the intercept MLE.
double ala_curvadj_bf(const ModelId& a, const ModelId& b,
                      const CurvatureContext& ctx,
                      std::shared_ptr<const SuffStatsCache> cache,
                      const FamilySpec& family, const ParamPriorSpec& prior,
                      const AlaOptions& options = {});

/// log prod_j E[q_j] for the gMOM penalty under a Normal posterior
/// N(m, Sigma); S is Sigma / phi (the penalty-moment scale) and inv_phi is the
/// (expected) inverse dispersion multiplying m' W m.
double gmom_tilt(const ModelId& model, const Matrix& W, const Matrix& S,
                 const Vector& m, double inv_phi);

// ---------------------------------------------------------------------------
// Exact oracles for Gaussian outcomes (cache centred at zero).

/// log p(y | gamma, phi) under beta ~ N(0, phi P0^{-1}), P0 from the prior
/// spec (Zellner, or the gMOM kernel).
double exact_gaussian_marginal(const SuffStatsCache& cache, const ModelId& model,
                               const ParamPriorSpec& prior, double phi);
/// Same with phi ~ IG(a, b) integrated out.
double exact_gaussian_marginal_nig(const SuffStatsCache& cache,
                                   const ModelId& model,
                                   const ParamPriorSpec& prior,
                                   const InverseGamma& ig);
/// Exact log marginal under the gMOM prior, known phi, by Gaussian product
/// moments of the posterior under the Normal kernel.
double exact_gmom_gaussian(const SuffStatsCache& cache, const ModelId& model,
                           double g, double phi);

/// E[prod_k x_k^{a_k}] for x ~ N(mu, Sigma).
double gaussian_product_moment(const Vector& mu, const Matrix& Sigma,
                               const std::vector<int>& exponents);

}  // namespace ala
