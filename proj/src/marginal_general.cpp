#include <cmath>
#include <sstream>

#include "ala/errors.hpp"
#include "ala/marginal.hpp"

namespace ala {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

SpdFactor ConcaveFactor(const Matrix& m, const char* where) {
  try {
    return spd_factor(m);
  } catch (const NotInvertible&) {
    throw NotConcaveAtExpansion(std::string(where) +
                                ": negative hessian is not positive definite");
  }
}

double LogJoint(const Likelihood& lik, const ParamPrior& prior,
                const Vector& eta) {
  const double l = lik.value(eta);
  if (!std::isfinite(l)) return kNegInf;
  const double p = prior.log_density(eta);
  return std::isfinite(p) ? l + p : kNegInf;
}

// Gradient of the log-joint and hessian of its negative.
void JointDerivs(const Likelihood& lik, const ParamPrior& prior,
                 const Vector& eta, Vector* grad, Matrix* neg_hess) {
  const GradHess gh = lik.derivs(eta);
  Vector pg;
  Matrix ph;
  prior.derivs(eta, &pg, &ph);
  *grad = pg - gh.grad;
  *neg_hess = gh.hess - ph;
}

struct NewtonResult {
  Vector eta;
  int iterations = 0;
};

// Damped Newton ascent on the log-joint. With `shift`, a non-positive-definite
// hessian is regularized by a growing multiple of the identity.
NewtonResult Maximize(const Likelihood& lik, const ParamPrior& prior,
                      const Vector& init, bool shift) {
  constexpr int kMaxIter = 100;
  NewtonResult out{init, 0};
  double f = LogJoint(lik, prior, out.eta);
  if (!std::isfinite(f)) {
    throw DomainError("Laplace: log-integrand is not finite at the initial point");
  }
  std::ostringstream trace;
  for (int it = 0; it < kMaxIter; ++it) {
    Vector G;
    Matrix Hn;
    JointDerivs(lik, prior, out.eta, &G, &Hn);
    const double gnorm = G.norm();
    trace << " " << gnorm;
    if (gnorm <= 1e-8) return out;
    Vector step;
    Eigen::LLT<Matrix> llt(Hn);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0)) {
      if (!shift) {
        throw NotConcaveAtExpansion("Laplace: log-integrand is not concave at iteration " +
                                    std::to_string(it));
      }
      double lambda = 1e-6 * (1.0 + Hn.diagonal().cwiseAbs().maxCoeff());
      for (;;) {
        llt.compute(Hn + lambda * Matrix::Identity(Hn.rows(), Hn.cols()));
        if (llt.info() == Eigen::Success) break;
        lambda *= 10.0;
      }
    }
    step = llt.solve(G);
    double t = 1.0;
    bool moved = false;
    for (int h = 0; h < 60; ++h, t *= 0.5) {
      const Vector cand = out.eta + t * step;
      const double fc = LogJoint(lik, prior, cand);
      if (std::isfinite(fc) && fc >= f - 1e-12 * std::abs(f)) {
        const bool tiny = (t * step).cwiseAbs().maxCoeff() <=
                          1e-14 * (1.0 + out.eta.cwiseAbs().maxCoeff());
        out.eta = cand;
        f = fc;
        moved = !tiny;
        break;
      }
    }
    out.iterations = it + 1;
    if (!moved) {
      // The step has reached floating-point resolution.
      if (gnorm <= 1e-5 * (1.0 + std::abs(f))) return out;
      throw NoConvergence("Laplace: line search failed; gradient norms" + trace.str());
    }
  }
  throw NoConvergence("Laplace: no convergence in 100 iterations; gradient norms" +
                      trace.str());
}

MarginalScore LaplaceAt(const Likelihood& lik, const ParamPrior& prior,
                        const NewtonResult& r) {
  Vector G;
  Matrix Hn;
  JointDerivs(lik, prior, r.eta, &G, &Hn);
  const SpdFactor f = ConcaveFactor(Hn, "Laplace");
  MarginalScore out;
  out.method = Method::kLa;
  out.expansion = r.eta;
  out.iterations = r.iterations;
  out.log_ml = LogJoint(lik, prior, r.eta) + 0.5 * r.eta.size() * kLog2Pi -
               0.5 * f.logdet;
  out.post_mean = r.eta;
  out.post_cov = f.llt.solve(Matrix::Identity(Hn.rows(), Hn.cols()));
  return out;
}

}  // namespace

PriorEval ParsePriorEval(const std::string& name) {
  if (name == "integrated") return PriorEval::kIntegrated;
  if (name == "plugin") return PriorEval::kPlugin;
  throw ConfigError("unknown prior evaluation '" + name + "' (integrated | plugin)");
}

std::string MarginalScore::method_name() const {
  switch (method) {
    case Method::kAla: return "ala";
    case Method::kAlaCurvadj: return "ala-curvadj";
    case Method::kAlaRefined: return "ala-refined(" + std::to_string(refine_steps) + ")";
    case Method::kLa: return "la";
    case Method::kExactGaussian: return "exact-gaussian";
    case Method::kQuadrature: return "quadrature";
  }
  return "unknown";
}

ExpFamLikelihood::ExpFamLikelihood(FamilySpec family, Matrix Z, Vector y,
                                   double offset)
    : family_(family), Z_(std::move(Z)), y_(std::move(y)), offset_(offset) {
  if (!family_.is_expfam()) throw ConfigError("ExpFamLikelihood needs an exponential family");
}

int ExpFamLikelihood::dim() const {
  return static_cast<int>(Z_.cols()) + (family_.dispersion_known() ? 0 : 1);
}

double ExpFamLikelihood::value(const Vector& eta) const {
  const Eigen::Index p = Z_.cols();
  const double phi = family_.dispersion_known() ? family_.phi : eta[p];
  if (!(phi > 0)) return kNegInf;
  const Vector lin = (Z_ * eta.head(p)).array() + offset_;
  return loglik(family_, lin, y_, phi);
}

GradHess ExpFamLikelihood::derivs(const Vector& eta) const {
  const Eigen::Index p = Z_.cols();
  const double phi = family_.dispersion_known() ? family_.phi : eta[p];
  return grad_hess(family_, eta.head(p), phi, Z_, y_, offset_);
}

AftLikelihood::AftLikelihood(Matrix Z, SurvivalData data)
    : Z_(std::move(Z)), data_(std::move(data)) {}

double AftLikelihood::value(const Vector& eta) const {
  const Eigen::Index p = Z_.cols();
  if (!(eta[p] > 0)) return kNegInf;
  return aft_loglik({eta.head(p), eta[p]}, Z_, data_);
}

GradHess AftLikelihood::derivs(const Vector& eta) const {
  const Eigen::Index p = Z_.cols();
  AftEval e = aft_loglik_grad_hess({eta.head(p), eta[p]}, Z_, data_);
  return {std::move(e.grad), std::move(e.hess)};
}

bool AftLikelihood::concave() const { return aft_concavity_check(Z_, data_); }

NormalPrior::NormalPrior(Matrix precision) : P_(std::move(precision)) {
  logdet_ = spd_factor(P_).logdet;
}

double NormalPrior::log_density(const Vector& eta) const {
  return -0.5 * eta.size() * kLog2Pi + 0.5 * logdet_ - 0.5 * eta.dot(P_ * eta);
}

void NormalPrior::derivs(const Vector& eta, Vector* grad, Matrix* hess) const {
  *grad = -P_ * eta;
  *hess = -P_;
}

NormalInvGammaPrior::NormalInvGammaPrior(Matrix P0, InverseGamma ig)
    : P0_(std::move(P0)), ig_(ig) {
  logdet_ = spd_factor(P0_).logdet;
}

double NormalInvGammaPrior::log_density(const Vector& eta) const {
  const Eigen::Index p = P0_.rows();
  const double phi = eta[p];
  if (!(phi > 0)) return kNegInf;
  const Vector beta = eta.head(p);
  return -0.5 * p * (kLog2Pi + std::log(phi)) + 0.5 * logdet_ -
         0.5 * beta.dot(P0_ * beta) / phi + ig_.log_density(phi);
}

void NormalInvGammaPrior::derivs(const Vector& eta, Vector* grad,
                                 Matrix* hess) const {
  const Eigen::Index p = P0_.rows();
  const double phi = eta[p];
  const Vector beta = eta.head(p);
  const Vector Pb = P0_ * beta;
  const double q = beta.dot(Pb);
  grad->resize(p + 1);
  hess->resize(p + 1, p + 1);
  grad->head(p) = -Pb / phi;
  (*grad)[p] = -0.5 * p / phi + 0.5 * q / (phi * phi) - (ig_.a + 1.0) / phi +
               ig_.b / (phi * phi);
  hess->topLeftCorner(p, p) = -P0_ / phi;
  hess->col(p).head(p) = Pb / (phi * phi);
  hess->row(p).head(p) = (Pb / (phi * phi)).transpose();
  (*hess)(p, p) = 0.5 * p / (phi * phi) - q / (phi * phi * phi) +
                  (ig_.a + 1.0) / (phi * phi) - 2.0 * ig_.b / (phi * phi * phi);
}

AftPrior::AftPrior(Matrix P0, InverseGamma ig) : P0_(std::move(P0)), ig_(ig) {
  logdet_ = spd_factor(P0_).logdet;
}

double AftPrior::log_density(const Vector& eta) const {
  const Eigen::Index p = P0_.rows();
  const double tau = eta[p];
  if (!(tau > 0)) return kNegInf;
  const Vector alpha = eta.head(p);
  return -0.5 * p * kLog2Pi + 0.5 * logdet_ - 0.5 * alpha.dot(P0_ * alpha) +
         ig_.a * std::log(ig_.b) - std::lgamma(ig_.a) + std::log(2.0) +
         (2.0 * ig_.a - 1.0) * std::log(tau) - ig_.b * tau * tau;
}

void AftPrior::derivs(const Vector& eta, Vector* grad, Matrix* hess) const {
  const Eigen::Index p = P0_.rows();
  const double tau = eta[p];
  grad->resize(p + 1);
  hess->setZero(p + 1, p + 1);
  grad->head(p) = -P0_ * eta.head(p);
  (*grad)[p] = (2.0 * ig_.a - 1.0) / tau - 2.0 * ig_.b * tau;
  hess->topLeftCorner(p, p) = -P0_;
  (*hess)(p, p) = -(2.0 * ig_.a - 1.0) / (tau * tau) - 2.0 * ig_.b;
}

GmomPrior::GmomPrior(Matrix W, ModelId model, double phi)
    : W_(std::move(W)), model_(std::move(model)), phi_(phi), kernel_(W_ / phi) {}

double GmomPrior::log_density(const Vector& eta) const {
  const double pen = log_gmom_penalty(eta, phi_, W_, model_);
  return std::isfinite(pen) ? kernel_.log_density(eta) + pen : kNegInf;
}

void GmomPrior::derivs(const Vector& eta, Vector* grad, Matrix* hess) const {
  kernel_.derivs(eta, grad, hess);
  for (const GroupRange& r : local_blocks(model_)) {
    const Matrix Wj = W_.block(r.begin, r.begin, r.size(), r.size());
    const Vector wb = Wj * eta.segment(r.begin, r.size());
    const double q = eta.segment(r.begin, r.size()).dot(wb);
    grad->segment(r.begin, r.size()) += 2.0 * wb / q;
    hess->block(r.begin, r.begin, r.size(), r.size()) +=
        2.0 * Wj / q - 4.0 * wb * wb.transpose() / (q * q);
  }
}

MarginalScore ala_general(const Likelihood& lik, const ParamPrior& prior,
                          const Vector& eta0, PriorEval mode) {
  if (!lik.concave()) {
    throw NotConcaveAtExpansion("log-likelihood concavity condition fails");
  }
  const int d = lik.dim();
  const double ell0 = lik.value(eta0);
  if (!std::isfinite(ell0)) {
    throw DomainError("ALA: log-likelihood is not finite at the expansion point");
  }
  MarginalScore out;
  out.expansion = eta0;
  if (d == 0) {
    out.log_ml = ell0 + prior.log_density(eta0);
    out.post_mean = Vector(0);
    out.post_cov = Matrix(0, 0);
    return out;
  }
  const GradHess gh = lik.derivs(eta0);
  const Matrix* P = prior.normal_precision();
  if (mode == PriorEval::kIntegrated && P != nullptr) {
    const Matrix M = gh.hess + *P;
    const SpdFactor fm = ConcaveFactor(M, "ALA");
    const double logdet_p = spd_factor(*P).logdet;
    const Vector r = gh.hess * eta0 - gh.grad;
    out.post_mean = fm.llt.solve(r);
    out.post_cov = fm.llt.solve(Matrix::Identity(d, d));
    out.log_ml = ell0 + gh.grad.dot(eta0) - 0.5 * eta0.dot(gh.hess * eta0) +
                 0.5 * r.dot(out.post_mean) + 0.5 * logdet_p - 0.5 * fm.logdet;
    return out;
  }
  const SpdFactor fh = ConcaveFactor(gh.hess, "ALA");
  const Vector step = fh.llt.solve(gh.grad);
  const Vector eta_t = eta0 - step;
  out.post_mean = eta_t;
  out.post_cov = fh.llt.solve(Matrix::Identity(d, d));
  out.log_ml = ell0 + prior.log_density(eta_t) + 0.5 * d * kLog2Pi -
               0.5 * fh.logdet + 0.5 * gh.grad.dot(step);
  return out;
}

MarginalScore la_marginal(const Likelihood& lik, const ParamPrior& prior,
                          const Vector& init) {
  if (!prior.local()) {
    throw ConfigError("the Laplace baseline is only defined for local priors");
  }
  if (lik.dim() == 0) {
    MarginalScore out = ala_general(lik, prior, init);
    out.method = Method::kLa;
    return out;
  }
  return LaplaceAt(lik, prior, Maximize(lik, prior, init, false));
}

MarginalScore ala_refined(const Likelihood& lik, const ParamPrior& prior, int k,
                          const Vector& eta0, PriorEval mode) {
  if (k < 0) throw ConfigError("refinement steps must be non-negative");
  Vector eta = eta0;
  for (int step = 0; step < k && lik.dim() > 0; ++step) {
    Vector G;
    Matrix Hn;
    JointDerivs(lik, prior, eta, &G, &Hn);
    Eigen::LLT<Matrix> llt(Hn);
    if (llt.info() != Eigen::Success) {
      throw NoConvergence("refinement step " + std::to_string(step + 1) +
                          ": log-joint hessian is not negative definite");
    }
    const Vector delta = llt.solve(G);
    double t = 1.0;
    Vector cand = eta + delta;
    // Stay inside the parameter space (phi, tau > 0).
    for (int h = 0; h < 40 && !std::isfinite(LogJoint(lik, prior, cand)); ++h) {
      t *= 0.5;
      cand = eta + t * delta;
    }
    if (!cand.allFinite() || !std::isfinite(LogJoint(lik, prior, cand))) {
      std::ostringstream msg;
      msg << "refinement step " << step + 1 << " left the parameter space; last "
          << "finite point has |eta| = " << eta.norm();
      throw NoConvergence(msg.str());
    }
    eta = cand;
  }
  MarginalScore out = ala_general(lik, prior, eta, mode);
  out.method = Method::kAlaRefined;
  out.refine_steps = k;
  return out;
}

MarginalScore la_gmom_direct(const Likelihood& lik, const GmomPrior& prior,
                             const Vector& init) {
  MarginalScore out = LaplaceAt(lik, prior, Maximize(lik, prior, init, true));
  return out;
}

}  // namespace ala
